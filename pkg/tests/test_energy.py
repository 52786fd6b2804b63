import numpy as np
import pytest

import platelike as pl
from platelike.energy import PeriodicField
from platelike.errors import GridMismatchError, PreconditionError

from _oracle import (oracle_auxiliary_energy, oracle_cross_term,
                     oracle_effective_kernel, oracle_kinetic,
                     oracle_potential, oracle_total_energy, oracle_value_at)

REL = 1e-12


def rel_close(a, b, scale=None):
    s = scale if scale is not None else max(abs(a), abs(b), 1e-30)
    return abs(a - b) <= REL * s


def random_field(grid, rng, clamps=(1.0, -1.0)):
    return PeriodicField(grid, rng.uniform(-1, 1, grid.n_sites),
                         clamp_below=clamps[0], clamp_above=clamps[1])


class TestValueLookup:
    def test_matches_oracle_on_random_points(self, hetero_setup):
        _, grid, _, _, _ = hetero_setup
        rng = np.random.default_rng(1)
        u = random_field(grid, rng)
        pts = rng.integers(-30, 30, size=(50, grid.n))
        got = u.value_at(pts)
        want = [oracle_value_at(u, tuple(int(c) for c in p)) for p in pts]
        assert np.allclose(got, want, rtol=0, atol=0)

    def test_periodicity(self, small_setup):
        _, grid, _, _, _ = small_setup
        rng = np.random.default_rng(2)
        u = random_field(grid, rng)
        z = np.asarray(grid.direction.basis[0]) * grid.mprime
        assert np.array_equal(u.value_at(grid.site_xi),
                              u.value_at(grid.site_xi + z[None, :]))


class TestKinetic:
    def test_constant_field_zero(self, small_setup):
        _, grid, _, _, model = small_setup
        u = PeriodicField.constant(grid, 1.0)
        val = model.kinetic(u, grid.site_xi, grid.site_xi)
        assert val == 0.0

    def test_two_point_hand_sum_far_pair(self, small_setup):
        # distance 2 > 2h, so the raw kernel applies: (1/2) h^{2n} |du|^2 K
        _, grid, kernel, _, model = small_setup
        u = PeriodicField(grid, np.zeros(grid.n_sites))
        a = grid.site_xi[grid.site_index((0, 0))]
        b = (0, 4)  # distance 2 at h = 1/2
        u.values[grid.site_index(a)] = 1.0
        u.values[grid.site_index(b)] = -1.0
        got = model.kinetic(u, np.array([a]), np.array([b]))
        want = 0.5 * grid.h ** 4 * 4.0 * 2.0 ** (-2 - 2 * kernel.s)
        assert got == pytest.approx(want, rel=1e-14)

    def test_near_pair_uses_cell_average(self, small_setup):
        _, grid, kernel, _, model = small_setup
        u = PeriodicField(grid, np.zeros(grid.n_sites))
        a = np.asarray((0, 0))
        b = np.asarray((0, 1))  # distance h
        u.values[grid.site_index(a)] = 1.0
        u.values[grid.site_index(b)] = -1.0
        got = model.kinetic(u, a[None, :], b[None, :])
        keff = oracle_effective_kernel(kernel, (0.0, 0.0), (0.0, 0.5), grid.h)
        assert got == pytest.approx(0.5 * grid.h ** 4 * 4.0 * keff, rel=1e-14)
        kraw = 0.5 ** (-2 - 2 * kernel.s)
        assert got != pytest.approx(0.5 * grid.h ** 4 * 4.0 * kraw, rel=1e-3)

    def test_symmetry_in_arguments(self, hetero_setup):
        _, grid, _, _, model = hetero_setup
        rng = np.random.default_rng(3)
        u = random_field(grid, rng)
        iu = rng.choice(grid.n_sites, 8, replace=False)
        iv = rng.choice(grid.n_sites, 9, replace=False)
        U, V = grid.site_xi[iu], grid.site_xi[iv]
        assert model.kinetic(u, U, V) == pytest.approx(model.kinetic(u, V, U),
                                                       rel=1e-12)

    def test_matches_oracle(self, hetero_setup):
        _, grid, kernel, _, model = hetero_setup
        rng = np.random.default_rng(4)
        u = random_field(grid, rng)
        U = grid.site_xi[rng.choice(grid.n_sites, 10, replace=False)]
        V = grid.site_xi[rng.choice(grid.n_sites, 12, replace=False)]
        got = model.kinetic(u, U, V)
        want = oracle_kinetic(u, kernel, model.r_cut, U.tolist(), V.tolist())
        assert rel_close(got, want, scale=max(abs(want), 1.0))


class TestPotentialTerm:
    def test_pure_phases_vanish(self, small_setup):
        _, grid, _, _, model = small_setup
        for v in (1.0, -1.0):
            u = PeriodicField.constant(grid, v)
            assert model.potential_term(u, grid.site_xi) == 0.0

    def test_single_site_unit_value(self, axis_direction):
        strip = pl.Strip(0.0, 4.0, axis_direction)
        grid = pl.build_grid(strip, 1.0, 2.0)
        model = pl.EnergyModel(pl.KernelSpec.homogeneous(0.5),
                               pl.PotentialSpec.quartic(2.0), r_cut=2.0)
        u = PeriodicField.constant(grid, 0.0)
        site = grid.site_xi[:1]
        assert model.potential_term(u, site) == pytest.approx(1.0)

    def test_additive_over_disjoint_sets(self, hetero_setup):
        _, grid, _, potential, model = hetero_setup
        rng = np.random.default_rng(5)
        u = random_field(grid, rng)
        idx = rng.permutation(grid.n_sites)
        a, b = grid.site_xi[idx[:10]], grid.site_xi[idx[10:25]]
        both = np.vstack([a, b])
        assert (model.potential_term(u, a) + model.potential_term(u, b)
                == pytest.approx(model.potential_term(u, both), rel=1e-14))

    def test_matches_oracle(self, hetero_setup):
        _, grid, _, potential, model = hetero_setup
        rng = np.random.default_rng(6)
        u = random_field(grid, rng)
        pts = grid.site_xi[rng.choice(grid.n_sites, 20, replace=False)]
        got = model.potential_term(u, pts)
        want = oracle_potential(u, potential, pts.tolist())
        assert rel_close(got, want, scale=max(abs(want), 1.0))


class TestTotalEnergy:
    def test_constant_matching_clamps_zero(self, small_setup):
        _, grid, kernel, potential, _ = small_setup
        model = pl.EnergyModel(kernel, potential, r_cut=2.5)
        u = PeriodicField.constant(grid, 1.0, clamp_below=1.0, clamp_above=1.0)
        rep = model.total_energy(u)
        assert rep.total == 0.0 and rep.tail_error == 0.0

    def test_monotone_under_inclusion(self, hetero_setup):
        _, grid, _, _, model = hetero_setup
        rng = np.random.default_rng(7)
        u = random_field(grid, rng)
        small = grid.site_xi[:15]
        large = grid.site_xi[:40]
        assert model.total_energy(u, small).total <= model.total_energy(u, large).total

    def test_report_consistency(self, hetero_setup):
        _, grid, _, _, model = hetero_setup
        rng = np.random.default_rng(8)
        u = random_field(grid, rng)
        rep = model.total_energy(u, grid.site_xi[:30])
        assert rep.total == rep.kinetic_same + 2 * rep.kinetic_cross + rep.potential
        assert rep.kinetic_same >= 0 and rep.kinetic_cross >= 0 and rep.potential >= 0

    @pytest.mark.parametrize("setup_name", ["small_setup", "hetero_setup"])
    def test_matches_oracle(self, setup_name, request):
        _, grid, kernel, potential, model = request.getfixturevalue(setup_name)
        rng = np.random.default_rng(9)
        u = random_field(grid, rng)
        pts = grid.site_xi[rng.choice(grid.n_sites, 12, replace=False)]
        rep = model.total_energy(u, pts)
        ks, kc, pot, total = oracle_total_energy(u, kernel, potential,
                                                 model.r_cut, pts.tolist())
        assert rel_close(rep.kinetic_same, ks, scale=max(total, 1.0))
        assert rel_close(rep.kinetic_cross, kc, scale=max(total, 1.0))
        assert rel_close(rep.potential, pot, scale=max(total, 1.0))
        assert rel_close(rep.total, total, scale=max(total, 1.0))

    def test_three_site_chain_oracle(self, axis_direction):
        strip = pl.Strip(0.0, 4.0, axis_direction)
        grid = pl.build_grid(strip, 1.0, 2.0)
        model = pl.EnergyModel(pl.KernelSpec.homogeneous(0.5),
                               pl.PotentialSpec.quartic(2.0), r_cut=3.0)
        rng = np.random.default_rng(10)
        u = random_field(grid, rng)
        chain = np.array([[0, 0], [0, 1], [0, 2]])
        rep = model.total_energy(u, chain)
        ks, kc, pot, total = oracle_total_energy(
            u, model.kernel, model.potential, model.r_cut, chain.tolist())
        assert rel_close(rep.total, total, scale=max(total, 1.0))

    def test_refining_cutoff_within_tail_error(self, small_setup):
        strip, grid, kernel, potential, _ = small_setup
        coarse = pl.EnergyModel(kernel, potential, r_cut=2.5)
        fine = pl.EnergyModel(kernel, potential, r_cut=5.0)
        u = pl.linear_seed(grid, strip)
        e1 = coarse.total_energy(u, grid.site_xi[:20])
        e2 = fine.total_energy(u, grid.site_xi[:20])
        assert abs(e2.total - e1.total) < e1.tail_error


class TestAuxiliaryEnergy:
    def test_constant_field_with_matching_clamps(self, small_setup):
        _, grid, _, _, model = small_setup
        u = PeriodicField.constant(grid, -1.0, clamp_below=-1.0, clamp_above=-1.0)
        assert model.auxiliary_energy(u).total == 0.0

    @pytest.mark.parametrize("setup_name", ["small_setup", "hetero_setup"])
    def test_matches_oracle(self, setup_name, request):
        _, grid, kernel, potential, model = request.getfixturevalue(setup_name)
        rng = np.random.default_rng(11)
        u = random_field(grid, rng)
        got = model.auxiliary_energy(u).total
        want = oracle_auxiliary_energy(u, kernel, potential, model.r_cut)
        assert rel_close(got, want, scale=max(abs(want), 1.0))

    def test_linear_profile_truncated_kernel(self, axis_direction):
        strip = pl.Strip(0.0, 4.0, axis_direction)
        grid = pl.build_grid(strip, 0.5, 2.0)
        kernel = pl.kernel_truncate(pl.KernelSpec.homogeneous(0.25), 2.0)
        potential = pl.PotentialSpec.quartic(2.0)
        model = pl.EnergyModel(kernel, potential, r_cut=2.5)
        u = pl.linear_seed(grid, strip)
        got = model.auxiliary_energy(u)
        want = oracle_auxiliary_energy(u, kernel, potential, model.r_cut)
        assert np.isfinite(got.total)
        assert rel_close(got.total, want, scale=max(abs(want), 1.0))
        assert got.tail_error == 0.0  # truncation inside the cutoff

    def test_m_fold_quotient_scales_energy(self, small_setup):
        strip, grid, kernel, potential, model = small_setup
        gridm = pl.build_grid(strip, grid.h, 2.0, m=(3,))
        u = pl.linear_seed(grid, strip)
        tiled = PeriodicField(gridm, u.value_at(gridm.site_xi))
        e1 = model.auxiliary_energy(u).total
        em = model.auxiliary_energy(tiled).total
        assert em == pytest.approx(3.0 * e1, rel=1e-12)


class TestGradient:
    def test_uniform_zero_field_critical(self, small_setup):
        _, grid, _, _, model = small_setup
        u = PeriodicField.constant(grid, 0.0, clamp_below=0.0, clamp_above=0.0)
        g = model.energy_gradient(u)
        assert np.max(np.abs(g)) == 0.0

    @pytest.mark.parametrize("setup_name", ["small_setup", "hetero_setup"])
    def test_finite_difference(self, setup_name, request):
        _, grid, _, _, model = request.getfixturevalue(setup_name)
        rng = np.random.default_rng(12)
        u = random_field(grid, rng)
        g = model.energy_gradient(u)
        eps = 1e-5
        for i in rng.choice(grid.n_sites, 8, replace=False):
            vp, vm = u.values.copy(), u.values.copy()
            vp[i] += eps
            vm[i] -= eps
            fd = (model.auxiliary_energy(u.with_values(vp)).total
                  - model.auxiliary_energy(u.with_values(vm)).total) / (2 * eps)
            assert abs(fd - g[i]) <= 1e-6

    def test_el_residual_scales_gradient(self, small_setup):
        _, grid, _, _, model = small_setup
        rng = np.random.default_rng(13)
        u = random_field(grid, rng)
        interior = np.arange(5, 15)
        res = model.el_residual(u, interior)
        g = model.energy_gradient(u)
        assert np.allclose(res, g[interior] / grid.h ** grid.n, rtol=1e-14)


class TestCrossTerm:
    def _phi(self, grid, sites_vals):
        vals = np.zeros(grid.n_sites)
        for site, v in sites_vals:
            vals[grid.site_index(site)] = v
        return PeriodicField(grid, vals, clamp_below=0.0, clamp_above=0.0)

    def test_zero_perturbation(self, small_setup):
        _, grid, _, _, model = small_setup
        phi = self._phi(grid, [])
        assert model.cross_term(phi) == 0.0

    def test_single_site_matches_hand_enumeration(self, hetero_setup):
        _, grid, kernel, _, model = hetero_setup
        inner = grid.site_xi[np.all(grid.site_xi @ grid._reducer.r_mat.T != 0, axis=1)]
        mid = inner[len(inner) // 2]
        phi = self._phi(grid, [(mid, 0.7)])
        got = model.cross_term(phi)
        want = oracle_cross_term(phi, kernel, model.r_cut)
        assert rel_close(got, want, scale=max(abs(want), 1e-6))

    def test_sign_definite_nonnegative(self, small_setup):
        _, grid, _, _, model = small_setup
        rng = np.random.default_rng(14)
        nu = grid.site_xi @ grid._reducer.r_mat.T
        ok = np.nonzero(np.all(nu != 0, axis=1))[0]
        vals = np.zeros(grid.n_sites)
        vals[rng.choice(ok, 6, replace=False)] = rng.uniform(0.1, 0.5, 6)
        phi = PeriodicField(grid, vals, clamp_below=0.0, clamp_above=0.0)
        assert model.cross_term(phi) >= 0.0

    def test_matches_oracle_random_support(self, small_setup):
        _, grid, kernel, _, model = small_setup
        rng = np.random.default_rng(15)
        nu = grid.site_xi @ grid._reducer.r_mat.T
        ok = np.nonzero(np.all(nu != 0, axis=1))[0]
        vals = np.zeros(grid.n_sites)
        vals[rng.choice(ok, 8, replace=False)] = rng.uniform(-0.5, 0.5, 8)
        phi = PeriodicField(grid, vals, clamp_below=0.0, clamp_above=0.0)
        got = model.cross_term(phi)
        want = oracle_cross_term(phi, kernel, model.r_cut)
        assert rel_close(got, want, scale=max(abs(want), 1e-6))

    def test_lateral_boundary_rejected(self, small_setup):
        _, grid, _, _, model = small_setup
        nu = grid.site_xi @ grid._reducer.r_mat.T
        edge = np.nonzero(np.any(nu == 0, axis=1))[0]
        vals = np.zeros(grid.n_sites)
        vals[edge[0]] = 0.3
        phi = PeriodicField(grid, vals, clamp_below=0.0, clamp_above=0.0)
        with pytest.raises(PreconditionError):
            model.cross_term(phi)


class TestMinMaxInequality:
    def test_kinetic_inequality_and_potential_identity(self, hetero_setup):
        _, grid, _, _, model = hetero_setup
        rng = np.random.default_rng(16)
        for _ in range(20):
            u = random_field(grid, rng)
            v = random_field(grid, rng)
            lo = u.with_values(np.minimum(u.values, v.values))
            hi = u.with_values(np.maximum(u.values, v.values))
            U = grid.site_xi[rng.choice(grid.n_sites, 10, replace=False)]
            V = grid.site_xi[rng.choice(grid.n_sites, 10, replace=False)]
            k_min = model.kinetic(lo, U, V)
            k_max = model.kinetic(hi, U, V)
            k_u = model.kinetic(u, U, V)
            k_v = model.kinetic(v, U, V)
            assert k_min + k_max <= k_u + k_v + 1e-12 * max(1.0, k_u + k_v)
            p = (model.potential_term(lo, U) + model.potential_term(hi, U)
                 - model.potential_term(u, U) - model.potential_term(v, U))
            assert abs(p) <= 5e-14 * max(1.0, model.potential_term(u, U))


class TestFieldValidation:
    def test_wrong_length_rejected(self, small_setup):
        _, grid, _, _, _ = small_setup
        with pytest.raises(GridMismatchError):
            PeriodicField(grid, np.zeros(grid.n_sites + 1))
