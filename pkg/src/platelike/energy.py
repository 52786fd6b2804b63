"""Discrete localized and periodic-auxiliary energies.

The localized energy of a field u on a site set Omega is

    E(u; Omega) = K(u; Omega, Omega) + 2 K(u; Omega, complement) + P(u; Omega),

with K the halved double sum of |u(x)-u(y)|^2 against the kernel and P the
potential sum.  The auxiliary functional folds the y-sum over the periodic
images of one fundamental domain plus the clamped far field.  Interactions
between two clamped points are constant in u and dropped everywhere, so all
reported energies are relative to the clamped background, and all kinetic
sums run over pairs with |x - y| <= R_cut (the recorded tail_error bounds
what the cutoff discards).

Near-diagonal pairs (|x-y| <= 2h) use a symmetrized 3^n-point midpoint cell
average of the kernel; the two-sided average keeps the discrete kernel
symmetric for heterogeneous media.  All sums are accumulated in fixed-size
chunks combined in index order, so results do not depend on thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from typing import Optional

import numba
import numpy as np

from .errors import GridMismatchError, PreconditionError
from .geometry import Grid
from .media import KernelSpec, PotentialSpec

__all__ = ["PeriodicField", "EnergyReport", "EnergyModel", "set_threads"]

SITE_CHUNK = 1024
_THREADS = 1


def set_threads(n: int) -> None:
    """Worker count for chunked sums; results are identical for any value."""
    global _THREADS
    _THREADS = max(1, int(n))


def get_threads() -> int:
    return _THREADS


def _run_chunks(worker, n_items: int, chunk: int = SITE_CHUNK):
    """Apply worker to fixed [lo, hi) chunks and return results in order."""
    bounds = [(lo, min(lo + chunk, n_items)) for lo in range(0, n_items, chunk)]
    if _THREADS == 1 or len(bounds) <= 1:
        return [worker(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=_THREADS) as pool:
        futs = [pool.submit(worker, lo, hi) for lo, hi in bounds]
        return [f.result() for f in futs]


@dataclass(eq=False)
class PeriodicField:
    """Field values on the live sites of a grid, with clamped far field."""

    grid: Grid
    values: np.ndarray
    theta: float = 0.9
    clamp_below: float = 1.0
    clamp_above: float = -1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n_sites,):
            raise GridMismatchError("value array does not match the grid size")

    @classmethod
    def constant(cls, grid: Grid, value: float, **kw) -> "PeriodicField":
        return cls(grid, np.full(grid.n_sites, float(value)), **kw)

    def copy(self) -> "PeriodicField":
        return replace(self, values=self.values.copy())

    def with_values(self, values: np.ndarray) -> "PeriodicField":
        return replace(self, values=np.asarray(values, dtype=np.float64))

    def value_at(self, xi):
        """Field value at arbitrary grid points, via coset reduction."""
        xi = np.asarray(xi, dtype=np.int64)
        idx, clamp = self.grid.reduce_points(np.atleast_2d(xi))
        out = np.empty(idx.shape[0], dtype=np.float64)
        live = idx >= 0
        out[live] = self.values[idx[live]]
        out[clamp > 0] = self.clamp_below
        out[clamp < 0] = self.clamp_above
        if xi.ndim == 1:
            return float(out[0])
        return out


@dataclass(frozen=True)
class EnergyReport:
    """Kinetic/potential split of a localized energy value."""

    kinetic_same: float
    kinetic_cross: float
    potential: float
    total: float
    tail_error: float

    CSV_HEADER = "label,kinetic_same,kinetic_cross,potential,total,tail_error"

    @classmethod
    def compose(cls, kinetic_same, kinetic_cross, potential, tail_error) -> "EnergyReport":
        return cls(
            kinetic_same=kinetic_same,
            kinetic_cross=kinetic_cross,
            potential=potential,
            total=kinetic_same + 2.0 * kinetic_cross + potential,
            tail_error=tail_error,
        )

    def csv_row(self, label: str) -> str:
        return ",".join([label] + [repr(v) for v in (
            self.kinetic_same, self.kinetic_cross, self.potential,
            self.total, self.tail_error)])


def _offsets_within(n: int, h: float, r_cut: float) -> tuple[np.ndarray, np.ndarray]:
    reach = int(math.floor(r_cut / h + 1e-9))
    axes = [np.arange(-reach, reach + 1, dtype=np.int64)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    eta = np.stack([g.ravel() for g in mesh], axis=1)
    dist = np.sqrt(np.sum((eta * h) ** 2, axis=1))
    keep = (dist > 0) & (dist <= r_cut * (1 + 1e-12))
    return eta[keep], dist[keep]


@numba.njit(cache=True, nogil=True)
def _row_pair_sums(u_ext, idx_ext, islive, kvals, lo, hi, out_live, out_clamp):
    # per-row sequential accumulation keeps results independent of chunking
    for i in range(lo, hi):
        acc_live = 0.0
        acc_clamp = 0.0
        ui = u_ext[i]
        for j in range(idx_ext.shape[1]):
            d = ui - u_ext[idx_ext[i, j]]
            c = d * d * kvals[i, j]
            if islive[i, j]:
                acc_live += c
            else:
                acc_clamp += c
        out_live[i] = acc_live
        out_clamp[i] = acc_clamp


@numba.njit(cache=True, nogil=True)
def _row_grad_sums(u_ext, idx_ext, kvals, lo, hi, out):
    for i in range(lo, hi):
        acc = 0.0
        ui = u_ext[i]
        for j in range(idx_ext.shape[1]):
            acc += (ui - u_ext[idx_ext[i, j]]) * kvals[i, j]
        out[i] = acc


def effective_kernel_values(kernel: KernelSpec, xs: np.ndarray, ys: np.ndarray,
                            h: float) -> np.ndarray:
    """Kernel on pairs, cell-averaged symmetrically when |x-y| <= 2h."""
    xs = np.atleast_2d(xs)
    ys = np.atleast_2d(ys)
    out = kernel.evaluate(xs, ys)
    d2 = np.sum((xs - ys) ** 2, axis=1)
    near = d2 <= (2.0 * h) ** 2 * (1 + 1e-9)
    if np.any(near):
        xn, yn = xs[near], ys[near]
        n = xs.shape[1]
        acc = np.zeros(xn.shape[0])
        deltas = np.array(list(product((-h / 3.0, 0.0, h / 3.0), repeat=n)))
        for delta in deltas:
            acc += kernel.evaluate(xn, yn + delta)
            acc += kernel.evaluate(xn + delta, yn)
        out[near] = acc / (2.0 * len(deltas))
    return out


class PairTable:
    """Precomputed neighbor data for the live sites of one grid.

    For site i and offset j the partner point is xi_i + eta_j; the table
    stores its coset index (or the clamp sign), whether the partner point is
    its own representative, and the effective kernel value.  By joint-integer
    translation invariance of the medium, row i is valid for every point in
    the coset of site i.
    """

    def __init__(self, grid: Grid, kernel: KernelSpec, r_cut: float):
        self.grid = grid
        self.kernel = kernel
        self.r_cut = float(r_cut)
        self.offsets, self.dist = _offsets_within(grid.n, grid.h, r_cut)
        n_sites, n_off = grid.n_sites, self.offsets.shape[0]
        self.partner_idx = np.empty((n_sites, n_off), dtype=np.int64)
        self.partner_clamp = np.empty((n_sites, n_off), dtype=np.float64)
        self.partner_is_rep = np.empty((n_sites, n_off), dtype=bool)
        self.K = np.empty((n_sites, n_off), dtype=np.float64)

        h = grid.h

        def fill(lo, hi):
            xi = grid.site_xi[lo:hi]
            for j0 in range(0, n_off, 512):
                j1 = min(j0 + 512, n_off)
                eta = self.offsets[j0:j1]
                flat = (xi[:, None, :] + eta[None, :, :]).reshape(-1, grid.n)
                idx, clamp = grid.reduce_points(flat)
                self.partner_idx[lo:hi, j0:j1] = idx.reshape(hi - lo, j1 - j0)
                self.partner_clamp[lo:hi, j0:j1] = clamp.reshape(hi - lo, j1 - j0)
                rep_ok = np.zeros(flat.shape[0], dtype=bool)
                live = idx >= 0
                rep_ok[live] = np.all(grid.site_xi[idx[live]] == flat[live], axis=1)
                self.partner_is_rep[lo:hi, j0:j1] = rep_ok.reshape(hi - lo, j1 - j0)
            return None

        list(_run_chunks(fill, n_sites))

        # translation-invariant kernels have offset-constant columns
        if kernel.is_translation_invariant:
            x0 = np.zeros((n_off, grid.n))
            col = effective_kernel_values(kernel, x0, self.offsets * h, h)
            self.K[:] = col[None, :]
        else:
            coords = grid.coords

            def fill_k(lo, hi):
                x = coords[lo:hi]
                for j0 in range(0, n_off, 512):
                    j1 = min(j0 + 512, n_off)
                    eta = self.offsets[j0:j1] * h
                    xs = np.repeat(x, j1 - j0, axis=0)
                    ys = (x[:, None, :] + eta[None, :, :]).reshape(-1, grid.n)
                    self.K[lo:hi, j0:j1] = effective_kernel_values(
                        kernel, xs, ys, h).reshape(hi - lo, j1 - j0)
                return None

            list(_run_chunks(fill_k, n_sites))

        self.row_sum = self.K.sum(axis=1)
        # gather layout: clamp values appended to the value vector at N, N+1
        self.islive = self.partner_idx >= 0
        self.idx_ext = np.where(
            self.islive, np.clip(self.partner_idx, 0, None),
            np.where(self.partner_clamp > 0, n_sites, n_sites + 1),
        ).astype(np.int64)

    def partner_values_rows(self, field: PeriodicField, rows) -> np.ndarray:
        """Field values at the partner points of the given table rows."""
        pidx = self.partner_idx[rows]
        vals = field.values[np.clip(pidx, 0, None)]
        clamped = pidx < 0
        if np.any(clamped):
            cvals = np.where(self.partner_clamp[rows] > 0, field.clamp_below,
                             field.clamp_above)
            vals = np.where(clamped, cvals, vals)
        return vals


def _ball_area_const(n: int) -> float:
    # H^{n-1} measure of the unit sphere
    alpha_n = math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)
    return n * alpha_n


class _MemberSet:
    """Injective integer encoding of a point set plus its cutoff neighborhood."""

    def __init__(self, pts: np.ndarray, reach: int):
        pts = np.asarray(pts, dtype=np.int64)
        self.base = pts.min(axis=0) - reach - 1
        self.span = pts.max(axis=0) - self.base + reach + 2
        self.strides = np.ones(pts.shape[1], dtype=np.int64)
        for j in range(pts.shape[1] - 2, -1, -1):
            self.strides[j] = self.strides[j + 1] * self.span[j + 1]
        self.keys = np.sort((pts - self.base) @ self.strides)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        rel = pts - self.base
        in_box = np.all((rel >= 0) & (rel < self.span), axis=1)
        flat = np.where(in_box[:, None], rel, 0) @ self.strides
        pos = np.clip(np.searchsorted(self.keys, flat), 0, self.keys.size - 1)
        return in_box & (self.keys[pos] == flat)


class EnergyModel:
    """Energy, gradient and cross-term evaluation for one medium.

    Binds a kernel, a potential and the interaction cutoff R_cut.  Per-grid
    pair tables and potential coefficients are cached on first use.
    """

    def __init__(self, kernel: KernelSpec, potential: PotentialSpec,
                 r_cut: float = 8.0):
        self.kernel = kernel
        self.potential = potential
        self.r_cut = float(r_cut)
        self._tables: dict[int, PairTable] = {}
        self._site_q: dict[int, np.ndarray] = {}

    def table(self, grid: Grid) -> PairTable:
        key = id(grid)
        if key not in self._tables:
            self._tables[key] = PairTable(grid, self.kernel, self.r_cut)
        return self._tables[key]

    def site_q(self, grid: Grid) -> np.ndarray:
        key = id(grid)
        if key not in self._site_q:
            self._site_q[key] = np.asarray(
                self.potential.coeff.eval(grid.coords), dtype=np.float64)
        return self._site_q[key]

    def tail_error(self, field: PeriodicField, n_points: int) -> float:
        """Bound on interactions discarded beyond R_cut."""
        tail = self.kernel.effective_tail()
        if tail is not None and math.isinf(tail.beta) and tail.Rbar <= self.r_cut:
            return 0.0
        if self.kernel.variant == "slow_tail":
            coef, expo = self.kernel.gamma_tail, self.kernel.beta
        else:
            coef, expo = self.kernel.Lam, 2.0 * self.kernel.s
        grid = field.grid
        osc = (max(float(field.values.max()), field.clamp_below, field.clamp_above)
               - min(float(field.values.min()), field.clamp_below, field.clamp_above))
        measure = n_points * grid.h ** grid.n
        r_eff = max(self.r_cut - grid.h * math.sqrt(grid.n), grid.h)
        return (osc ** 2 * coef * measure * _ball_area_const(grid.n)
                * r_eff ** (-expo) / expo)

    # -- auxiliary (periodic) functional ------------------------------------

    @staticmethod
    def _values_ext(field: PeriodicField) -> np.ndarray:
        return np.append(field.values, [field.clamp_below, field.clamp_above])

    def auxiliary_energy(self, field: PeriodicField) -> EnergyReport:
        """Energy of one fundamental domain interacting with all of space."""
        grid = field.grid
        tab = self.table(grid)
        u_ext = self._values_ext(field)
        h2n = grid.h ** (2 * grid.n)
        row_live = np.empty(grid.n_sites)
        row_clamp = np.empty(grid.n_sites)

        def part(lo, hi):
            _row_pair_sums(u_ext, tab.idx_ext, tab.islive, tab.K, lo, hi,
                           row_live, row_clamp)
            return None

        list(_run_chunks(part, grid.n_sites))
        live_sum = float(np.sum(row_live))
        clamp_sum = float(np.sum(row_clamp))
        pot = float(grid.h ** grid.n
                    * np.sum(self.site_q(grid) * self.potential.well(field.values)))
        return EnergyReport.compose(
            kinetic_same=0.5 * h2n * live_sum,
            kinetic_cross=0.5 * h2n * clamp_sum,
            potential=pot,
            tail_error=self.tail_error(field, grid.n_sites),
        )

    def energy_gradient(self, field: PeriodicField) -> np.ndarray:
        """Exact gradient of the discrete auxiliary functional."""
        grid = field.grid
        tab = self.table(grid)
        u_ext = self._values_ext(field)
        h2n = grid.h ** (2 * grid.n)
        hn = grid.h ** grid.n
        g = np.empty(grid.n_sites)

        def part(lo, hi):
            _row_grad_sums(u_ext, tab.idx_ext, tab.K, lo, hi, g)
            return None

        list(_run_chunks(part, grid.n_sites))
        g *= 2.0 * h2n
        g += hn * self.site_q(grid) * self.potential.well_derivative(field.values)
        return g

    def el_residual(self, field: PeriodicField, interior) -> np.ndarray:
        """Euler-Lagrange residual on interior sites (gradient / h^n)."""
        g = self.energy_gradient(field)
        hn = field.grid.h ** field.grid.n
        return g[np.asarray(interior, dtype=np.int64)] / hn

    def descent_step_scale(self, grid: Grid) -> float:
        """Upper estimate of the gradient Lipschitz constant from row sums."""
        tab = self.table(grid)
        h2n = grid.h ** (2 * grid.n)
        hn = grid.h ** grid.n
        rs = np.linspace(-1.0, 1.0, 801)
        wrr = float(np.max(np.abs(np.gradient(
            self.potential.well_derivative(rs), rs))))
        qmax = float(self.site_q(grid).max())
        return 4.0 * h2n * float(tab.row_sum.max()) + hn * qmax * wrr

    # -- point-set energies ---------------------------------------------------

    def _pair_sums(self, field: PeriodicField, pts: np.ndarray,
                   member: Optional[_MemberSet]):
        """(same, cross) kinetic double sums for x in a point set.

        same collects partners inside the member set, cross the rest.  Rows of
        the pair table serve live points through periodicity; clamped x points
        fall back to direct evaluation.
        """
        grid = field.grid
        tab = self.table(grid)
        pts = np.asarray(pts, dtype=np.int64)
        idx_x, clamp_x = grid.reduce_points(pts)
        u_x = np.empty(pts.shape[0])
        live_x = idx_x >= 0
        u_x[live_x] = field.values[idx_x[live_x]]
        u_x[clamp_x > 0] = field.clamp_below
        u_x[clamp_x < 0] = field.clamp_above
        offsets = tab.offsets
        h = grid.h

        def part(lo, hi):
            block = slice(lo, hi)
            rows = idx_x[block]
            blive = rows >= 0
            npts = hi - lo
            diff2 = np.empty((npts, offsets.shape[0]))
            if np.any(blive):
                r = rows[blive]
                pv = tab.partner_values_rows(field, r)
                diff2[blive] = (u_x[block][blive][:, None] - pv) ** 2 * tab.K[r]
            if np.any(~blive):
                for i in np.nonzero(~blive)[0]:
                    x = pts[lo + i]
                    ys = x[None, :] + offsets
                    vy = field.value_at(ys)
                    kv = effective_kernel_values(
                        self.kernel, np.repeat(x[None, :] * h, ys.shape[0], axis=0),
                        ys * h, h)
                    diff2[i] = (u_x[lo + i] - vy) ** 2 * kv
            ys_all = (pts[block][:, None, :] + offsets[None, :, :]).reshape(-1, grid.n)
            if member is None:
                inside = np.zeros(ys_all.shape[0], dtype=bool)
            else:
                inside = member.contains(ys_all)
            inside = inside.reshape(npts, offsets.shape[0])
            return (float(np.sum(np.where(inside, diff2, 0.0))),
                    float(np.sum(np.where(inside, 0.0, diff2))))

        same = 0.0
        cross = 0.0
        for a, b in _run_chunks(part, pts.shape[0]):
            same += a
            cross += b
        return same, cross

    def _reach(self, grid: Grid) -> int:
        return int(math.floor(self.r_cut / grid.h + 1e-9)) + 1

    def kinetic(self, field: PeriodicField, set_u, set_v) -> float:
        """K(u; U, V): halved double sum over x in U, y in V (pairs <= R_cut)."""
        grid = field.grid
        h2n = grid.h ** (2 * grid.n)
        member = _MemberSet(np.asarray(set_v, dtype=np.int64), self._reach(grid))
        same, _ = self._pair_sums(field, np.asarray(set_u, dtype=np.int64), member)
        return 0.5 * h2n * same

    def potential_term(self, field: PeriodicField, omega_pts) -> float:
        """P(u; Omega) = h^n sum of W(x, u(x)) over the point set."""
        grid = field.grid
        pts = np.asarray(omega_pts, dtype=np.int64)
        idx, clamp = grid.reduce_points(pts)
        vals = np.empty(pts.shape[0])
        live = idx >= 0
        vals[live] = field.values[idx[live]]
        vals[clamp > 0] = field.clamp_below
        vals[clamp < 0] = field.clamp_above
        q = np.empty(pts.shape[0])
        q[live] = self.site_q(grid)[idx[live]]
        if np.any(~live):
            q[~live] = np.atleast_1d(np.asarray(
                self.potential.coeff.eval(pts[~live] * grid.h), dtype=np.float64))
        w = q * self.potential.well(vals)
        return float(grid.h ** grid.n * np.sum(w))

    def total_energy(self, field: PeriodicField,
                     omega_pts: Optional[np.ndarray] = None) -> EnergyReport:
        """Localized energy E(u; Omega) for a point set inside the window."""
        grid = field.grid
        if omega_pts is None:
            omega_pts = grid.site_xi
        pts = np.asarray(omega_pts, dtype=np.int64)
        h2n = grid.h ** (2 * grid.n)
        member = _MemberSet(pts, self._reach(grid))
        same, cross = self._pair_sums(field, pts, member)
        pot = self.potential_term(field, pts)
        return EnergyReport.compose(
            kinetic_same=0.5 * h2n * same,
            kinetic_cross=0.5 * h2n * cross,
            potential=pot,
            tail_error=self.tail_error(field, pts.shape[0]),
        )

    # -- cross term of the energy / auxiliary-functional relation -------------

    def cross_term(self, phi: PeriodicField) -> float:
        """h^{2n} sum over x in D, y outside D of phi~(x) phi~(y) K(x, y).

        phi is a difference field: zero clamps, periodized by the grid
        quotient.  Its support may not touch the lateral boundary of the
        fundamental domain.
        """
        grid = phi.grid
        if phi.clamp_below != 0.0 or phi.clamp_above != 0.0:
            raise PreconditionError(
                "cross_term expects a difference field with zero clamps")
        supp = np.nonzero(phi.values != 0.0)[0]
        if supp.size:
            nu = grid.site_xi[supp] @ grid._reducer.r_mat.T
            if np.any(nu == 0):
                raise PreconditionError(
                    "perturbation support touches the lateral boundary")
        tab = self.table(grid)
        h2n = grid.h ** (2 * grid.n)
        vals = phi.values

        def part(lo, hi):
            rows = supp[lo:hi]
            pidx = tab.partner_idx[rows]
            outside = ~tab.partner_is_rep[rows]
            pphi = np.where(pidx >= 0, vals[np.clip(pidx, 0, None)], 0.0)
            contrib = vals[rows, None] * pphi * tab.K[rows]
            return float(np.sum(np.where(outside, contrib, 0.0)))

        return h2n * sum(_run_chunks(part, supp.size))
