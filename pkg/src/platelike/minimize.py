"""Constrained minimization over the admissible class and the minimal minimizer.

Admissible fields are >= 9/10 below the strip and <= -9/10 above it (the 9/10
normalization of the transition threshold), with values in [-1, 1].  Descent
is projected gradient with alternating Barzilai-Borwein step lengths,
safeguarded by monotone Armijo backtracking (c = 1e-4, shrink 0.5, initial
step 1/L_est from kernel row sums).  The minimal minimizer is approximated by
descending from several seeds, pointwise-min combining the near-optimal
results and re-descending until the combination stabilizes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .energy import EnergyModel, EnergyReport, PeriodicField, get_threads
from .errors import GridMismatchError, PreconditionError, SeedError
from .geometry import Grid, Strip, build_grid

__all__ = [
    "ADMISSIBLE_THETA",
    "MinimizeOptions",
    "MinimizerResult",
    "project_admissible",
    "descend",
    "combine_min",
    "combine_max",
    "translate",
    "minimal_minimizer",
    "doubling_test",
    "linear_seed",
    "step_seed",
    "default_seeds",
]

ADMISSIBLE_THETA = 9.0 / 10.0


@dataclass
class MinimizeOptions:
    tol: float = 1e-8
    max_iters: int = 3000
    armijo_c: float = 1e-4
    shrink: float = 0.5
    eps_min_rel: float = 1e-6
    stab_tol: float = 1e-7
    max_rounds: int = 6


@dataclass
class MinimizerResult:
    field: PeriodicField
    energy: EnergyReport
    iterations: int
    final_projected_gradient_norm: float
    seed_label: str
    status: str = "converged"


def _bounds(grid: Grid, strip: Strip) -> tuple[np.ndarray, np.ndarray]:
    w = grid.omega_dot_sites
    lo = np.where(w <= strip.A, ADMISSIBLE_THETA, -1.0)
    hi = np.where(w >= strip.B, -ADMISSIBLE_THETA, 1.0)
    return lo, hi


def project_admissible(u: PeriodicField, strip: Strip) -> PeriodicField:
    """Clip into [-1, 1] and enforce the +-9/10 constraints of the strip."""
    lo, hi = _bounds(u.grid, strip)
    return u.with_values(np.clip(u.values, lo, hi))


def _kkt_norm(values, g, lo, hi) -> float:
    pg = g.copy()
    at_lo = values <= lo + 1e-12
    at_hi = values >= hi - 1e-12
    pg[at_lo] = np.minimum(g[at_lo], 0.0)
    pg[at_hi] = np.maximum(g[at_hi], 0.0)
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def descend(model: EnergyModel, u0: PeriodicField, strip: Strip,
            opts: MinimizeOptions | None = None,
            seed_label: str = "seed") -> MinimizerResult:
    """Projected-gradient descent until the projected gradient is below tol."""
    opts = opts or MinimizeOptions()
    grid = u0.grid
    lo, hi = _bounds(grid, strip)
    u = np.clip(u0.values.copy(), lo, hi)
    fld = u0.with_values(u)
    f = model.auxiliary_energy(fld).total
    if not np.isfinite(f):
        raise SeedError("seed field has non-finite energy")

    l_est = model.descent_step_scale(grid)
    alpha0 = 1.0 / l_est
    alpha = alpha0
    g = model.energy_gradient(fld)
    status = "max_iters"
    it = 0
    prev_u = None
    prev_g = None
    for it in range(1, opts.max_iters + 1):
        pg = _kkt_norm(u, g, lo, hi)
        if pg <= opts.tol:
            status = "converged"
            break
        if prev_u is not None:
            s = u - prev_u
            y = g - prev_g
            sy = float(s @ y)
            if sy > 0:
                # alternate the two spectral step lengths
                alpha = float(s @ s) / sy if it % 2 else sy / float(y @ y)
            else:
                alpha = alpha0
            alpha = min(max(alpha, 1e-2 * alpha0), 1e3 * alpha0)
        step = alpha
        accepted = False
        while step > 1e-18 * alpha0:
            trial = np.clip(u - step * g, lo, hi)
            fld_t = fld.with_values(trial)
            f_t = model.auxiliary_energy(fld_t).total
            decrease = float(g @ (u - trial))
            if f_t <= f - opts.armijo_c * decrease:
                accepted = True
                break
            step *= opts.shrink
        if not accepted:
            status = "stalled"
            break
        prev_u, prev_g = u, g
        u, f, fld = trial, f_t, fld_t
        g = model.energy_gradient(fld)

    report = model.auxiliary_energy(fld)
    return MinimizerResult(
        field=fld,
        energy=report,
        iterations=it,
        final_projected_gradient_norm=_kkt_norm(u, g, lo, hi),
        seed_label=seed_label,
        status=status,
    )


def _check_same_grid(u: PeriodicField, v: PeriodicField) -> None:
    if u.grid is not v.grid and not (
            u.grid.h == v.grid.h and np.array_equal(u.grid.site_xi, v.grid.site_xi)):
        raise GridMismatchError("fields live on different grids")


def combine_min(u: PeriodicField, v: PeriodicField) -> PeriodicField:
    _check_same_grid(u, v)
    return u.with_values(np.minimum(u.values, v.values))


def combine_max(u: PeriodicField, v: PeriodicField) -> PeriodicField:
    _check_same_grid(u, v)
    return u.with_values(np.maximum(u.values, v.values))


def translate(u: PeriodicField, k) -> PeriodicField:
    """tau_k u(x) = u(x - k) for an integer vector k."""
    k = np.asarray(k)
    if not np.all(k == np.round(k)):
        raise PreconditionError("translations must be integer vectors")
    shift = np.asarray(np.round(k), dtype=np.int64) * u.grid.mprime
    return u.with_values(u.value_at(u.grid.site_xi - shift[None, :]))


# -- seed profiles -----------------------------------------------------------

def linear_seed(grid: Grid, strip: Strip) -> PeriodicField:
    """Projected piecewise-linear profile dropping from +1 to -1 across the strip."""
    t = grid.omega_dot_sites
    vals = np.clip(1.0 - 2.0 * (t - strip.A) / (strip.B - strip.A), -1.0, 1.0)
    return project_admissible(PeriodicField(grid, vals), strip)


def step_seed(grid: Grid, strip: Strip) -> PeriodicField:
    """Sign step at the strip midplane."""
    t = grid.omega_dot_sites
    vals = np.where(t <= 0.5 * (strip.A + strip.B), 1.0, -1.0)
    return project_admissible(PeriodicField(grid, vals), strip)


def default_seeds(grid: Grid, strip: Strip) -> list[tuple[str, PeriodicField]]:
    """Linear and step profiles plus integer translates of the linear one."""
    base = [("linear", linear_seed(grid, strip)), ("step", step_seed(grid, strip))]
    axis = int(np.argmax(np.abs(grid.direction.omega)))
    e = np.zeros(grid.n, dtype=np.int64)
    e[axis] = 1
    for sign in (+1, -1):
        cand = project_admissible(translate(base[0][1], sign * e), strip)
        base.append((f"linear_t{sign:+d}e{axis}", cand))
    seen: dict[bytes, str] = {}
    out = []
    for label, fld in base:
        key = fld.values.tobytes()
        if key not in seen:
            seen[key] = label
            out.append((label, fld))
    return out


def minimal_minimizer(model: EnergyModel, strip: Strip,
                      seeds: list[tuple[str, PeriodicField]],
                      opts: MinimizeOptions | None = None) -> MinimizerResult:
    """Approximate the pointwise-infimum minimizer by min-combining descents.

    Minimizes from every seed, keeps the results inside the energy window
    [min f, min f + eps], takes their pointwise minimum and re-descends,
    iterating until the combined minimum stabilizes in sup norm.
    """
    if not seeds:
        raise PreconditionError("minimal_minimizer needs at least one seed")
    opts = opts or MinimizeOptions()
    grid = seeds[0][1].grid
    model.table(grid)  # warm the cache before any parallel descent

    def run(item):
        label, fld = item
        return descend(model, fld, strip, opts, seed_label=label)

    if get_threads() > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=get_threads()) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    final = results[0]
    for _ in range(opts.max_rounds):
        best = min(r.energy.total for r in results)
        eps = opts.eps_min_rel * max(abs(best), 1e-12)
        retained = [r for r in results if r.energy.total <= best + eps]
        combined = retained[0].field.values.copy()
        for r in retained[1:]:
            np.minimum(combined, r.field.values, out=combined)
        seed = project_admissible(retained[0].field.with_values(combined), strip)
        final = descend(model, seed, strip, opts, seed_label="min-combine")
        if float(np.max(np.abs(final.field.values - combined))) < opts.stab_tol:
            break
        results.append(final)
    return final


@dataclass
class DoublingReport:
    m: tuple[int, ...]
    sup_discrepancy: float
    energy_ratio: float
    expected_ratio: float
    ratio_error: float
    base: MinimizerResult
    doubled: MinimizerResult
    sup_tolerance: float = 1e-4
    ratio_tolerance: float = 1e-6

    @property
    def passed(self) -> bool:
        return (self.sup_discrepancy <= self.sup_tolerance
                and self.ratio_error <= self.ratio_tolerance)


def doubling_test(model: EnergyModel, strip: Strip, h: float, L: float, m,
                  opts: MinimizeOptions | None = None) -> DoublingReport:
    """Compare the m-fold-quotient minimal minimizer with the tiled one."""
    m = tuple(int(c) for c in m)
    opts = opts or MinimizeOptions()
    grid1 = build_grid(strip, h, L)
    gridm = build_grid(strip, h, L, m=m)

    base = minimal_minimizer(model, strip, default_seeds(grid1, strip), opts)
    tiled = PeriodicField(gridm, base.field.value_at(gridm.site_xi))

    ratio = (model.auxiliary_energy(tiled).total
             / model.auxiliary_energy(base.field).total)
    expected = float(np.prod(m))

    seeds = default_seeds(gridm, strip)
    seeds.append(("tiled-base", tiled))
    doubled = minimal_minimizer(model, strip, seeds, opts)

    sup = float(np.max(np.abs(doubled.field.values - tiled.values)))
    return DoublingReport(
        m=m,
        sup_discrepancy=sup,
        energy_ratio=ratio,
        expected_ratio=expected,
        ratio_error=abs(ratio - expected),
        base=base,
        doubled=doubled,
    )
