"""Numerical verification of structural properties of computed minimizers:
interface confinement, Birkhoff orderings, energy growth, oscillation decay,
local minimality, the energy/auxiliary-functional relation, and divergence
for slowly decaying kernels.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .energy import EnergyModel, PeriodicField, get_threads
from .errors import PreconditionError
from .geometry import Direction, Strip, build_grid, enumerate_cosets
from .media import KernelSpec, PotentialSpec
from .minimize import (MinimizeOptions, MinimizerResult, default_seeds,
                       minimal_minimizer)

__all__ = [
    "VerificationReport",
    "GrowthProfile",
    "DivergenceReport",
    "SweepRow",
    "SweepResult",
    "interface_width",
    "interface_center",
    "birkhoff_check",
    "halfspace_check",
    "ball_points",
    "energy_growth_profile",
    "oscillation_decay",
    "plain_energy_delta",
    "ef_relation_check",
    "local_minimality_test",
    "divergence_probe",
    "rational_sweep",
    "psi_s",
]


@dataclass
class VerificationReport:
    name: str
    passed: bool
    measured: dict
    tolerance: Optional[float] = None
    artifacts: list = dc_field(default_factory=list)

    def csv_rows(self) -> list[str]:
        rows = [f"check,{self.name}", f"passed,{int(self.passed)}"]
        if self.tolerance is not None:
            rows.append(f"tolerance,{self.tolerance!r}")
        for k, v in self.measured.items():
            rows.append(f"{k},{v!r}")
        return rows


# -- interface geometry -------------------------------------------------------


def interface_width(u: PeriodicField, theta: float) -> float:
    """Normalized extent of {|u| < theta} along the direction axis."""
    if not 0.0 < theta < 1.0:
        raise PreconditionError("interface threshold must lie in (0, 1)")
    w = u.grid.omega_dot_sites
    mask = np.abs(u.values) < theta
    if not np.any(mask):
        return 0.0
    return float((w[mask].max() - w[mask].min()) / u.grid.direction.norm)


def interface_center(u: PeriodicField) -> np.ndarray:
    """Grid coordinates of the site where |u| is smallest."""
    return u.grid.site_xi[int(np.argmin(np.abs(u.values)))].copy()


# -- Birkhoff / half-space ----------------------------------------------------


def integer_shifts(n: int, kmax: int) -> list[np.ndarray]:
    axes = [np.arange(-kmax, kmax + 1)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    ks = np.stack([g.ravel() for g in mesh], axis=1)
    return [k for k in ks if np.any(k != 0)]


def birkhoff_check(u: PeriodicField, thetas, ks, band: float = 1e-6) -> VerificationReport:
    """Level-set inclusions under integer translations, up to a value band.

    For omega.k <= 0 the translated superlevel set must be contained in the
    original one, and conversely for omega.k >= 0; sites within ``band`` of
    the threshold are not counted as violations.
    """
    grid = u.grid
    omega = np.asarray(grid.direction.omega, dtype=np.int64)
    violations = 0
    worst = 0.0
    for k in ks:
        k = np.asarray(k, dtype=np.int64)
        tau = u.value_at(grid.site_xi - k[None, :] * grid.mprime)
        wk = int(omega @ k)
        for theta in thetas:
            clear = (np.abs(tau - theta) > band) & (np.abs(u.values - theta) > band)
            if wk <= 0:
                bad = clear & (tau > theta) & (u.values <= theta)
            else:
                bad = np.zeros_like(clear)
            if wk >= 0:
                bad = bad | (clear & (u.values > theta) & (tau <= theta))
            nbad = int(np.count_nonzero(bad))
            violations += nbad
            if nbad:
                gap = np.minimum(np.abs(tau - theta), np.abs(u.values - theta))
                worst = max(worst, float(gap[bad].max()))
    return VerificationReport(
        name="birkhoff",
        passed=violations == 0,
        measured={"violations": violations, "worst_excursion": worst,
                  "n_translations": len(ks), "thetas": list(thetas)},
        tolerance=band,
    )


def ball_points(grid, center_xi, radius: float) -> np.ndarray:
    """Grid points within Euclidean distance ``radius`` of the center."""
    center_xi = np.asarray(center_xi, dtype=np.int64)
    reach = int(math.floor(radius / grid.h + 1e-9))
    axes = [np.arange(-reach, reach + 1, dtype=np.int64)] * grid.n
    mesh = np.meshgrid(*axes, indexing="ij")
    eta = np.stack([g.ravel() for g in mesh], axis=1)
    keep = np.sqrt(np.sum((eta * grid.h) ** 2, axis=1)) <= radius * (1 + 1e-12)
    return center_xi[None, :] + eta[keep]


def halfspace_check(u: PeriodicField, theta: float, band: float = 1e-6) -> VerificationReport:
    """If {u > theta} holds on a ball of radius sqrt(n), it must hold on the
    half-space below the ball center (within the window)."""
    grid = u.grid
    rad = math.sqrt(grid.n)
    candidates = np.nonzero(u.values > theta)[0]
    center = None
    for i in candidates:
        pts = ball_points(grid, grid.site_xi[i], rad)
        if np.all(u.value_at(pts) > theta):
            center = grid.site_xi[i]
            break
    if center is None:
        return VerificationReport(name="halfspace", passed=True,
                                  measured={"skipped": 1}, tolerance=band)
    wc = float((center @ np.asarray(grid.direction.omega)) * grid.h)
    mask = grid.omega_dot_sites < wc
    vals = u.values[mask]
    nbad = int(np.count_nonzero(vals <= theta - band))
    return VerificationReport(
        name="halfspace",
        passed=nbad == 0,
        measured={"violations": nbad, "center_level": wc,
                  "halfspace_sites": int(mask.sum()), "skipped": 0},
        tolerance=band,
    )


# -- energy growth and oscillation ---------------------------------------------


def psi_s(r: float, s: float) -> float:
    """Growth factor separating the nonlocal and local scaling regimes."""
    if s < 0.5:
        return r ** (1.0 - 2.0 * s)
    if s == 0.5:
        return math.log(r)
    return 1.0


@dataclass
class GrowthProfile:
    radii: list
    energies: list
    reference: list
    exponent: Optional[float]
    reference_slope: Optional[float]
    s: float

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        e = np.asarray(self.energies, dtype=float)
        if np.any(np.diff(r) <= 0):
            raise PreconditionError("radii must be strictly increasing")
        if np.any(np.diff(e) < -1e-12 * max(1.0, float(np.abs(e).max()))):
            raise AssertionError("ball energies must be non-decreasing in R")


def _require_ball_in_window(grid, center_xi, radius: float) -> None:
    wc = float((np.asarray(center_xi) @ np.asarray(grid.direction.omega)) * grid.h)
    reach = radius * grid.direction.norm
    if wc - reach < grid.window_lo or wc + reach > grid.window_hi:
        raise PreconditionError(
            f"ball of radius {radius} around level {wc:.3f} leaves the window")


def energy_growth_profile(model: EnergyModel, u: PeriodicField, center_xi,
                          radii) -> GrowthProfile:
    """E(u; B_R) against the expected C R^(n-1) Psi_s(R) scaling."""
    grid = u.grid
    radii = sorted(float(r) for r in radii)
    energies = []
    for r in radii:
        _require_ball_in_window(grid, center_xi, r + 2.0)
        pts = ball_points(grid, center_xi, r)
        energies.append(model.total_energy(u, pts).total)
    n = grid.n
    s = model.kernel.s
    ref_raw = [r ** (n - 1) * psi_s(r, s) for r in radii]
    if energies[0] > 0:
        scale = energies[0] / ref_raw[0]
        reference = [scale * v for v in ref_raw]
    else:
        reference = ref_raw
    if all(e > 0 for e in energies):
        loge = np.log(energies)
        exponent = float(np.polyfit(np.log(radii), loge, 1)[0])
        reference_slope = float(np.polyfit(np.log(ref_raw), loge, 1)[0])
    else:
        exponent = None
        reference_slope = None
    return GrowthProfile(radii=radii, energies=energies, reference=reference,
                         exponent=exponent, reference_slope=reference_slope, s=s)


def oscillation_decay(u: PeriodicField, x0_xi, R: float, radii) -> VerificationReport:
    """Oscillation of u over shrinking concentric balls, with a decay fit."""
    grid = u.grid
    radii = sorted(float(r) for r in radii)
    if radii[-1] >= R:
        raise PreconditionError("all sample radii must be below the outer radius")
    _require_ball_in_window(grid, x0_xi, R)
    if ball_points(grid, x0_xi, radii[0]).shape[0] < 2:
        raise PreconditionError("smallest ball contains fewer than two grid points")
    oscs = []
    for r in radii:
        vals = u.value_at(ball_points(grid, x0_xi, r))
        oscs.append(float(vals.max() - vals.min()))
    oscs_arr = np.asarray(oscs)
    monotone = bool(np.all(np.diff(oscs_arr) >= -1e-12))
    positive = oscs_arr > 0
    alpha = None
    if np.count_nonzero(positive) >= 2:
        x = np.log(np.asarray(radii)[positive] / R)
        alpha = float(np.polyfit(x, np.log(oscs_arr[positive]), 1)[0])
    passed = monotone and (alpha is None or alpha > 0)
    return VerificationReport(
        name="oscillation_decay",
        passed=passed,
        measured={"radii": radii, "oscillations": oscs,
                  "alpha_hat": alpha, "monotone": monotone},
    )


# -- local minimality and the energy relation ----------------------------------


def plain_energy_delta(model: EnergyModel, u: PeriodicField,
                       phi: PeriodicField) -> float:
    """E(u + phi; D~) - E(u; D~) with phi perturbing one domain copy only.

    phi lives on the representative sites; its periodic images are left
    unperturbed, matching the plain-function convention of localized-energy
    minimality.
    """
    grid = u.grid
    if phi.clamp_below != 0.0 or phi.clamp_above != 0.0:
        raise PreconditionError("perturbation must carry zero far-field clamps")
    tab = model.table(grid)
    supp = np.nonzero(phi.values != 0.0)[0]
    if supp.size == 0:
        return 0.0
    h2n = grid.h ** (2 * grid.n)
    hn = grid.h ** grid.n
    uv = u.values
    pv_u = tab.partner_values_rows(u, supp)
    pidx = tab.partner_idx[supp]
    is_rep = tab.partner_is_rep[supp]
    phi_y = np.where(is_rep & (pidx >= 0), phi.values[np.clip(pidx, 0, None)], 0.0)
    v_x = (uv + phi.values)[supp]
    du = uv[supp][:, None] - pv_u
    dv = v_x[:, None] - (pv_u + phi_y)
    contrib = (dv * dv - du * du) * tab.K[supp]
    both = phi_y != 0.0
    delta_kin = h2n * (float(np.sum(contrib)) - 0.5 * float(np.sum(contrib[both])))
    q = model.site_q(grid)[supp]
    delta_pot = hn * float(np.sum(
        q * (model.potential.well(v_x) - model.potential.well(uv[supp]))))
    return delta_kin + delta_pot


def ef_relation_check(model: EnergyModel, u: PeriodicField, phi: PeriodicField,
                      rel_tol: float = 1e-8) -> VerificationReport:
    """Check E(v; D~) - E(u; D~) = F(v~) - F(u) + cross_term(phi)."""
    lhs = plain_energy_delta(model, u, phi)
    v_tilde = u.with_values(u.values + phi.values)
    rhs = (model.auxiliary_energy(v_tilde).total
           - model.auxiliary_energy(u).total
           + model.cross_term(phi))
    scale = max(abs(lhs), abs(rhs), 1e-9)
    rel = abs(lhs - rhs) / scale
    return VerificationReport(
        name="ef_relation",
        passed=rel <= rel_tol,
        measured={"lhs": lhs, "rhs": rhs, "relative_error": rel},
        tolerance=rel_tol,
    )


def smooth_bump(grid, center_xi, radius: float, amplitude: float) -> np.ndarray:
    """A cos^2 bump of the given radius centered at a site, on live sites."""
    d = np.sqrt(np.sum(((grid.site_xi - np.asarray(center_xi)) * grid.h) ** 2, axis=1))
    vals = np.where(d < radius,
                    amplitude * np.cos(0.5 * math.pi * d / radius) ** 2, 0.0)
    return vals


def local_minimality_test(model: EnergyModel, u: PeriodicField, strip: Strip,
                          omega_sites, trials: int = 200, rng_seed: int = 0,
                          tol_rel: float = 1e-8,
                          max_amplitude: float = 0.2) -> VerificationReport:
    """Random compact perturbations must not decrease the localized energy.

    Perturbations are smooth bumps of random sign, radius and amplitude
    supported on the given sites (compactly inside the strip), the result
    clipped to [-1, 1].  Also checks the one-sided slope at t = 0+.
    """
    grid = u.grid
    omega_sites = np.asarray(omega_sites, dtype=np.int64)
    if omega_sites.size == 0:
        raise PreconditionError("empty perturbation region")
    w = grid.omega_dot_sites[omega_sites]
    if w.min() < strip.A or w.max() > strip.B:
        raise PreconditionError("perturbation region must lie inside the strip")
    rng = np.random.default_rng(rng_seed)
    base = model.total_energy(u, grid.site_xi[omega_sites]).total
    tol = tol_rel * max(abs(base), 1.0)
    allowed = np.zeros(grid.n_sites, dtype=bool)
    allowed[omega_sites] = True
    # keep supports off the lateral faces of the fundamental domain
    nu = grid.site_xi @ grid._reducer.r_mat.T
    allowed &= np.all(nu != 0, axis=1)

    g = model.energy_gradient(u)
    violations = 0
    slope_violations = 0
    worst_drop = 0.0
    attempted = 0
    for _ in range(trials):
        center = grid.site_xi[rng.choice(omega_sites)]
        radius = rng.uniform(2 * grid.h, 1.0)
        amp = rng.uniform(0.02, max_amplitude) * rng.choice([-1.0, 1.0])
        bump = smooth_bump(grid, center, radius, amp)
        bump[~allowed] = 0.0
        phi_vals = np.clip(u.values + bump, -1.0, 1.0) - u.values
        if not np.any(phi_vals != 0.0):
            continue
        attempted += 1
        phi = PeriodicField(grid, phi_vals, clamp_below=0.0, clamp_above=0.0)
        delta = plain_energy_delta(model, u, phi)
        if delta < -tol:
            violations += 1
            worst_drop = max(worst_drop, -delta)
        slope = float(g @ phi_vals)
        if slope < -tol:
            slope_violations += 1
    return VerificationReport(
        name="local_minimality",
        passed=violations == 0 and slope_violations == 0,
        measured={"trials": attempted, "violations": violations,
                  "slope_violations": slope_violations,
                  "worst_drop": worst_drop, "base_energy": base},
        tolerance=tol,
    )


# -- divergence probe ----------------------------------------------------------


@dataclass
class DivergenceReport:
    window_lengths: list
    sums: list
    increments: list
    diverging: bool
    measured: dict

    @property
    def passed(self) -> bool:
        return self.diverging


def divergence_probe(kernel: KernelSpec, strip: Strip, window_lengths,
                     h: float = 0.5, trunc_factor: float = 3.0) -> DivergenceReport:
    """Cross-strip kinetic mass on growing windows.

    For kernels bounded below by a slowly decaying tail (beta <= 1) the sums
    must grow without apparent bound (logarithmically at beta = 1); kernels
    with fast decay give a converging sequence instead.
    """
    tail = kernel.effective_tail()
    if tail is not None and 1.0 < tail.beta < math.inf:
        raise PreconditionError(
            "divergence probe targets slowly decaying kernels (beta <= 1)")
    d = strip.direction
    omega = np.asarray(d.omega, dtype=np.int64)
    norm = d.norm
    lengths = sorted(float(v) for v in window_lengths)
    lmax = lengths[-1]
    mprime = int(round(1.0 / h))
    if abs(h * mprime - 1.0) > 1e-12:
        raise PreconditionError("probe spacing must be 1/m for integer m")

    ys = enumerate_cosets(d, h, strip.B, strip.B + lmax * norm)
    levels, counts = np.unique(np.asarray(ys @ omega, dtype=np.int64),
                               return_counts=True)
    h2n = h ** (2 * d.n)

    level_gap = []
    level_sum = []
    for lev, cnt in zip(levels, counts):
        wlev = lev * h
        yrep = ys[np.argmax((ys @ omega) == lev)]
        gap = (wlev - strip.A) / norm
        rho = trunc_factor * (gap + 1.0)
        reach = int(math.ceil(rho / h)) + 1
        axes = [np.arange(yrep[j] - reach, yrep[j] + reach + 1, dtype=np.int64)
                for j in range(d.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        xs = np.stack([g.ravel() for g in mesh], axis=1)
        keep = ((xs @ omega) * h <= strip.A)
        xs = xs[keep]
        dist = np.sqrt(np.sum(((xs - yrep) * h) ** 2, axis=1))
        xs = xs[dist <= rho]
        if xs.shape[0] == 0:
            level_gap.append((wlev - strip.B) / norm)
            level_sum.append(0.0)
            continue
        kv = kernel.evaluate(np.repeat(yrep[None, :] * h, xs.shape[0], axis=0),
                             xs * h)
        # admissible fields jump by at least 9/5 across the strip; the step
        # profile used here contributes |du|^2 = 4 per pair
        level_gap.append((wlev - strip.B) / norm)
        level_sum.append(float(cnt) * 4.0 * 0.5 * h2n * float(np.sum(kv)))

    level_gap = np.asarray(level_gap)
    level_sum = np.asarray(level_sum)
    sums = []
    for l in lengths:
        sums.append(float(level_sum[level_gap <= l + 1e-12].sum()))
    increments = [sums[0]] + [b - a for a, b in zip(sums, sums[1:])]
    incs = increments[1:] if len(increments) > 1 else increments
    positive = all(v > 0 for v in incs)
    inc_ratio = incs[-1] / incs[0] if incs and incs[0] > 0 else 0.0
    total_ratio = sums[-1] / sums[0] if sums[0] > 0 else math.inf
    diverging = positive and inc_ratio >= 0.4 and total_ratio >= 2.0
    return DivergenceReport(
        window_lengths=lengths,
        sums=sums,
        increments=increments,
        diverging=diverging,
        measured={"increment_ratio": inc_ratio, "total_ratio": total_ratio},
    )


# -- direction sweep ------------------------------------------------------------


@dataclass
class SweepRow:
    omega: tuple
    width: Optional[float]
    energy: Optional[float]
    birkhoff_passed: Optional[bool]
    error: Optional[str] = None
    result: Optional[MinimizerResult] = None

    def csv_row(self) -> str:
        omega = " ".join(str(c) for c in self.omega)
        if self.error:
            return f"{omega},,,,{self.error}"
        return (f"{omega},{self.width!r},{self.energy!r},"
                f"{int(self.birkhoff_passed)},")


@dataclass
class SweepResult:
    rows: list
    m0_estimate: Optional[float]

    CSV_HEADER = "omega,normalized_width,energy,birkhoff_pass,error"


def rational_sweep(kernel: KernelSpec, potential: PotentialSpec, directions,
                   *, normalized_width: float = 12.0, h: float = 0.25,
                   L: float = 2.0, r_cut: float = 8.0,
                   opts: Optional[MinimizeOptions] = None,
                   thetas=(-0.5, 0.0, 0.5), kmax: int = 2,
                   width_theta: float = 0.9,
                   birkhoff_band: float = 1e-6) -> SweepResult:
    """Run the minimize-and-verify pipeline for each rational direction.

    Per-direction failures are isolated into their rows.  The maximum of the
    measured interface widths across directions estimates the universal slab
    constant empirically.
    """
    opts = opts or MinimizeOptions()

    def run_one(omega) -> SweepRow:
        try:
            direction = Direction.from_vector(omega)
            strip = Strip(0.0, normalized_width * direction.norm, direction)
            grid = build_grid(strip, h, L)
            model = EnergyModel(kernel, potential, r_cut=r_cut)
            result = minimal_minimizer(model, strip, default_seeds(grid, strip), opts)
            width = interface_width(result.field, width_theta)
            ks = integer_shifts(direction.n, kmax)
            birk = birkhoff_check(result.field, thetas, ks, band=birkhoff_band)
            return SweepRow(omega=tuple(int(c) for c in omega), width=width,
                            energy=result.energy.total,
                            birkhoff_passed=birk.passed, result=result)
        except Exception as exc:  # pragma: no cover - defensive isolation
            return SweepRow(omega=tuple(int(c) for c in omega), width=None,
                            energy=None, birkhoff_passed=None, error=repr(exc))

    if get_threads() > 1 and len(directions) > 1:
        with ThreadPoolExecutor(max_workers=get_threads()) as pool:
            rows = list(pool.map(run_one, directions))
    else:
        rows = [run_one(om) for om in directions]
    widths = [r.width for r in rows if r.width is not None]
    return SweepResult(rows=rows, m0_estimate=max(widths) if widths else None)
