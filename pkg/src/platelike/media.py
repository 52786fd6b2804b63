"""Interaction kernels and double-well potentials for a periodic medium.

Coefficient fields are closed-form unit-periodic expressions chosen by name,
so joint integer translations leave kernel and potential values bit-identical
on dyadic grids.  Kernels are comparable to the fractional-Laplacian kernel
with ellipticity constants (lam, Lam); potentials vanish exactly at the pure
phases r = -1 and r = +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, PreconditionError, SingularityError

__all__ = [
    "CoeffField",
    "KernelSpec",
    "PotentialSpec",
    "TailBound",
    "kernel_eval",
    "kernel_validate",
    "kernel_truncate",
    "potential_eval",
    "potential_validate",
]

R_EPS = 0.05  # slack around [-1, 1] accepted by potential evaluation


def _wrap_unit(points: np.ndarray) -> np.ndarray:
    return points - np.floor(points)


@dataclass(frozen=True)
class CoeffField:
    """A named unit-periodic closed-form coefficient field."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in ("constant", "sin_product", "cos_sum"):
            raise ConfigError(f"unknown coefficient field {self.name!r}")
        freq = self.params.get("freq", 1)
        if int(freq) != freq or freq < 1:
            raise ConfigError("coefficient frequency must be a positive integer")

    def eval(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        frac = _wrap_unit(pts)
        if self.name == "constant":
            out = np.full(pts.shape[0], float(self.params.get("value", 1.0)))
        elif self.name == "sin_product":
            off = float(self.params.get("offset", 1.0))
            amp = float(self.params.get("amplitude", 0.5))
            freq = int(self.params.get("freq", 1))
            out = off + amp * np.prod(np.sin(2.0 * np.pi * freq * frac), axis=1)
        else:  # cos_sum
            off = float(self.params.get("offset", 1.0))
            amp = float(self.params.get("amplitude", 0.5))
            freq = int(self.params.get("freq", 1))
            out = off + amp * np.mean(np.cos(2.0 * np.pi * freq * frac), axis=1)
        if np.asarray(points).ndim == 1:
            return float(out[0])
        return out

    def sampled_range(self, n: int, samples_per_axis: int = 64) -> tuple[float, float]:
        """Estimated (min, max) over one unit cell by dense sampling.

        The default 64 samples per axis hit the quarter-period points of the
        trigonometric families exactly.
        """
        axes = [np.linspace(0.0, 1.0, samples_per_axis, endpoint=False)] * n
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        vals = self.eval(pts)
        return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class TailBound:
    """Decay data K(x,y) <= Gamma / |x-y|^(n+beta) for |x-y| >= Rbar."""

    Gamma: float
    beta: float
    Rbar: float


_VARIANTS = ("homogeneous", "heterogeneous", "anisotropic", "truncated", "slow_tail")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A symmetric interaction kernel comparable to |x-y|^(-n-2s)."""

    variant: str
    s: float
    lam: float = 1.0
    Lam: float = 1.0
    coeff: Optional[CoeffField] = None
    coeff_arg: str = "sum"  # "x" builds a deliberately asymmetric fixture
    matrix: Optional[np.ndarray] = None
    base: Optional["KernelSpec"] = None
    R_trunc: Optional[float] = None
    beta: Optional[float] = None
    gamma_tail: Optional[float] = None

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ConfigError(f"unknown kernel variant {self.variant!r}")
        if not 0.0 < self.s < 1.0:
            raise ConfigError(f"fractional order must lie in (0, 1), got s={self.s}")
        if not 0.0 < self.lam <= self.Lam:
            raise ConfigError("ellipticity bounds must satisfy 0 < lam <= Lam")
        if self.variant == "heterogeneous":
            if self.coeff is None:
                raise ConfigError("heterogeneous kernel needs a coefficient field")
            if self.coeff_arg not in ("sum", "x"):
                raise ConfigError("coeff_arg must be 'sum' or 'x'")
        if self.variant == "anisotropic":
            a = np.asarray(self.matrix, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ConfigError("anisotropic kernel needs a square matrix")
            if not np.allclose(a, a.T):
                raise ConfigError("anisotropy matrix must be symmetric")
            if np.linalg.eigvalsh(a).min() <= 0:
                raise ConfigError("anisotropy matrix must be positive definite")
        if self.variant == "truncated":
            if self.base is None or self.R_trunc is None:
                raise ConfigError("truncated kernel needs a base kernel and a radius")
        if self.variant == "slow_tail":
            if self.beta is None or not 0.0 < self.beta:
                raise ConfigError("slow_tail kernel needs beta > 0")
            if self.gamma_tail is None or self.gamma_tail <= 0:
                raise ConfigError("slow_tail kernel needs gamma_tail > 0")

    # -- constructors ------------------------------------------------------

    @classmethod
    def homogeneous(cls, s: float) -> "KernelSpec":
        return cls(variant="homogeneous", s=s, lam=1.0, Lam=1.0)

    @classmethod
    def heterogeneous(cls, s, lam, Lam, coeff: CoeffField, coeff_arg="sum") -> "KernelSpec":
        return cls(variant="heterogeneous", s=s, lam=lam, Lam=Lam, coeff=coeff,
                   coeff_arg=coeff_arg)

    @classmethod
    def anisotropic(cls, s, matrix) -> "KernelSpec":
        a = np.asarray(matrix, dtype=float)
        eig = np.linalg.eigvalsh(a)
        n = a.shape[0]
        p = (n + 2 * s) / 2.0
        return cls(variant="anisotropic", s=s, lam=float(eig.max() ** -p),
                   Lam=float(eig.min() ** -p), matrix=a)

    @classmethod
    def slow_tail(cls, s: float, beta: float, gamma_tail: float = 1.0) -> "KernelSpec":
        # (K2) upper bound requires beta >= 2s once |x-y| >= 1
        if beta < 2 * s:
            raise ConfigError("slow_tail needs beta >= 2s to respect the upper bound")
        return cls(variant="slow_tail", s=s, lam=1.0, Lam=max(1.0, gamma_tail),
                   beta=beta, gamma_tail=gamma_tail)

    # -- evaluation --------------------------------------------------------

    @property
    def is_translation_invariant(self) -> bool:
        if self.variant in ("homogeneous", "anisotropic", "slow_tail"):
            return True
        if self.variant == "truncated":
            return self.base.is_translation_invariant
        return False

    def evaluate(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Raw kernel values on point pairs; no singularity handling."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
        diff = xs - ys
        n = xs.shape[1]
        if self.variant == "truncated":
            r = np.sqrt(np.sum(diff * diff, axis=1))
            vals = self.base.evaluate(xs, ys)
            return np.where(r <= self.R_trunc, vals, 0.0)
        if self.variant == "anisotropic":
            q = np.einsum("pi,ij,pj->p", diff, self.matrix, diff)
            return q ** (-(n + 2.0 * self.s) / 2.0)
        r2 = np.sum(diff * diff, axis=1)
        if self.variant == "slow_tail":
            r = np.sqrt(r2)
            near = r2 ** (-(n + 2.0 * self.s) / 2.0)
            far = self.gamma_tail * np.where(r > 0, r, 1.0) ** (-(n + self.beta))
            return np.where(r < 1.0, near, far)
        vals = r2 ** (-(n + 2.0 * self.s) / 2.0)
        if self.variant == "heterogeneous":
            arg = xs + ys if self.coeff_arg == "sum" else xs
            per = self.coeff.eval(arg)
            vals = (self.lam + (self.Lam - self.lam) * per) * vals
        return vals

    def effective_tail(self) -> Optional[TailBound]:
        """(K4) data implied by the variant, if any."""
        if self.variant == "truncated":
            return TailBound(Gamma=self.Lam, beta=math.inf, Rbar=float(self.R_trunc))
        if self.variant == "slow_tail":
            if self.beta > 1.0:
                return TailBound(Gamma=self.gamma_tail, beta=self.beta, Rbar=1.0)
            return None
        if self.s > 0.5:
            return TailBound(Gamma=self.Lam, beta=2.0 * self.s, Rbar=1.0)
        return None


def kernel_eval(kernel: KernelSpec, x, y) -> float:
    """Evaluate the raw kernel at one pair of points."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.array_equal(x, y):
        raise SingularityError("kernel is singular on the diagonal x == y")
    return float(kernel.evaluate(x[None, :], y[None, :])[0])


def kernel_truncate(kernel: KernelSpec, R_j: float) -> KernelSpec:
    """Cut the kernel off beyond radius R_j, restoring fast decay."""
    if R_j < 2.0:
        raise ConfigError(f"truncation radius must be >= 2, got {R_j}")
    return KernelSpec(variant="truncated", s=kernel.s, lam=kernel.lam,
                      Lam=kernel.Lam, base=kernel, R_trunc=float(R_j))


@dataclass
class KernelValidationReport:
    symmetry_max: float
    lower_bound_violation: float
    upper_bound_violation: float
    periodicity_max: float
    tail_violation: Optional[float]
    n_samples: int
    tolerance: float

    @property
    def passed(self) -> bool:
        checks = [self.symmetry_max, self.lower_bound_violation,
                  self.upper_bound_violation, self.periodicity_max]
        if self.tail_violation is not None:
            checks.append(self.tail_violation)
        return all(v <= self.tolerance for v in checks)


def kernel_validate(kernel: KernelSpec, sample_count: int = 500, n: int = 2,
                    rng_seed: int = 0, tolerance: float = 1e-10) -> KernelValidationReport:
    """Empirically check (K1)-(K4) on random point pairs (report only)."""
    rng = np.random.default_rng(rng_seed)
    xs = rng.uniform(-3.0, 3.0, size=(sample_count, n))
    # mix short and long pair separations, keeping away from the diagonal
    radii = np.concatenate([
        rng.uniform(0.05, 1.0, size=sample_count // 2),
        rng.uniform(1.0, 6.0, size=sample_count - sample_count // 2),
    ])
    dirs = rng.normal(size=(sample_count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ys = xs + radii[:, None] * dirs

    k_xy = kernel.evaluate(xs, ys)
    k_yx = kernel.evaluate(ys, xs)
    scale = np.maximum(np.abs(k_xy), np.abs(k_yx)) + 1e-300
    symmetry = float(np.max(np.abs(k_xy - k_yx) / scale))

    r = np.linalg.norm(xs - ys, axis=1)
    upper = kernel.Lam * r ** (-(n + 2.0 * kernel.s))
    lower = np.where(r <= 1.0, kernel.lam * r ** (-(n + 2.0 * kernel.s)), 0.0)
    upper_viol = float(np.max((k_xy - upper) / upper))
    rel_low = np.zeros_like(lower)
    np.divide(lower - k_xy, lower, out=rel_low, where=lower > 0)
    lower_viol = float(np.max(rel_low))

    shifts = rng.integers(-2, 3, size=(sample_count, n)).astype(np.float64)
    k_shift = kernel.evaluate(xs + shifts, ys + shifts)
    periodicity = float(np.max(np.abs(k_shift - k_xy) / (np.abs(k_xy) + 1e-300)))

    tail = kernel.effective_tail()
    tail_viol = None
    if tail is not None and math.isfinite(tail.beta):
        far = r >= tail.Rbar
        if np.any(far):
            bound = tail.Gamma * r[far] ** (-(n + tail.beta))
            tail_viol = float(np.max((k_xy[far] - bound) / bound))
            tail_viol = max(tail_viol, 0.0)
    elif tail is not None:
        far = r > tail.Rbar
        tail_viol = float(np.max(np.abs(k_xy[far]))) if np.any(far) else 0.0

    return KernelValidationReport(
        symmetry_max=symmetry,
        lower_bound_violation=max(lower_viol, 0.0),
        upper_bound_violation=max(upper_viol, 0.0),
        periodicity_max=periodicity,
        tail_violation=tail_viol,
        n_samples=sample_count,
        tolerance=tolerance,
    )


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A periodic double-well potential with zeros at the pure phases."""

    variant: str
    coeff: CoeffField
    d: Optional[float] = None
    Wstar: Optional[float] = None

    def __post_init__(self):
        if self.variant not in ("quartic", "cosine"):
            raise ConfigError(f"unknown potential variant {self.variant!r}")
        if self.variant == "quartic":
            if self.d is None or self.d <= 1.0:
                raise ConfigError("quartic potential needs exponent d > 1")

    @classmethod
    def quartic(cls, d: float = 2.0, coeff: Optional[CoeffField] = None,
                Wstar: Optional[float] = None) -> "PotentialSpec":
        coeff = coeff or CoeffField("constant", {"value": 1.0})
        return cls(variant="quartic", coeff=coeff, d=d, Wstar=Wstar)

    @classmethod
    def cosine(cls, coeff: Optional[CoeffField] = None,
               Wstar: Optional[float] = None) -> "PotentialSpec":
        coeff = coeff or CoeffField("constant", {"value": 1.0})
        return cls(variant="cosine", coeff=coeff, Wstar=Wstar)

    def well(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if self.variant == "quartic":
            return np.abs(1.0 - r * r) ** self.d
        return 1.0 + np.cos(np.pi * r)

    def well_derivative(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if self.variant == "quartic":
            g = 1.0 - r * r
            return -2.0 * self.d * r * np.abs(g) ** (self.d - 1.0) * np.sign(g)
        return -np.pi * np.sin(np.pi * r)

    def evaluate(self, points: np.ndarray, r: np.ndarray):
        """Vectorized (W, W_r) on points paired with state values r."""
        q = self.coeff.eval(points)
        return q * self.well(r), q * self.well_derivative(r)

    def bound_Wstar(self, n: int = 2) -> float:
        """Numeric bound for W and |W_r| on r in [-1, 1]."""
        if self.Wstar is not None:
            return self.Wstar
        qmax = self.coeff.sampled_range(n=n)[1]
        rs = np.linspace(-1.0, 1.0, 4001)
        return float(qmax * max(self.well(rs).max(), np.abs(self.well_derivative(rs)).max()))


def potential_eval(potential: PotentialSpec, x, r: float) -> tuple[float, float]:
    """Evaluate (W, W_r) at one point; r must stay near [-1, 1]."""
    if abs(r) > 1.0 + R_EPS:
        raise PreconditionError(f"state value r={r} is far outside [-1, 1]")
    x = np.asarray(x, dtype=np.float64)
    w, wr = potential.evaluate(x[None, :], np.asarray([r]))
    return float(w[0]), float(wr[0])


GAMMA_THETAS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


def well_depth(potential: PotentialSpec, theta: float, n: int = 2) -> float:
    """gamma(theta) = inf over the medium and |r| <= theta of W(x, r).

    Dense 1-D minimization over r (grid 1e-4 with local refinement) times the
    sampled infimum of the coefficient field.
    """
    qmin = potential.coeff.sampled_range(n=n)[0]
    if theta == 0.0:
        return float(qmin * potential.well(np.asarray(0.0)))
    rs = np.arange(-theta, theta + 1e-12, 1e-4)
    rs = np.clip(rs, -theta, theta)
    w = potential.well(rs)
    i = int(np.argmin(w))
    lo = max(-theta, rs[i] - 1e-4)
    hi = min(theta, rs[i] + 1e-4)
    fine = np.linspace(lo, hi, 2001)
    fine = np.append(fine, [theta, -theta])
    return float(qmin * potential.well(fine).min())


@dataclass
class PotentialValidationReport:
    gamma_thetas: tuple
    gamma_values: tuple
    zeros_violation: float
    bound_violation: float
    periodicity_max: float
    Wstar: float
    tolerance: float

    @property
    def passed(self) -> bool:
        vals = np.asarray(self.gamma_values)
        monotone = bool(np.all(np.diff(vals) <= 1e-15))
        positive = bool(np.all(vals > 0.0))
        return (monotone and positive
                and self.zeros_violation <= self.tolerance
                and self.bound_violation <= self.tolerance
                and self.periodicity_max <= self.tolerance)


def potential_validate(potential: PotentialSpec, n: int = 2, sample_count: int = 400,
                       rng_seed: int = 0, tolerance: float = 1e-12) -> PotentialValidationReport:
    """Check (W1)-(W4) on samples and tabulate the well depth gamma(theta)."""
    rng = np.random.default_rng(rng_seed)
    xs = rng.uniform(-3.0, 3.0, size=(sample_count, n))
    w_plus, _ = potential.evaluate(xs, np.ones(sample_count))
    w_minus, _ = potential.evaluate(xs, -np.ones(sample_count))
    zeros = float(max(np.abs(w_plus).max(), np.abs(w_minus).max()))

    wstar = potential.bound_Wstar(n=n)
    rs = rng.uniform(-1.0, 1.0, size=sample_count)
    w, wr = potential.evaluate(xs, rs)
    bound_viol = float(max((w - wstar).max(), (np.abs(wr) - wstar).max(), 0.0))

    shifts = rng.integers(-2, 3, size=(sample_count, n)).astype(np.float64)
    w2, _ = potential.evaluate(xs + shifts, rs)
    period = float(np.max(np.abs(w2 - w) / (np.abs(w) + 1e-300)))

    gammas = tuple(well_depth(potential, th, n=n) for th in GAMMA_THETAS)
    return PotentialValidationReport(
        gamma_thetas=GAMMA_THETAS,
        gamma_values=gammas,
        zeros_violation=zeros,
        bound_violation=bound_viol,
        periodicity_max=period,
        Wstar=wstar,
        tolerance=tolerance,
    )
