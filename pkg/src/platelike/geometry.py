"""Rational directions, lattice quotients, strips and the computational grid.

Directions are coprime integer vectors omega in Z^n (n = 2 or 3).  Two points
are equivalent when they differ by an integer vector orthogonal to omega; the
quotient is discretized on a grid h*Z^n with h = 1/m' so that unit translates
of the medium land on grid points exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ConfigError, InvalidDirectionError

__all__ = [
    "Direction",
    "Strip",
    "Grid",
    "orthogonal_lattice_basis",
    "reduce_to_fundamental",
    "strip_classify",
    "enumerate_cosets",
    "build_grid",
]


def _canonical_sign(vec):
    for c in vec:
        if c != 0:
            return vec if c > 0 else tuple(-x for x in vec)
    return vec


def orthogonal_lattice_basis(omega) -> list[tuple[int, ...]]:
    """Integer basis of the lattice {k in Z^n : omega . k = 0}.

    Found by enumerating short integer vectors; the result is checked for
    completeness through the Gram determinant, which must equal |omega|^2
    for a primitive direction.
    """
    omega = tuple(int(c) for c in omega)
    n = len(omega)
    if n < 2 or n > 3:
        raise ConfigError(f"supported dimensions are 2 and 3, got n={n}")
    if all(c == 0 for c in omega):
        raise InvalidDirectionError("direction vector must be nonzero")
    g = math.gcd(*(abs(c) for c in omega))
    if g != 1:
        raise InvalidDirectionError(f"direction {omega} is not coprime")

    norm_sq = sum(c * c for c in omega)
    bound = max(1, sum(abs(c) for c in omega))
    while bound <= 8 * sum(abs(c) for c in omega) + 8:
        candidates = []
        for k in product(range(-bound, bound + 1), repeat=n):
            if all(c == 0 for c in k):
                continue
            if sum(a * b for a, b in zip(omega, k)) != 0:
                continue
            ck = _canonical_sign(k)
            candidates.append((sum(c * c for c in ck), ck))
        candidates = sorted(set(candidates))
        basis: list[tuple[int, ...]] = []
        for _, k in candidates:
            trial = basis + [k]
            if np.linalg.matrix_rank(np.array(trial, dtype=float)) == len(trial):
                basis = trial
            if len(basis) == n - 1:
                break
        if len(basis) == n - 1:
            z = np.array(basis, dtype=np.int64)
            gram = z @ z.T
            if int(round(np.linalg.det(gram))) == norm_sq:
                return [tuple(int(c) for c in v) for v in basis]
        bound *= 2
    raise InvalidDirectionError(
        f"could not build a complete orthogonal basis for {omega}"
    )


@dataclass(frozen=True)
class Direction:
    """A rational direction with a basis of its orthogonal integer lattice."""

    omega: tuple[int, ...]
    basis: tuple[tuple[int, ...], ...]
    norm: float

    @classmethod
    def from_vector(cls, omega) -> "Direction":
        omega = tuple(int(c) for c in omega)
        if all(c == 0 for c in omega):
            raise InvalidDirectionError("direction vector must be nonzero")
        g = math.gcd(*(abs(c) for c in omega))
        omega = tuple(c // g for c in omega)
        basis = tuple(orthogonal_lattice_basis(omega))
        return cls(omega=omega, basis=basis, norm=math.sqrt(sum(c * c for c in omega)))

    @property
    def n(self) -> int:
        return len(self.omega)

    def omega_dot(self, x) -> float:
        return float(np.dot(np.asarray(x, dtype=float), np.asarray(self.omega, dtype=float)))


def _adjugate(g: np.ndarray) -> np.ndarray:
    if g.shape == (1, 1):
        return np.array([[1]], dtype=np.int64)
    if g.shape == (2, 2):
        return np.array(
            [[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]], dtype=np.int64
        )
    raise ConfigError(f"unsupported quotient rank {g.shape[0]}")


def _int_det(g: np.ndarray) -> int:
    if g.shape == (1, 1):
        return int(g[0, 0])
    return int(g[0, 0]) * int(g[1, 1]) - int(g[0, 1]) * int(g[1, 0])


class _Reducer:
    """Exact coset reduction on the integer grid.

    Works in grid coordinates xi (x = h*xi).  The acting lattice has basis
    rows mprime * m_i * z_i; tangential coordinates are rationals with a
    fixed denominator, so floor reduction is exact integer arithmetic and
    the half-open fundamental-domain convention carries no float ties.
    """

    def __init__(self, direction: Direction, m, mprime: int):
        z = np.array(direction.basis, dtype=np.int64)
        m = np.asarray(m, dtype=np.int64)
        if m.shape != (direction.n - 1,) or np.any(m < 1):
            raise ConfigError(f"period multiplier must be {direction.n - 1} integers >= 1")
        self.z_scaled = z * m[:, None]
        gram = self.z_scaled @ self.z_scaled.T
        self.r_mat = _adjugate(gram) @ self.z_scaled
        self.denom = _int_det(gram) * int(mprime)
        self.mprime = int(mprime)

    def reduce(self, xi: np.ndarray):
        """Return (representative xi0, integer coset coordinates mu)."""
        xi = np.asarray(xi, dtype=np.int64)
        single = xi.ndim == 1
        pts = np.atleast_2d(xi)
        nu = pts @ self.r_mat.T
        mu = np.floor_divide(nu, self.denom)
        xi0 = pts - self.mprime * (mu @ self.z_scaled)
        if single:
            return xi0[0], mu[0]
        return xi0, mu


def reduce_to_fundamental(xi, direction: Direction, m=None, grid_denominator: int = 1):
    """Reduce a grid point to its fundamental-domain representative.

    ``xi`` is given in integer grid coordinates (x = xi / grid_denominator).
    Returns ``(representative, mu)`` with ``xi - representative`` equal to the
    integer combination ``grid_denominator * sum(mu_i * m_i * z_i)``.
    """
    if m is None:
        m = (1,) * (direction.n - 1)
    reducer = _Reducer(direction, m, grid_denominator)
    xi0, mu = reducer.reduce(np.asarray(xi, dtype=np.int64))
    if np.asarray(xi).ndim == 1:
        return tuple(int(c) for c in xi0), tuple(int(c) for c in mu)
    return xi0, mu


@dataclass(frozen=True)
class Strip:
    """The slab A <= omega . x <= B (coordinates are not normalized)."""

    A: float
    B: float
    direction: Direction

    def __post_init__(self):
        if not self.A < self.B:
            raise ConfigError(f"strip requires A < B, got A={self.A}, B={self.B}")

    @property
    def normalized_width(self) -> float:
        return (self.B - self.A) / self.direction.norm


def strip_classify(x, strip: Strip) -> str:
    """Classify a point relative to the strip; the interval is closed."""
    w = strip.direction.omega_dot(x)
    if w < strip.A:
        return "below"
    if w > strip.B:
        return "above"
    return "inside"


@dataclass(frozen=True, eq=False)
class Grid:
    """One site per coset of the (m-scaled) orthogonal lattice in a window.

    Sites are integer coordinate vectors xi with x = h*xi, enumerated in
    lexicographic order, restricted to window_lo <= omega . x <= window_hi.
    The field value at any other grid point is recovered by exact coset
    reduction plus far-field clamping.
    """

    direction: Direction
    h: float
    mprime: int
    m: tuple[int, ...]
    window_lo: float
    window_hi: float
    site_xi: np.ndarray
    _reducer: _Reducer = field(repr=False)
    _lut: np.ndarray = field(repr=False)
    _lut_lo: np.ndarray = field(repr=False)
    _lut_strides: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.direction.n

    @property
    def n_sites(self) -> int:
        return self.site_xi.shape[0]

    @property
    def coords(self) -> np.ndarray:
        return self.site_xi * self.h

    @property
    def omega_dot_sites(self) -> np.ndarray:
        omega = np.asarray(self.direction.omega, dtype=np.int64)
        return (self.site_xi @ omega) * self.h

    def reduce_points(self, xi: np.ndarray):
        """Map arbitrary grid points to (site index, clamp sign).

        Returns ``idx`` (int, -1 for clamped points) and ``clamp`` (+1 below
        the window, -1 above, 0 on live sites).
        """
        xi = np.asarray(xi, dtype=np.int64)
        pts = np.atleast_2d(xi)
        omega = np.asarray(self.direction.omega, dtype=np.int64)
        w = (pts @ omega) * self.h
        below = w < self.window_lo
        above = w > self.window_hi
        live = ~(below | above)
        idx = np.full(pts.shape[0], -1, dtype=np.int64)
        if np.any(live):
            xi0, _ = self._reducer.reduce(pts[live])
            rel = xi0 - self._lut_lo
            if np.any(rel < 0) or np.any(rel @ self._lut_strides >= self._lut.size):
                raise AssertionError("reduced point outside the site bounding box")
            found = self._lut[rel @ self._lut_strides]
            if np.any(found < 0):
                raise AssertionError("reduced point missing from site table")
            idx[live] = found
        clamp = np.zeros(pts.shape[0], dtype=np.float64)
        clamp[below] = 1.0
        clamp[above] = -1.0
        if xi.ndim == 1:
            return int(idx[0]), float(clamp[0])
        return idx, clamp

    def site_index(self, xi) -> int:
        idx, clamp = self.reduce_points(np.asarray(xi, dtype=np.int64))
        if clamp != 0.0:
            raise KeyError(f"point {xi} is outside the window")
        return idx

    def manifest_dict(self) -> dict:
        """Sidecar description of the site ordering, for reproducibility."""
        return {
            "omega": list(self.direction.omega),
            "basis": [list(z) for z in self.direction.basis],
            "h": self.h,
            "grid_denominator": self.mprime,
            "period_multiplier": list(self.m),
            "window": [self.window_lo, self.window_hi],
            "site_order": "lexicographic xi",
            "n_sites": self.n_sites,
            "sites_xi": self.site_xi.tolist(),
        }


def enumerate_cosets(direction: Direction, h: float, window_lo: float,
                     window_hi: float, m=None) -> np.ndarray:
    """Grid coordinates of one representative per coset with omega.x in range.

    Returns an array of integer coordinates xi (x = h*xi), lexicographically
    ordered, covering the fundamental domain of the m-scaled quotient.
    """
    d = direction
    mprime = int(round(1.0 / h))
    if m is None:
        m = (1,) * (d.n - 1)
    reducer = _Reducer(d, m, mprime)
    omega = np.asarray(d.omega, dtype=np.int64)
    z_scaled = reducer.z_scaled
    # Bounding box: tangential extent of the fundamental cell plus the reach
    # of the window along the direction axis.
    wmax = max(abs(window_lo), abs(window_hi))
    norm_sq = float(omega @ omega)
    span = np.abs(z_scaled).sum(axis=0) + np.abs(omega) * (wmax / norm_sq) + 2.0
    lo = np.floor(-span * mprime).astype(np.int64)
    hi = np.ceil(span * mprime).astype(np.int64)

    axes = [np.arange(lo[j], hi[j] + 1, dtype=np.int64) for j in range(d.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)

    w = (pts @ omega) * (1.0 / mprime)
    pts = pts[(w >= window_lo) & (w <= window_hi)]
    nu = pts @ reducer.r_mat.T
    in_domain = np.all((nu >= 0) & (nu < reducer.denom), axis=1)
    sites = pts[in_domain]
    order = np.lexsort(tuple(sites[:, j] for j in reversed(range(d.n))))
    return np.ascontiguousarray(sites[order])


def build_grid(strip: Strip, h: float, L: float, m=None) -> Grid:
    """Enumerate one site per coset inside the window [A-L, B+L] (omega . x units)."""
    mprime = int(round(1.0 / h))
    if mprime < 1 or abs(h * mprime - 1.0) > 1e-12:
        raise ConfigError(f"grid spacing must be 1/m for an integer m >= 1, got h={h}")
    h = 1.0 / mprime
    if L < 2:
        raise ConfigError(f"window buffer must satisfy L >= 2, got L={L}")
    d = strip.direction
    if m is None:
        m = (1,) * (d.n - 1)
    m = tuple(int(c) for c in m)
    reducer = _Reducer(d, m, mprime)

    window_lo = strip.A - L
    window_hi = strip.B + L
    sites = enumerate_cosets(d, h, window_lo, window_hi, m=m)

    lut_lo = sites.min(axis=0)
    extent = sites.max(axis=0) - lut_lo + 1
    strides = np.ones(d.n, dtype=np.int64)
    for j in range(d.n - 2, -1, -1):
        strides[j] = strides[j + 1] * extent[j + 1]
    lut = np.full(int(extent.prod()), -1, dtype=np.int64)
    keys = (sites - lut_lo) @ strides
    if np.unique(keys).size != keys.size:
        raise AssertionError("coset representatives are not unique")
    lut[keys] = np.arange(sites.shape[0], dtype=np.int64)

    return Grid(
        direction=d,
        h=h,
        mprime=mprime,
        m=m,
        window_lo=window_lo,
        window_hi=window_hi,
        site_xi=sites,
        _reducer=reducer,
        _lut=lut,
        _lut_lo=lut_lo,
        _lut_strides=strides,
    )
