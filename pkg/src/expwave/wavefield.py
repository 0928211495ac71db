"""
Core data types for the 1D exponential wave equation.

Holds the characteristic grid (Δt = Δx = h), sampled initial data with its
uniform-local H¹×L² norm, space-time fields with a light-cone validity mask,
and the explicit d'Alembert group S(t) used by the Duhamel iteration.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

REGULARITY_TAGS = ("H1L2", "W1infL_inf")

# Upper bound on the growth constant of the wave group in H^1_{loc,u} x L^2_{loc,u};
# validated by ``measure_c0`` in the test suite.
C0_BOUND = 4.0


class WavefieldError(ValueError):
    """Invalid data or grid for a wavefield operation."""


@dataclass(frozen=True)
class Grid:
    """Uniform characteristic grid with CFL ratio fixed to one."""

    x_min: float
    h: float
    nx: int
    nt_max: int

    def __post_init__(self):
        if not self.h > 0:
            raise WavefieldError(f"grid spacing must be positive, got {self.h}")
        if self.nx < 3:
            raise WavefieldError(f"need at least 3 spatial points, got {self.nx}")
        if self.nt_max < 1:
            raise WavefieldError(f"need at least 1 time level, got {self.nt_max}")

    @classmethod
    def from_window(cls, x_lo: float, x_hi: float, h: float, t_end: float) -> Grid:
        """Grid covering [x_lo, x_hi] with enough levels to reach ``t_end``."""
        if not h > 0:
            raise WavefieldError(f"grid spacing must be positive, got {h}")
        nx = int(round((x_hi - x_lo) / h)) + 1
        nt = int(math.ceil(t_end / h - 1e-9)) + 1
        return cls(x_min=float(x_lo), h=float(h), nx=nx, nt_max=max(nt, 1))

    @property
    def x_max(self) -> float:
        return self.x_min + (self.nx - 1) * self.h

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.nx)

    def index_of(self, x: float) -> int:
        return int(round((x - self.x_min) / self.h))


@dataclass(frozen=True)
class StatePair:
    """Position/velocity pair sampled on a common uniform grid ``x``."""

    x: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if not (len(self.x) == len(self.u) == len(self.v)):
            raise WavefieldError("state components must share one grid")

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])


@dataclass(frozen=True)
class InitialData:
    """Initial pair (u0, u1) given as vectorized samplers.

    ``h_norm`` is the uniform-local norm on ``window`` and is filled in by
    :func:`make_initial_data`.
    """

    u0: Callable[[np.ndarray], np.ndarray]
    u1: Callable[[np.ndarray], np.ndarray]
    regularity: str = "W1infL_inf"
    h_norm: float = float("nan")
    window: tuple[float, float] = (-1.0, 1.0)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regularity not in REGULARITY_TAGS:
            raise WavefieldError(f"unknown regularity tag {self.regularity!r}")

    def sample(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        u0 = np.broadcast_to(np.asarray(self.u0(x), dtype=float), x.shape).copy()
        u1 = np.broadcast_to(np.asarray(self.u1(x), dtype=float), x.shape).copy()
        return u0, u1


def make_initial_data(
    u0,
    u1,
    regularity: str = "W1infL_inf",
    window: tuple[float, float] = (-1.0, 1.0),
    name: str = "custom",
    params: dict | None = None,
    h: float = 1e-3,
) -> InitialData:
    """Build :class:`InitialData` and compute its norm on ``window``."""
    data = InitialData(u0=u0, u1=u1, regularity=regularity, window=tuple(window),
                       name=name, params=dict(params or {}))
    norm = norm_H(data, window, h=h)
    if regularity == "W1infL_inf":
        _check_bounded(data, window, h)
    return InitialData(u0=u0, u1=u1, regularity=regularity, h_norm=norm,
                       window=tuple(window), name=name, params=dict(params or {}))


def _check_bounded(data: InitialData, window, h):
    x = np.arange(window[0] - 2 * h, window[1] + 2 * h + h / 2, h)
    u0, u1 = data.sample(x)
    du0 = np.gradient(u0, h, edge_order=2)
    for arr in (u0, du0, u1):
        if not np.all(np.isfinite(arr)):
            raise WavefieldError("non-finite initial data")


def _unit_window_sums(density: np.ndarray, h: float, m: int) -> np.ndarray:
    """Trapezoid integrals of ``density`` over every run of ``m`` cells."""
    cum = cumulative_trapezoid(density, dx=h, initial=0.0)
    return cum[m:] - cum[:-m]


def norm_H(data: InitialData, window: tuple[float, float], h: float = 1e-3) -> float:
    """Uniform-local norm sup_J (||u0||^2_{H^1(J)} + ||u1||^2_{L^2(J)})^{1/2}.

    J ranges over unit subintervals of ``window``; integrals are composite
    trapezoid on a grid whose spacing divides 1.
    """
    lo, hi = float(window[0]), float(window[1])
    if hi - lo < 1.0 - 1e-12:
        raise WavefieldError("norm window must have length >= 1")
    m = int(math.ceil(1.0 / h))
    hh = 1.0 / m
    # padded by one cell on each side so u0' is centered on the window edge
    n = int(round((hi - lo) / hh))
    x = lo + hh * np.arange(-1, n + 2)
    u0, u1 = data.sample(x)
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(u1))):
        raise WavefieldError("non-finite initial data")
    du0 = np.gradient(u0, hh, edge_order=2)
    dens = (u0**2 + du0**2 + u1**2)[1:-1]
    sums = _unit_window_sums(dens, hh, m)
    return float(math.sqrt(max(sums.max(), 0.0)))


def pair_norm_H(state: StatePair) -> float:
    """Uniform-local H¹×L² norm of a sampled pair over its own grid."""
    h = state.h
    m = int(round(1.0 / h))
    if abs(m * h - 1.0) > 1e-9 or len(state.x) <= m:
        raise WavefieldError("pair norm needs a grid with 1/h integer and length > 1")
    du = np.gradient(state.u, h, edge_order=2)
    dens = state.u**2 + du**2 + state.v**2
    return float(math.sqrt(max(_unit_window_sums(dens, h, m).max(), 0.0)))


def wave_group(state: StatePair, t: float) -> StatePair:
    """Apply the free d'Alembert group S(t) to a sampled pair.

    The result lives on the shrunken grid [x_min + t, x_max - t]. Shifts by a
    whole number of cells are exact; other shifts use linear interpolation.
    """
    if t < 0:
        raise WavefieldError("wave group needs t >= 0")
    x, u0, u1 = state.x, state.u, state.v
    h = state.h
    shift = t / h
    k = int(round(shift))
    if abs(shift - k) < 1e-9:
        if len(x) - 2 * k < 2:
            raise WavefieldError("domain exhausted")
        du0 = np.gradient(u0, h, edge_order=2)
        cum = cumulative_trapezoid(u1, dx=h, initial=0.0)
        sl_p = slice(2 * k, None)
        sl_m = slice(0, len(x) - 2 * k)
        xs = x[k:len(x) - k]
        u = 0.5 * (u0[sl_p] + u0[sl_m]) + 0.5 * (cum[sl_p] - cum[sl_m])
        v = 0.5 * (du0[sl_p] - du0[sl_m]) + 0.5 * (u1[sl_p] + u1[sl_m])
        return StatePair(xs, u, v)
    lo, hi = x[0] + t, x[-1] - t
    first = int(math.ceil((lo - x[0]) / h - 1e-9))
    last = int(math.floor((hi - x[0]) / h + 1e-9))
    if last - first < 1:
        raise WavefieldError("domain exhausted")
    xs = x[first:last + 1]
    du0 = np.gradient(u0, h, edge_order=2)
    cum = cumulative_trapezoid(u1, dx=h, initial=0.0)

    def at(arr, pts):
        return np.interp(pts, x, arr)

    u = 0.5 * (at(u0, xs + t) + at(u0, xs - t)) + 0.5 * (at(cum, xs + t) - at(cum, xs - t))
    v = 0.5 * (at(du0, xs + t) - at(du0, xs - t)) + 0.5 * (at(u1, xs + t) + at(u1, xs - t))
    return StatePair(xs, u, v)


def sobolev_embedding_constant() -> float:
    """C* with ||v||_inf <= C* ||v||_{H^1(J)} on any unit interval J."""
    return math.sqrt(2.0)


def measure_c0(n_pairs: int = 100, seed: int = 0, h: float = 1e-2,
               times=(0.25, 0.5, 1.0, 2.0)) -> float:
    """Largest observed ||S(t)U||_H / ((1+t)||U||_H) over random band-limited pairs."""
    rng = np.random.default_rng(seed)
    t_max = max(times)
    x = np.arange(-4.0 - t_max, 4.0 + t_max + h / 2, h)
    worst = 0.0
    for _ in range(n_pairs):
        u0 = _random_band_limited(rng, x)
        u1 = _random_band_limited(rng, x)
        base = pair_norm_H(StatePair(x, u0, u1))
        for t in times:
            out = wave_group(StatePair(x, u0, u1), t)
            worst = max(worst, pair_norm_H(out) / ((1.0 + t) * base))
    return worst


def _random_band_limited(rng, x, modes: int = 6, k_max: float = 6.0):
    amp = rng.normal(size=modes) / np.arange(1, modes + 1)
    k = rng.uniform(0.2, k_max, size=modes)
    ph = rng.uniform(0, 2 * np.pi, size=modes)
    return rng.normal() + np.sum(amp[:, None] * np.cos(k[:, None] * x[None, :] + ph[:, None]), axis=0)


@dataclass
class WaveField:
    """Space-time samples u[n, i] at (x_min + i h, t0 + n h).

    ``valid_mask`` marks cells inside the computed domain; it is closed
    downward along characteristics.
    """

    grid: Grid
    levels: np.ndarray
    valid_mask: np.ndarray
    t0: float = 0.0

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def n_levels(self) -> int:
        return self.levels.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.grid.h * np.arange(self.n_levels)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def level_index(self, t: float) -> int:
        return int(round((t - self.t0) / self.grid.h))

    def is_valid(self, n: int, i: int) -> bool:
        return 0 <= n < self.n_levels and 0 <= i < self.grid.nx and bool(self.valid_mask[n, i])

    def value(self, x: float, t: float) -> float:
        n = self.level_index(t)
        i = self.grid.index_of(x)
        if not self.is_valid(n, i):
            raise WavefieldError(f"point ({x}, {t}) is outside the computed domain")
        return float(self.levels[n, i])

    def node_derivatives(self, n: np.ndarray, i: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(u_t, u_x) at node indices, NaN where no valid stencil exists.

        Centered differences where both neighbours are valid, second-order
        one-sided stencils otherwise.
        """
        n = np.asarray(n, dtype=np.intp)
        i = np.asarray(i, dtype=np.intp)
        ut = _axis_derivative(self.levels, self.valid_mask, n, i, axis=0, h=self.h)
        ux = _axis_derivative(self.levels, self.valid_mask, n, i, axis=1, h=self.h)
        return ut, ux

    def level_derivatives(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        i = np.arange(self.grid.nx)
        return self.node_derivatives(np.full_like(i, n), i)

    def check_causality(self) -> bool:
        """True when every valid interior cell has valid characteristic parents."""
        m = self.valid_mask
        if m.shape[0] < 2:
            return True
        child = m[1:, 1:-1]
        parents = m[:-1, :-2] & m[:-1, 2:]
        edge_ok = not (m[1:, 0].any() or m[1:, -1].any())
        return bool(edge_ok and not np.any(child & ~parents))


def _axis_derivative(u, mask, n, i, axis, h):
    nmax, imax = u.shape

    def get(dn, di):
        nn, ii = n + dn, i + di
        ok = (nn >= 0) & (nn < nmax) & (ii >= 0) & (ii < imax)
        nn_c = np.clip(nn, 0, nmax - 1)
        ii_c = np.clip(ii, 0, imax - 1)
        ok &= mask[nn_c, ii_c]
        return np.where(ok, u[nn_c, ii_c], np.nan), ok

    if axis == 0:
        step = lambda k: (k, 0)  # noqa: E731
    else:
        step = lambda k: (0, k)  # noqa: E731
    f0, ok0 = get(*step(0))
    fp1, okp1 = get(*step(1))
    fm1, okm1 = get(*step(-1))
    fp2, okp2 = get(*step(2))
    fm2, okm2 = get(*step(-2))
    out = np.full(np.shape(n), np.nan)
    central = ok0 & okp1 & okm1
    fwd = ok0 & okp1 & okp2 & ~central
    bwd = ok0 & okm1 & okm2 & ~central & ~fwd
    out = np.where(central, (fp1 - fm1) / (2 * h), out)
    out = np.where(fwd, (-3 * f0 + 4 * fp1 - fp2) / (2 * h), out)
    out = np.where(bwd, (3 * f0 - 4 * fm1 + fm2) / (2 * h), out)
    return out


def trapezoid_interval(x: np.ndarray, f: np.ndarray, lo: float, hi: float) -> float:
    """Trapezoid integral of sampled ``f`` over [lo, hi] with interpolated end cells."""
    if hi <= lo:
        return 0.0
    inside = (x > lo) & (x < hi)
    xs = np.concatenate(([lo], x[inside], [hi]))
    fs = np.concatenate(([np.interp(lo, x, f)], f[inside], [np.interp(hi, x, f)]))
    return float(np.sum(0.5 * (fs[1:] + fs[:-1]) * np.diff(xs)))
