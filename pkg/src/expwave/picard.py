"""
Local Cauchy solver by Picard iteration on the Duhamel formula.

    u(t) = S(t)(u0, u1) + ∫_0^t S(t - τ)(0, e^{u(τ)}) dτ

evaluated on the characteristic grid: the free part uses exact shifts of u0
and a trapezoid integral of u1 over [x - t, x + t]; the Duhamel part is a
trapezoid rule in τ over stored levels of a trapezoid rule in ξ over
[x - (t - τ), x + (t - τ)]. Every window sum is accumulated from the centre
outward, so a value depends only on data inside its own backward light cone,
in a fixed order. That is what makes cone-localized solves bit-identical to
global ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .wavefield import (C0_BOUND, Grid, InitialData, StatePair, WaveField, make_initial_data,
                        sobolev_embedding_constant)

MAX_HALVINGS = 6


class PicardError(RuntimeError):
    pass


@dataclass(frozen=True)
class PicardConfig:
    c0_const: float = C0_BOUND
    c_star: float = field(default_factory=sobolev_embedding_constant)
    tol: float = 1e-12
    max_iter: int = 60

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class PicardResult:
    field: WaveField
    velocity: np.ndarray
    T_local: float
    iterations: int
    contraction_estimate: float
    differences: list = field(default_factory=list)
    T_proof: float = float("nan")
    halvings: int = 0

    def state_at(self, n: int) -> StatePair:
        """Trajectory pair at level n, restricted to its valid cells."""
        m = self.field.valid_mask[n]
        return StatePair(self.field.x[m], self.field.levels[n, m], self.velocity[n, m])

    def summary(self) -> dict:
        return {"T_local": self.T_local, "T_proof": self.T_proof, "iterations": self.iterations,
                "contraction_estimate": self.contraction_estimate, "halvings": self.halvings}


def radius(T: float, norm_h: float, cfg: PicardConfig) -> float:
    """R = 2 C0 (1 + T) ||(u0, u1)||_H."""
    return 2.0 * cfg.c0_const * (1.0 + T) * norm_h


def contraction_bound(T: float, norm_h: float, cfg: PicardConfig) -> float:
    """k = C0 T (1 + T) e^{C* R}, the Lipschitz constant of the iteration map on the ball."""
    return cfg.c0_const * T * (1.0 + T) * math.exp(cfg.c_star * radius(T, norm_h, cfg))


def _smallness_gap(T: float, norm_h: float, cfg: PicardConfig) -> float:
    R = radius(T, norm_h, cfg)
    return T * (1.0 + T) - R * math.exp(-cfg.c_star * R) / (2.0 * math.sqrt(2.0) * cfg.c0_const)


def local_T(norm_h: float, cfg: PicardConfig | None = None) -> float:
    """Largest T <= 1 with T(1+T) <= R e^{-C* R} / (2√2 C0), R = 2 C0 (1+T) norm_h.

    The admissible set is scanned on a log grid for its last sign change,
    then bisected in log T to relative width 1e-12.
    """
    cfg = cfg or PicardConfig()
    if norm_h < 0 or not math.isfinite(norm_h):
        raise ValueError("norm_h must be finite and >= 0")
    if norm_h == 0.0:
        return 1.0
    if _smallness_gap(1.0, norm_h, cfg) <= 0:
        return 1.0
    # the gap is negative as T -> 0 for any finite norm
    logs = np.linspace(-700.0, 0.0, 7001)
    gaps = np.array([_smallness_gap(math.exp(v), norm_h, cfg) for v in logs])
    ok = np.flatnonzero(gaps <= 0)
    if ok.size == 0:
        raise PicardError("no admissible T found")
    k = int(ok[-1])
    lo, hi = logs[k], logs[k + 1]
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if _smallness_gap(math.exp(mid), norm_h, cfg) <= 0:
            lo = mid
        else:
            hi = mid
    return math.exp(lo)


def _free_solution(u0, u1, h, N):
    """S(t_n)(u0, u1) for n = 0..N: position and velocity on the shrinking grid."""
    nx = u0.size
    du0 = np.gradient(u0, h)
    U = np.zeros((N + 1, nx))
    V = np.zeros((N + 1, nx))
    U[0] = u0
    V[0] = u1
    W = u1.copy()
    for m in range(1, N + 1):
        sl = slice(m, nx - m)
        lo, hi = u1[: nx - 2 * m], u1[2 * m:]
        W[sl] = W[sl] + lo + hi
        U[m, sl] = 0.5 * (u0[: nx - 2 * m] + u0[2 * m:]) + 0.5 * h * (W[sl] - 0.5 * (lo + hi))
        V[m, sl] = 0.5 * (du0[2 * m:] - du0[: nx - 2 * m]) + 0.5 * (lo + hi)
    return U, V


def _duhamel(src, h, N, velocity=False):
    """∫_0^{t_n} S(t_n - τ)(0, src(τ)) dτ for every level n, position (and velocity)."""
    nx = src.shape[1]
    D = np.zeros((N + 1, nx))
    Dv = np.zeros((N + 1, nx)) if velocity else None
    for k in range(N + 1):
        f = src[k]
        ck = 0.5 if k == 0 else 1.0
        if velocity:
            # τ = t_n end point of the outer trapezoid for n = k
            Dv[k] += 0.5 * h * f if k > 0 else 0.0
        W = f.copy()
        for m in range(1, N - k + 1):
            sl = slice(m, nx - m)
            lo, hi = f[: nx - 2 * m], f[2 * m:]
            W[sl] = W[sl] + lo + hi
            D[k + m, sl] += (h * ck * 0.5) * (h * (W[sl] - 0.5 * (lo + hi)))
            if velocity:
                Dv[k + m, sl] += (h * ck * 0.5) * (lo + hi)
    return D, Dv


def _valid_mask(N, nx):
    i = np.arange(nx)
    n = np.arange(N + 1)[:, None]
    return (i >= n) & (i <= nx - 1 - n)


def _iterate(u0, u1, h, N, cfg: PicardConfig, measure_mask):
    U_free, V_free = _free_solution(u0, u1, h, N)
    mask = _valid_mask(N, u0.size)
    meas = mask if measure_mask is None else (mask & measure_mask)
    V = U_free.copy()
    diffs = []
    for it in range(1, cfg.max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            src = np.where(mask, np.exp(np.where(mask, V, 0.0)), 0.0)
        if not np.all(np.isfinite(src)):
            raise PicardError("no contraction at this T (iterate overflowed)")
        D, _ = _duhamel(src, h, N)
        V_new = np.where(mask, U_free + D, 0.0)
        d = float(np.max(np.abs(V_new - V)[meas])) if meas.any() else 0.0
        diffs.append(d)
        V = V_new
        if not math.isfinite(d):
            raise PicardError("no contraction at this T (non-finite iterate)")
        if d < cfg.tol:
            break
    else:
        ratio = _ratio(diffs, V, meas)
        if ratio >= 1.0:
            raise PicardError(f"no contraction at this T (ratio {ratio:.3g})")
        raise PicardError(f"max_iter exceeded at ratio {ratio:.3g}")
    src = np.where(mask, np.exp(np.where(mask, V, 0.0)), 0.0)
    _, Dv = _duhamel(src, h, N, velocity=True)
    vel = np.where(mask, V_free + Dv, 0.0)
    return V, vel, mask, diffs, it


def _ratio(diffs, V, meas) -> float:
    """Largest ratio of successive sup-differences above the rounding floor."""
    scale = float(np.max(np.abs(V[meas]))) if meas.any() else 1.0
    floor = 1e3 * np.finfo(float).eps * max(scale, 1.0)
    ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > floor and b > floor]
    return max(ratios) if ratios else 0.0


def picard_solve(data: InitialData, grid: Grid, cfg: PicardConfig | None = None,
                 T_local: float | None = None, measure_mask: np.ndarray | None = None,
                 max_halvings: int = MAX_HALVINGS) -> PicardResult:
    """Fixed point of the Duhamel map on [0, T_local].

    ``T_local`` defaults to :func:`local_T` of the data norm; on a failed
    contraction T is halved, at most ``max_halvings`` times. Convergence is
    measured on ``measure_mask`` (default: every valid cell).
    """
    cfg = cfg or PicardConfig()
    T_proof = local_T(data.h_norm, cfg) if math.isfinite(data.h_norm) else float("nan")
    T = T_proof if T_local is None else float(T_local)
    if not T > 0:
        raise PicardError("T_local must be positive")
    u0, u1 = data.sample(grid.x)
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(u1))):
        raise PicardError("non-finite initial data")
    h = grid.h
    last_err = None
    for halving in range(max_halvings + 1):
        N = int(math.floor(T / h + 1e-9))
        if 2 * N >= grid.nx:
            raise PicardError("domain exhausted: grid too narrow for T_local")
        mm = None if measure_mask is None else measure_mask[: N + 1]
        try:
            V, vel, mask, diffs, its = _iterate(u0, u1, h, N, cfg, mm)
        except PicardError as exc:
            last_err = exc
            if "no contraction" not in str(exc):
                raise
            T *= 0.5
            continue
        meas = mask if mm is None else mask & mm
        fld = WaveField(grid=grid, levels=V, valid_mask=mask, t0=0.0)
        return PicardResult(field=fld, velocity=vel, T_local=N * h if N else T, iterations=its,
                            contraction_estimate=_ratio(diffs, V, meas), differences=diffs,
                            T_proof=T_proof, halvings=halving)
    raise PicardError(f"{last_err}; gave up after {max_halvings} halvings")


def smooth_cutoff(x, x0: float, inner: float, outer: float):
    """C² bump: 1 on |x - x0| <= inner, 0 on |x - x0| >= outer, quintic smoothstep between."""
    r = np.clip((np.abs(np.asarray(x, float) - x0) - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - r**3 * (10.0 - 15.0 * r + 6.0 * r * r)


@dataclass
class ConeSolveResult:
    field: WaveField
    picard: PicardResult
    max_abs_diff: float | None


def cone_solve(data: InitialData, apex, h: float = 1e-3, cfg: PicardConfig | None = None,
               pad_factor: float = 2.0, check: bool = True) -> ConeSolveResult:
    """Picard solve of cutoff-localized data, restricted to the backward cone of ``apex``.

    The data are multiplied by a C² bump equal to 1 on the cone base
    |x - x0| <= t0 and vanishing beyond x0 ± (1 + pad_factor) t0. With
    ``check`` the unlocalized data are solved on the same grid and the two
    fields are compared inside the cone.
    """
    x0, t0 = float(apex[0]), float(apex[1])
    if not t0 > 0:
        raise PicardError("apex time must be positive")
    lo_w, hi_w = data.window
    if x0 - t0 < lo_w - 1e-12 or x0 + t0 > hi_w + 1e-12:
        raise PicardError("apex outside computed domain")
    outer = (1.0 + pad_factor) * t0
    grid = Grid.from_window(x0 - outer - 2 * h, x0 + outer + 2 * h, h, t0)
    chi = lambda x: smooth_cutoff(x, x0, t0, outer)  # noqa: E731
    half = max(outer, 0.5)  # the norm needs a window of length >= 1; chi vanishes beyond outer
    local = make_initial_data(lambda x: data.u0(x) * chi(x), lambda x: data.u1(x) * chi(x),
                              regularity=data.regularity, window=(x0 - half, x0 + half),
                              name=f"{data.name}-localized", params=dict(data.params), h=h)
    N = int(math.floor(t0 / h + 1e-9))
    T_, X_ = np.meshgrid(h * np.arange(N + 1), grid.x, indexing="ij")
    cone = np.abs(X_ - x0) <= t0 - T_ + 1e-12
    res = picard_solve(local, grid, cfg, T_local=t0, measure_mask=cone, max_halvings=0)
    levels = res.field.levels
    mask = res.field.valid_mask & cone[: levels.shape[0]]
    out = WaveField(grid=grid, levels=np.where(mask, levels, 0.0), valid_mask=mask, t0=0.0)
    diff = None
    if check:
        ref = picard_solve(data, grid, cfg, T_local=t0, measure_mask=cone, max_halvings=0)
        diff = float(np.max(np.abs(ref.field.levels[mask] - levels[mask])))
        if diff != 0.0:
            raise PicardError(f"localized solve differs from global solve inside the cone by {diff}")
    return ConeSolveResult(field=out, picard=res, max_abs_diff=diff)
