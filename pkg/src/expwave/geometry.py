"""
Blow-up curve estimation and the cone/distance geometry around it.

T(x) is read off each grid column: e^{-u/2} is linear in t for the ODE
profile and squeezed between two such lines near any non-characteristic
point, so a straight-line fit over the last levels before the column dies
extrapolates to T(x). The curve is then treated as the piecewise-linear
interpolant of its samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .solver import SolveOutcome

FIT_LEVELS = 20
FIT_DEPTH = 6.0
# second pass: refit on T1 - t in [REFIT_NEAR h, REFIT_FAR h], away from the
# last few levels where the discrete solution lags the continuum one
REFIT_NEAR = 20
REFIT_FAR = 60
FIT_REL_RESIDUAL = 0.05
DELTA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


class GeometryError(ValueError):
    pass


class NoBlowupDetected(GeometryError):
    pass


@dataclass
class BlowupCurve:
    xs: np.ndarray
    Ts: np.ndarray
    lipschitz_defect: float
    method: str
    h: float
    methods: list[str] = field(default_factory=list)

    def T_at(self, x):
        return np.interp(x, self.xs, self.Ts)

    @property
    def accepted(self) -> bool:
        return self.lipschitz_defect <= 2 * self.h

    @classmethod
    def from_samples(cls, xs, Ts, h, method="threshold"):
        xs = np.asarray(xs, float)
        Ts = np.asarray(Ts, float)
        c = cls(xs=xs, Ts=Ts, lipschitz_defect=0.0, method=method, h=float(h))
        c.lipschitz_defect = lipschitz_certificate(c)
        return c


@dataclass
class ConeTestResult:
    x0: float
    delta_min: float
    is_noncharacteristic: bool
    margin: float


def _column_tail(outcome: SolveOutcome, i: int):
    f = outcome.field
    col_mask = f.valid_mask[:, i]
    if not col_mask.any():
        raise NoBlowupDetected("no valid data in column")
    last = int(np.flatnonzero(col_mask)[-1])
    u = f.levels[: last + 1, i]
    crossed = np.flatnonzero(col_mask[: last + 1] & (u > outcome.u_max))
    nc = int(crossed[0]) if crossed.size else None
    return u, last, nc


def _edge_limited(outcome: SolveOutcome, i: int, last: int) -> bool:
    """True when the column ended at the light-cone edge of the grid or at the run's end."""
    f = outcome.field
    nx = f.grid.nx
    edge = min(i, nx - 1 - i)
    return last >= edge or last >= f.n_levels - 1


def estimate_T(outcome: SolveOutcome, x: float, return_method: bool = False):
    """Blow-up time at ``x`` from the solved field.

    A least-squares line through e^{-u/2} over the last ``FIT_LEVELS``
    levels before the column crosses u_max or stops being computable because
    a crossing entered its backward cone. Falls back to the crossing time plus
    half a step when the fit is poor.
    """
    f = outcome.field
    i = f.grid.index_of(x)
    if not 0 <= i < f.grid.nx:
        raise GeometryError(f"x = {x} outside grid")
    u, last, nc = _column_tail(outcome, i)
    if nc is None:
        near = u[last] >= outcome.u_max - 2
        if _edge_limited(outcome, i, last) and not near:
            raise NoBlowupDetected(f"no blow-up detected at x = {x}")
        end = last + 1
    else:
        end = nc
    t = f.t[:end]
    g = np.exp(-u[:end] / 2)
    deep = np.flatnonzero(u[:end] >= outcome.u_max - FIT_DEPTH)
    if deep.size >= FIT_LEVELS:
        sel = deep[-FIT_LEVELS:]
    else:
        sel = np.arange(max(0, end - FIT_LEVELS), end)
    t_thr = f.t0 + (end if nc is not None else last) * f.h + f.h / 2
    method = "threshold"
    T = t_thr
    root = _line_root(t[sel], g[sel])
    if root is not None:
        T = root
        method = "sqrt_extrapolation"
        gap = T - t
        sel2 = np.flatnonzero((gap >= REFIT_NEAR * f.h - 1e-12) & (gap <= REFIT_FAR * f.h + 1e-12))
        root2 = _line_root(t[sel2], g[sel2])
        if root2 is not None:
            T = root2
    if return_method:
        return float(T), method
    return float(T)


def _line_root(t, g):
    """Root of the least-squares line through (t, g), or None for a poor or rising fit."""
    if t.size < 3:
        return None
    slope, icpt = np.polyfit(t, g, 1)
    resid = g - (slope * t + icpt)
    scale = max(float(np.max(np.abs(g))), 1e-300)
    if slope < 0 and np.sqrt(np.mean(resid**2)) / scale < FIT_REL_RESIDUAL:
        return float(-icpt / slope)
    return None


def estimate_curve(outcome: SolveOutcome, xs) -> BlowupCurve:
    xs = np.asarray(xs, float)
    Ts = np.empty_like(xs)
    methods = []
    for k, x in enumerate(xs):
        Ts[k], m = estimate_T(outcome, x, return_method=True)
        methods.append(m)
    method = "sqrt_extrapolation" if all(m == "sqrt_extrapolation" for m in methods) else "threshold"
    c = BlowupCurve(xs=xs, Ts=Ts, lipschitz_defect=0.0, method=method,
                    h=outcome.field.h, methods=methods)
    c.lipschitz_defect = lipschitz_certificate(c)
    return c


def lipschitz_certificate(curve: BlowupCurve) -> float:
    """max over adjacent samples of |ΔT| - |Δx|; accepted when <= 2h."""
    if len(curve.xs) < 2:
        raise GeometryError("need at least 2 samples")
    return float(np.max(np.abs(np.diff(curve.Ts)) - np.abs(np.diff(curve.xs))))


def noncharacteristic_test(curve: BlowupCurve, x0: float, margin: float | None = None,
                           min_side: int = 5) -> ConeTestResult:
    """Smallest δ on the grid 0.05, ..., 0.95 whose cone sits under the sampled curve.

    A slope δ is certified when T(x) >= T(x0) - δ|x - x0| - margin for every
    sample; ``margin`` (default h) absorbs the estimation noise of T.
    """
    margin = curve.h if margin is None else margin
    xs, Ts = curve.xs, curve.Ts
    left = np.sum(xs < x0 - 1e-12)
    right = np.sum(xs > x0 + 1e-12)
    if left < min_side or right < min_side:
        raise GeometryError("insufficient cone coverage")
    T0 = float(curve.T_at(x0))
    dist = np.abs(xs - x0)
    delta_min = 1.0
    for d in DELTA_GRID:
        if np.all(Ts >= T0 - d * dist - margin):
            delta_min = d
            break
    return ConeTestResult(x0=float(x0), delta_min=float(delta_min),
                          is_noncharacteristic=delta_min < 1.0 - margin, margin=float(margin))


def _point_segment_distances(px, pt, xs, Ts):
    ax, at = xs[:-1], Ts[:-1]
    dx, dt = np.diff(xs), np.diff(Ts)
    L2 = dx * dx + dt * dt
    px = np.asarray(px, float)[..., None]
    pt = np.asarray(pt, float)[..., None]
    s = np.clip(((px - ax) * dx + (pt - at) * dt) / L2, 0.0, 1.0)
    qx = ax + s * dx
    qt = at + s * dt
    return np.min(np.hypot(px - qx, pt - qt), axis=-1)


def distances_to_gamma(curve: BlowupCurve, px, pt, chunk: int = 2048) -> np.ndarray:
    """Euclidean distances from points to the polyline through the curve samples."""
    px = np.atleast_1d(np.asarray(px, float))
    pt = np.atleast_1d(np.asarray(pt, float))
    out = np.empty(px.shape)
    flat_x, flat_t, flat_o = px.ravel(), pt.ravel(), out.ravel()
    for s in range(0, flat_x.size, chunk):
        sl = slice(s, s + chunk)
        flat_o[sl] = _point_segment_distances(flat_x[sl], flat_t[sl], curve.xs, curve.Ts)
    return flat_o.reshape(px.shape)


def lemma_co_violation(curve: BlowupCurve, px, pt) -> np.ndarray:
    """Amount by which (T(x)-t)/√2 <= d <= T(x)-t fails at each point (<= 0 when it holds)."""
    d = distances_to_gamma(curve, px, pt)
    gap = curve.T_at(px) - np.asarray(pt, float)
    return np.maximum(gap / math.sqrt(2) - d, d - gap)


def dist_to_gamma(curve: BlowupCurve, p) -> float:
    """Distance from ``p = (x, t)`` to Γ; the point must lie under the curve."""
    x, t = p
    gap = float(curve.T_at(x)) - t
    if gap < -1e-12:
        raise GeometryError("outside domain")
    d = float(distances_to_gamma(curve, x, t)[0])
    tol = max(curve.lipschitz_defect, 0.0) + 1e-12
    if d > gap + tol or d < gap / math.sqrt(2) - tol:
        raise GeometryError(f"distance sandwich violated at {p}: d={d}, T-t={gap}")
    return d


@dataclass
class ConeDistanceReport:
    x0: float
    t: float
    tau: float
    d_apex: float
    d_boundary: tuple[float, float]
    coercivity_C: float
    coercivity_bound: float
    ratio_c: float
    ratio_bound: float
    passed: bool


def cone_distance_bounds(curve: BlowupCurve, x0: float, t: float, tau: float,
                         delta: float | None = None, n_ratio: int = 201) -> ConeDistanceReport:
    """Measure the two non-characteristic geometric estimates at (x0, t).

    Coercivity: d((z_j, w_j), Γ) >= (d((x0, t), Γ) + |(x0, t) - (z_j, w_j)|) / C
    at the backward-cone points (x0 ± (t - τ), τ); the geometric proof gives
    C = 1 / cos(π/4 + atan δ). Comparability: (T(x) - t)/(T(x0) - t) in
    [1/c, c] across the light cone of the apex, with c = max(2, 1/(1 - δ)).
    """
    if delta is None:
        res = noncharacteristic_test(curve, x0)
        if not res.is_noncharacteristic:
            raise GeometryError("lemma hypotheses not met")
        delta = res.delta_min
    if not (0 <= tau < t < float(curve.T_at(x0))):
        raise GeometryError("need 0 <= tau < t < T(x0)")
    d0 = dist_to_gamma(curve, (x0, t))
    zs = [(x0 + t - tau, tau), (x0 - t + tau, tau)]
    sep = math.sqrt(2.0) * (t - tau)
    dj = tuple(float(distances_to_gamma(curve, z, w)[0]) for z, w in zs)
    C = max((d0 + sep) / d for d in dj)
    C_bound = 1.0 / math.cos(math.pi / 4 + math.atan(delta))
    T0 = float(curve.T_at(x0))
    half = T0 - t
    xs = np.linspace(x0 - half, x0 + half, n_ratio)
    xs = xs[(xs >= curve.xs[0]) & (xs <= curve.xs[-1])]
    ratios = (curve.T_at(xs) - t) / half
    c = float(max(np.max(ratios), 1.0 / np.min(ratios)))
    c_bound = max(2.0, 1.0 / (1.0 - delta))
    tol = 1e-9 + 2 * curve.h / max(half, curve.h)
    passed = C <= C_bound * (1 + tol) and c <= c_bound * (1 + tol)
    return ConeDistanceReport(x0=float(x0), t=float(t), tau=float(tau), d_apex=d0,
                              d_boundary=dj, coercivity_C=float(C), coercivity_bound=C_bound,
                              ratio_c=c, ratio_bound=c_bound, passed=bool(passed))
