"""
Three-level leapfrog for u_tt = u_xx + F(u) at CFL ratio one.

At Δt = Δx the update u^{n+1}_i = u^n_{i+1} + u^n_{i-1} - u^{n-1}_i + h² F(u^n_i)
is exact for the free wave, so the only discretization error comes from the
source. The computed domain shrinks by one cell per level at each side
(light-cone truncation of D_R) and cells crossing ``u_max`` stop feeding the
stencil, which is how the blow-up curve shows up on the grid.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .wavefield import Grid, InitialData, WaveField

STOP_REASONS = ("reached_t_end", "threshold_exceeded", "domain_exhausted")
DEFAULT_U_MAX = 25.0


class SolverError(RuntimeError):
    """Raised on a non-finite update; carries the last valid level."""

    def __init__(self, message, last_level=None, level_index=None):
        super().__init__(message)
        self.last_level = last_level
        self.level_index = level_index


def exp_source(u):
    return np.exp(u)


def zero_source(u):
    return np.zeros_like(u)


def constant_source(c: float):
    return lambda u: np.full_like(u, c)


@dataclass(frozen=True)
class Truncation:
    """F_n(u) = e^u for u <= n and e^n for u >= n + 1.

    Monotonicity plus both end conditions force the bridge on [n, n+1] to be
    the constant e^n, so F_n = min(e^u, e^n): Lipschitz, nondecreasing and
    below min(e^u, e^{n+1}).
    """

    n: int
    bridge: str = "flat"

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("truncation level must be >= 0")
        if self.bridge != "flat":
            raise ValueError("only the flat bridge satisfies monotonicity and both end values")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(np.minimum(u, float(self.n)))


@dataclass(frozen=True)
class ConeSpec:
    """Light cone with apex (apex_x, apex_t) and slope ``slope``.

    Forward: slope |ξ - x| < τ - t. Backward: slope |ξ - x| < t - τ, τ >= 0.
    """

    apex_x: float
    apex_t: float
    slope: float = 1.0
    orientation: str = "backward"

    def __post_init__(self):
        if not 0.0 < self.slope <= 1.0:
            raise ValueError("cone slope must lie in (0, 1]")
        if self.orientation not in ("forward", "backward"):
            raise ValueError("orientation must be 'forward' or 'backward'")

    def contains(self, xi, tau, closed=True):
        xi = np.asarray(xi, float)
        tau = np.asarray(tau, float)
        dist = self.slope * np.abs(xi - self.apex_x)
        gap = (tau - self.apex_t) if self.orientation == "forward" else (self.apex_t - tau)
        tol = 1e-12
        inside = dist <= gap + tol if closed else dist < gap - tol
        return inside & (tau >= -tol)


@dataclass
class SolveOutcome:
    field: WaveField
    stopped_reason: str
    max_level: int
    u_max: float
    source: Callable | None = None

    @property
    def crossing_mask(self) -> np.ndarray:
        """Valid cells whose value exceeds the threshold."""
        return self.field.valid_mask & (self.field.levels > self.u_max)

    def crossing_times(self) -> np.ndarray:
        """First level time at which each column crossed, NaN if never."""
        cm = self.crossing_mask
        hit = cm.any(axis=0)
        first = np.argmax(cm, axis=0)
        out = np.where(hit, self.field.t0 + first * self.field.h, np.nan)
        return out


def _live(u, mask, u_max):
    return mask & (u <= u_max)


def _safe_source(F, u, live):
    vals = np.where(live, u, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(F(vals), dtype=float)
    return np.where(live, out, 0.0)


def first_level(data: InitialData, F, grid: Grid) -> WaveField:
    """Levels 0 and 1; level 1 is the second-order Taylor start.

    u^1_i = (u0_{i+1} + u0_{i-1})/2 + h u1_i + (h²/2) F(u0_i)
    """
    x = grid.x
    h = grid.h
    u0, u1 = data.sample(x)
    levels = np.zeros((max(grid.nt_max, 2), grid.nx))
    mask = np.zeros_like(levels, dtype=bool)
    levels[0] = u0
    mask[0] = np.isfinite(u0)
    src = _safe_source(F, u0, mask[0])
    lvl1 = np.full(grid.nx, np.nan)
    lvl1[1:-1] = 0.5 * (u0[2:] + u0[:-2]) + h * u1[1:-1] + 0.5 * h * h * src[1:-1]
    m1 = np.zeros(grid.nx, dtype=bool)
    m1[1:-1] = mask[0][2:] & mask[0][:-2] & mask[0][1:-1] & np.isfinite(u1[1:-1])
    levels[1] = np.where(m1, lvl1, 0.0)
    mask[1] = m1 & np.isfinite(lvl1)
    return WaveField(grid=grid, levels=levels, valid_mask=mask, t0=0.0)


def step_leapfrog(field: WaveField, F, n: int, u_max: float = math.inf) -> WaveField:
    """Write level n+1 from levels n and n-1 in place and return the field."""
    u, mask = field.levels, field.valid_mask
    h = field.h
    live_n = _live(u[n], mask[n], u_max)
    live_nm1 = _live(u[n - 1], mask[n - 1], u_max)
    src = _safe_source(F, u[n], live_n)
    new = np.zeros(field.grid.nx)
    new[1:-1] = u[n, 2:] + u[n, :-2] - u[n - 1, 1:-1] + h * h * src[1:-1]
    ok = np.zeros(field.grid.nx, dtype=bool)
    ok[1:-1] = live_n[2:] & live_n[:-2] & live_n[1:-1] & live_nm1[1:-1]
    if np.any(ok & ~np.isfinite(new)):
        raise SolverError("numerical blow-through", last_level=u[n].copy(), level_index=n)
    u[n + 1] = np.where(ok, new, 0.0)
    mask[n + 1] = ok
    return field


def solve(data: InitialData, F, grid: Grid, u_max: float = DEFAULT_U_MAX,
          t_end: float | None = None, stop_at_first_crossing: bool = False) -> SolveOutcome:
    """Advance until ``t_end``, domain exhaustion, or (optionally) the first crossing.

    Cells above ``u_max`` are kept (finite) but do not feed later levels, so
    the run continues past the first blow-up point and maps out the whole
    computed domain.
    """
    if t_end is None:
        t_end = (grid.nt_max - 1) * grid.h
    n_end = min(grid.nt_max - 1, int(math.floor(t_end / grid.h + 1e-9)))
    field = first_level(data, F, grid)
    if np.nanmax(np.where(field.valid_mask[0], field.levels[0], -np.inf)) >= u_max - 1:
        raise ValueError("u_max must exceed sup u0 + 1")
    crossed = bool(np.any(field.valid_mask[:2] & (field.levels[:2] > u_max)))
    last = 1 if n_end >= 1 else 0
    reason = "reached_t_end"
    if n_end >= 1 and not field.valid_mask[1].any():
        reason, last = "domain_exhausted", 0
    elif not (stop_at_first_crossing and crossed):
        for n in range(1, n_end):
            step_leapfrog(field, F, n, u_max)
            row_mask = field.valid_mask[n + 1]
            if not row_mask.any():
                reason = "threshold_exceeded" if crossed else "domain_exhausted"
                last = n
                break
            last = n + 1
            if np.any(row_mask & (field.levels[n + 1] > u_max)):
                crossed = True
                if stop_at_first_crossing:
                    reason = "threshold_exceeded"
                    break
    else:
        reason = "threshold_exceeded"
    if reason == "reached_t_end" and last < n_end:
        reason = "domain_exhausted"
    out = WaveField(grid=grid, levels=field.levels[:last + 1].copy(),
                    valid_mask=field.valid_mask[:last + 1].copy(), t0=0.0)
    return SolveOutcome(field=out, stopped_reason=reason, max_level=last, u_max=u_max, source=F)


def window_grid(x_lo: float, x_hi: float, h: float, t_end: float) -> Grid:
    return Grid.from_window(x_lo, x_hi, h, t_end)


@dataclass
class ConeReport:
    apex: tuple[float, float]
    c_minus: float
    c_plus: float
    n_backward: int
    n_forward: int


def _cells_in(field: WaveField, cone: ConeSpec, R: float | None, valid_only=True):
    t = field.t
    x = field.x
    T, X = np.meshgrid(t, x, indexing="ij")
    sel = cone.contains(X, T)
    if R is not None:
        sel &= np.abs(X) <= R - T + 1e-12
    if valid_only:
        sel &= field.valid_mask
    return sel


def check_cone_monotonicity(outcome: SolveOutcome, apex, R: float | None = None) -> ConeReport:
    """Measured constants of the cone-variation bounds at one apex.

    c_minus = max over K^-(apex) of u - u(apex); c_plus = max over the part of
    K^+(apex) inside D_R of u(apex) - u.
    """
    field = outcome.field
    ax, at = apex
    n = field.level_index(at)
    i = field.grid.index_of(ax)
    if not field.is_valid(n, i):
        raise ValueError(f"apex {apex} is not a valid grid point")
    ua = field.levels[n, i]
    back = _cells_in(field, ConeSpec(ax, at, 1.0, "backward"), None)
    fwd = _cells_in(field, ConeSpec(ax, at, 1.0, "forward"), R)
    fwd &= field.levels <= outcome.u_max
    c_minus = float(np.max(field.levels[back] - ua)) if back.any() else 0.0
    c_plus = float(np.max(ua - field.levels[fwd])) if fwd.any() else 0.0
    return ConeReport(apex=(float(ax), float(at)), c_minus=c_minus, c_plus=c_plus,
                      n_backward=int(back.sum()), n_forward=int(fwd.sum()))


@dataclass
class TruncationReport:
    point: tuple[float, float]
    levels: list[int]
    values: list[float]
    reference: float | None
    branch: str
    monotone: bool


def truncation_limit(data: InitialData, point, levels: Sequence[int], grid: Grid,
                     T_at_x: float | None = None, reference: float | None = None,
                     u_max: float = 1e6) -> TruncationReport:
    """Values u_n(x, t) of the truncated problems for each n in ``levels``.

    The branch is "below" (t < T(x) - h), "above" (t > T(x) + h) or
    "indeterminate band" within one cell of the estimated T(x). Truncated
    sources are bounded, so these runs never leave the grid through blow-up;
    ``u_max`` only guards against overflow.
    """
    x, t = point
    t_end = t + grid.h / 2
    values = []
    for n in levels:
        out = solve(data, Truncation(n), grid, u_max=u_max, t_end=t_end)
        values.append(out.field.value(x, t))
    if T_at_x is None:
        branch = "unknown"
    elif t < T_at_x - grid.h:
        branch = "below"
    elif t > T_at_x + grid.h:
        branch = "above"
    else:
        branch = "indeterminate band"
    mono = bool(np.all(np.diff(values) >= -1e-12))
    return TruncationReport(point=(float(x), float(t)), levels=list(levels), values=values,
                            reference=reference, branch=branch, monotone=mono)
