"""
Similarity variables around a blow-up point.

    w(y, s) = u(x, t) + 2 log(T - t),  y = (x - a)/(T - t),  s = -log(T - t)

w solves  w_ss - ((1 - y²) w_y)_y - e^w + 2 = -w_s - 2y w_ys  on |y| < 1, and
the functional

    E(s) = ∫ ½ w_s² + ½ (1 - y²) w_y² - e^w + 2w  dy

can only decrease, with all dissipation at y = ±1. The grid cannot reach
y = ±1, so integrals run over |y| <= b = 1 - margin and the boundary flux is
the exact one for the truncated interval:

    dE_b/ds = -b (w_s(b)² + w_s(-b)²) + (1 - b²) [w_y w_s]_{-b}^{b}

which reduces to -(w_s(1)² + w_s(-1)²) at b = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .wavefield import WaveField

DEFAULT_MARGIN = 0.02
DEFAULT_DS = 1.0 / 40


class SimilarityError(ValueError):
    pass


@dataclass
class SimilarityFrame:
    a: float
    T: float
    s_grid: np.ndarray
    y_grid: np.ndarray
    w: np.ndarray
    ws: np.ndarray
    wy: np.ndarray
    margin: float = DEFAULT_MARGIN
    truncated: bool = False

    @property
    def ds(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0]) if len(self.s_grid) > 1 else float("nan")

    @property
    def dy(self) -> float:
        return float(self.y_grid[1] - self.y_grid[0])

    def level(self, s: float) -> int:
        k = int(round((s - self.s_grid[0]) / self.ds)) if len(self.s_grid) > 1 else 0
        if not 0 <= k < len(self.s_grid) or abs(self.s_grid[k] - s) > 0.5 * abs(self.ds) + 1e-12:
            raise SimilarityError(f"s = {s} outside frame range")
        return k

    def physical_points(self):
        """(x, t) of every frame node, shaped like ``w``."""
        S, Y = np.meshgrid(self.s_grid, self.y_grid, indexing="ij")
        scale = np.exp(-S)
        return self.a + Y * scale, self.T - scale

    def reconstruct_u(self):
        """u at the frame nodes: u = w - 2 log(T - t) = w + 2s."""
        return self.w + 2.0 * self.s_grid[:, None]


def analytic_frame(w_fn, wy_fn, a=0.0, T=1.0, s_grid=None, margin=0.0, ny=401) -> SimilarityFrame:
    """Frame from a closed-form s-independent profile w(y)."""
    if s_grid is None:
        s_grid = np.arange(0.0, 2.0 + 1e-12, DEFAULT_DS)
    y = np.linspace(-1 + margin, 1 - margin, ny)
    w = np.tile(np.asarray(w_fn(y), float), (len(s_grid), 1))
    wy = np.tile(np.asarray(wy_fn(y), float), (len(s_grid), 1))
    return SimilarityFrame(a=a, T=T, s_grid=np.asarray(s_grid, float), y_grid=y, w=w,
                           ws=np.zeros_like(w), wy=wy, margin=margin)


def _bilinear(field: WaveField, x, t):
    """Bilinear samples of u, u_t, u_x at (x, t); NaN where any corner is invalid."""
    g = field.grid
    h = g.h
    fi = (x - g.x_min) / h
    fn = (t - field.t0) / h
    i0 = np.floor(fi).astype(np.intp)
    n0 = np.floor(fn).astype(np.intp)
    ax = fi - i0
    at = fn - n0
    shape = x.shape
    out_u = np.zeros(shape)
    out_ut = np.zeros(shape)
    out_ux = np.zeros(shape)
    ok = (i0 >= 0) & (i0 + 1 < g.nx) & (n0 >= 0) & (n0 + 1 < field.n_levels)
    i0c = np.clip(i0, 0, g.nx - 2)
    n0c = np.clip(n0, 0, field.n_levels - 2)
    for dn, di, wgt in ((0, 0, (1 - at) * (1 - ax)), (0, 1, (1 - at) * ax),
                        (1, 0, at * (1 - ax)), (1, 1, at * ax)):
        nn, ii = n0c + dn, i0c + di
        ok &= field.valid_mask[nn, ii]
        ut, ux = field.node_derivatives(nn, ii)
        ok &= np.isfinite(ut) & np.isfinite(ux)
        out_u += wgt * field.levels[nn, ii]
        out_ut += wgt * np.nan_to_num(ut)
        out_ux += wgt * np.nan_to_num(ux)
    nan = np.where(ok, 0.0, np.nan)
    return out_u + nan, out_ut + nan, out_ux + nan


def to_similarity(field: WaveField, a: float, T: float, y_margin: float = DEFAULT_MARGIN,
                  s_min: float | None = None, s_max: float | None = None,
                  ds: float = DEFAULT_DS, ny: int | None = None) -> SimilarityFrame:
    """Sample w, w_s, w_y on a uniform (y, s) grid from a solved field.

    u, u_t, u_x are interpolated bilinearly from node values (derivatives by
    centered differences on the (x, t) grid) and pushed through the chain rule
    w_s = e^{-s}(u_t - y u_x) - 2, w_y = e^{-s} u_x. The s range stops at
    e^{-s} = 2h, or earlier at the first level touching an invalid cell; either
    cut sets ``truncated``.
    """
    h = field.h
    if T <= field.t0:
        raise SimilarityError("T must be after the start of the field")
    if s_min is None:
        s_min = -math.log(T - field.t0)
    s_cap = -math.log(2 * h)
    if s_max is None:
        s_max = -math.log(10 * h)
    truncated = False
    if s_max > s_cap:
        s_max, truncated = s_cap, True
    if ny is None:
        ny = int(round((2 - 2 * y_margin) / 0.02)) + 1
    y = np.linspace(-1 + y_margin, 1 - y_margin, ny)
    n_s = int(math.floor((s_max - s_min) / ds + 1e-9)) + 1
    s = s_min + ds * np.arange(n_s)
    S, Y = np.meshgrid(s, y, indexing="ij")
    scale = np.exp(-S)
    X = a + Y * scale
    Tt = T - scale
    u, ut, ux = _bilinear(field, X, Tt)
    bad = ~np.isfinite(u).all(axis=1)
    if bad.any():
        first_bad = int(np.argmax(bad))
        if first_bad == 0:
            raise SimilarityError("frame start lies outside the computed domain")
        s, u, ut, ux, S, Y, scale = (arr[:first_bad] for arr in (s, u, ut, ux, S, Y, scale))
        truncated = True
    w = u - 2.0 * S
    ws = scale * (ut - Y * ux) - 2.0
    wy = scale * ux
    return SimilarityFrame(a=float(a), T=float(T), s_grid=s, y_grid=y, w=w, ws=ws, wy=wy,
                           margin=float(y_margin), truncated=truncated)


def residual_field(frame: SimilarityFrame) -> np.ndarray:
    """Pointwise defect of the transformed equation on interior nodes.

    Second derivatives are centered differences of the stored first
    derivatives: w_ss = D_s w_s, ((1-y²) w_y)_y = D_y((1-y²) w_y), w_ys = D_y w_s.
    """
    ds, dy = frame.ds, frame.dy
    y = frame.y_grid
    flux_y = (1 - y**2)[None, :] * frame.wy
    wss = (frame.ws[2:, 1:-1] - frame.ws[:-2, 1:-1]) / (2 * ds)
    div = (flux_y[1:-1, 2:] - flux_y[1:-1, :-2]) / (2 * dy)
    wys = (frame.ws[1:-1, 2:] - frame.ws[1:-1, :-2]) / (2 * dy)
    w = frame.w[1:-1, 1:-1]
    wsc = frame.ws[1:-1, 1:-1]
    yc = y[None, 1:-1]
    return (wss - div - np.exp(w) + 2.0) - (-wsc - 2.0 * yc * wys)


def equation_residual(frame: SimilarityFrame) -> float:
    """Max abs defect of the transformed equation over interior frame nodes."""
    if len(frame.s_grid) < 3:
        raise SimilarityError("need at least 3 s-levels")
    return float(np.max(np.abs(residual_field(frame))))


def _energy_density(frame: SimilarityFrame, k: int | slice):
    y = frame.y_grid
    return (0.5 * frame.ws[k] ** 2 + 0.5 * (1 - y**2) * frame.wy[k] ** 2
            - np.exp(frame.w[k]) + 2.0 * frame.w[k])


def lyapunov(frame: SimilarityFrame, s: float) -> float:
    """E(w(s)) by trapezoid quadrature over [-1 + margin, 1 - margin]."""
    k = frame.level(s)
    return float(trapezoid(_energy_density(frame, k), frame.y_grid))


@dataclass
class EnergyTrace:
    s: np.ndarray
    E: np.ndarray
    flux: np.ndarray
    raw_flux: np.ndarray
    residual: np.ndarray
    margin: float
    quad_error: np.ndarray

    def index(self, s: float) -> int:
        k = int(np.argmin(np.abs(self.s - s)))
        if len(self.s) > 1 and abs(self.s[k] - s) > 0.5 * (self.s[1] - self.s[0]) + 1e-12:
            raise SimilarityError(f"s = {s} outside trace")
        return k


def boundary_flux(frame: SimilarityFrame) -> tuple[np.ndarray, np.ndarray]:
    """(dissipation on |y| <= b, w_s(-b)² + w_s(b)²) per s-level."""
    b = 1.0 - frame.margin
    ws_l, ws_r = frame.ws[:, 0], frame.ws[:, -1]
    wy_l, wy_r = frame.wy[:, 0], frame.wy[:, -1]
    raw = ws_l**2 + ws_r**2
    flux = b * raw - (1 - b * b) * (wy_r * ws_r - wy_l * ws_l)
    return flux, raw


def energy_trace(frame: SimilarityFrame) -> EnergyTrace:
    """E(s), boundary flux, and the running identity defect E(s) - E(s0) + ∫ flux."""
    y = frame.y_grid
    dens = _energy_density(frame, slice(None))
    E = trapezoid(dens, y, axis=1)
    # Richardson estimate of the y-quadrature error (needs an odd node count)
    if len(y) % 2 == 1 and len(y) >= 5:
        E_coarse = trapezoid(dens[:, ::2], y[::2], axis=1)
        qerr = np.abs(E - E_coarse) / 3.0
    else:
        qerr = np.zeros_like(E)
    flux, raw = boundary_flux(frame)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (flux[1:] + flux[:-1]) * np.diff(frame.s_grid))))
    residual = E - E[0] + cum
    return EnergyTrace(s=frame.s_grid.copy(), E=E, flux=flux, raw_flux=raw, residual=residual,
                       margin=frame.margin, quad_error=qerr)


def _flux_integral(trace: EnergyTrace, k1: int, k2: int, stride: int = 1) -> float:
    idx = np.arange(k1, k2 + 1, stride)
    if idx[-1] != k2:
        return float("nan")
    return float(trapezoid(trace.flux[idx], trace.s[idx]))


def dissipation_identity(trace: EnergyTrace, s1: float, s2: float) -> float:
    """|E(s2) - E(s1) + ∫_{s1}^{s2} flux ds| with trapezoid in s."""
    if not s1 < s2:
        raise SimilarityError("need s1 < s2")
    k1, k2 = trace.index(s1), trace.index(s2)
    return abs(trace.E[k2] - trace.E[k1] + _flux_integral(trace, k1, k2))


def dissipation_error_estimate(trace: EnergyTrace, s1: float, s2: float) -> float:
    """Quadrature error budget for the identity: y-quadrature at both ends plus s-quadrature."""
    k1, k2 = trace.index(s1), trace.index(s2)
    fine = _flux_integral(trace, k1, k2)
    coarse = _flux_integral(trace, k1, k2, stride=2) if (k2 - k1) % 2 == 0 else float("nan")
    s_err = abs(fine - coarse) / 3.0 if math.isfinite(coarse) else 0.0
    return float(trace.quad_error[k1] + trace.quad_error[k2] + s_err)


def monotone_violation(trace: EnergyTrace) -> float:
    """Largest increase of E between consecutive levels (<= 0 when nonincreasing)."""
    if len(trace.E) < 2:
        return 0.0
    return float(np.max(np.diff(trace.E)))


def similarity_bounds(frame: SimilarityFrame) -> dict:
    """Run quantities behind the uniform-bound statements on w.

    ``w_plus_log`` is sup (w + 2 log(1 - |y|)), finite iff w <= -2 log(1-|y|) + C;
    ``uniform`` is sup_s (sup_y |w| + ∫ w_s² + w_y² dy).
    """
    y = frame.y_grid
    wpl = float(np.max(frame.w + 2.0 * np.log(1.0 - np.abs(y))[None, :]))
    grad = trapezoid(frame.ws**2 + frame.wy**2, y, axis=1)
    uniform = np.max(np.abs(frame.w), axis=1) + grad
    return {"w_plus_log": wpl, "uniform_sup": float(np.max(uniform)),
            "uniform_by_s": uniform}
