"""Named initial-data presets, CSV loading, and the closed-form blow-up families."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .wavefield import InitialData, WavefieldError, make_initial_data

LOG2 = math.log(2.0)


def ode_solution(x, t, T=1.0):
    """u = log(2 / (T - t)^2), the x-independent blow-up solution."""
    x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    return np.log(2.0 / (T - t) ** 2)


def tilted_solution(x, t, kappa):
    """u = log(2(1 - κ²) / (1 + κx - t)^2), blowing up on t = 1 + κx."""
    return np.log(2.0 * (1.0 - kappa**2) / (1.0 + kappa * np.asarray(x, float) - np.asarray(t, float)) ** 2)


def tilted_T(x, kappa):
    return 1.0 + kappa * np.asarray(x, float)


def ode(window=(-1.5, 1.5), h=1e-3) -> InitialData:
    return make_initial_data(
        lambda x: np.full_like(x, LOG2), lambda x: np.full_like(x, 2.0),
        window=window, name="ode", params={}, h=h)


def cone_window(T_of_x, x_lo, x_hi, pad=0.05, n=401):
    """Smallest grid window containing the backward light cone of every (x, T(x)), x in [x_lo, x_hi]."""
    xs = np.linspace(x_lo, x_hi, n)
    Ts = np.asarray(T_of_x(xs), float)
    return float(np.min(xs - Ts) - pad), float(np.max(xs + Ts) + pad)


def tilted(kappa=0.5, window=(-1.0, 1.0), h=1e-3) -> InitialData:
    if not 0.0 <= abs(kappa) < 1.0:
        raise WavefieldError("tilted preset needs |kappa| < 1")
    lo, hi = window
    if min(1 + kappa * lo, 1 + kappa * hi) <= 0:
        raise WavefieldError("tilted preset singular inside the window (1 + kappa x <= 0)")
    return make_initial_data(
        lambda x: np.log(2 * (1 - kappa**2) / (1 + kappa * x) ** 2),
        lambda x: 2.0 / (1 + kappa * x),
        window=window, name="tilted", params={"kappa": kappa}, h=h)


def perturbed_ode(amplitude=0.3, wavenumber=math.pi, window=(-1.5, 1.5), h=1e-3) -> InitialData:
    return make_initial_data(
        lambda x: LOG2 + amplitude * np.cos(wavenumber * x),
        lambda x: np.full_like(x, 2.0),
        window=window, name="perturbed-ode",
        params={"amplitude": amplitude, "wavenumber": wavenumber}, h=h)


def random_band_limited(seed=0, amplitude=0.2, modes=4, k_max=4.0,
                        window=(-1.5, 1.5), h=1e-3) -> InitialData:
    """ODE data plus a seeded random sum of low-frequency cosines in both components."""
    rng = np.random.default_rng(seed)
    a0 = amplitude * rng.uniform(-1, 1, modes) / np.arange(1, modes + 1)
    a1 = amplitude * rng.uniform(-1, 1, modes) / np.arange(1, modes + 1)
    k = rng.uniform(0.5, k_max, modes)
    p0 = rng.uniform(0, 2 * np.pi, modes)
    p1 = rng.uniform(0, 2 * np.pi, modes)

    def series(x, a, p):
        x = np.asarray(x, float)
        return np.sum(a[:, None] * np.cos(k[:, None] * x.ravel()[None, :] + p[:, None]), axis=0).reshape(x.shape)

    return make_initial_data(
        lambda x: LOG2 + series(x, a0, p0),
        lambda x: 2.0 + series(x, a1, p1),
        window=window, name="random-band-limited",
        params={"seed": seed, "amplitude": amplitude, "modes": modes, "k_max": k_max}, h=h)


def constant(u0_value, u1_value=0.0, window=(-1.0, 1.0), h=1e-3, name="constant") -> InitialData:
    return make_initial_data(
        lambda x: np.full_like(np.asarray(x, float), u0_value),
        lambda x: np.full_like(np.asarray(x, float), u1_value),
        window=window, name=name, params={"u0": u0_value, "u1": u1_value}, h=h)


def from_csv(path, regularity=None, window=None, h=1e-3) -> InitialData:
    """Load samples from a CSV with header ``x,u0,u1``; linear interpolation between rows."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["x", "u0", "u1"]:
            raise WavefieldError("CSV initial data needs header x,u0,u1")
        rows = [(float(r["x"]), float(r["u0"]), float(r["u1"])) for r in reader]
    if len(rows) < 3:
        raise WavefieldError("CSV initial data needs at least 3 rows")
    arr = np.array(sorted(rows))
    xs, a0, a1 = arr[:, 0], arr[:, 1], arr[:, 2]
    if not np.all(np.isfinite(arr)):
        raise WavefieldError("non-finite initial data")
    if window is None:
        window = (xs[0] + 1.0, xs[-1] - 1.0)
    du0 = np.diff(a0) / np.diff(xs)
    bounded = np.all(np.isfinite(du0))
    reg = regularity or ("W1infL_inf" if bounded else "H1L2")
    return make_initial_data(
        lambda x: np.interp(x, xs, a0), lambda x: np.interp(x, xs, a1),
        regularity=reg, window=window, name="csv", params={"path": str(path)}, h=h)


PRESETS = {
    "ode": ode,
    "tilted": tilted,
    "perturbed-ode": perturbed_ode,
    "random-band-limited": random_band_limited,
}


def make_preset(name: str, params: dict | None = None, window=None, h=1e-3) -> InitialData:
    if name not in PRESETS:
        raise WavefieldError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kwargs = dict(params or {})
    if window is not None:
        kwargs["window"] = tuple(window)
    return PRESETS[name](h=h, **kwargs)


def exact_T(name: str, params: dict | None = None):
    """Closed-form blow-up curve x -> T(x) for the analytic presets, else None."""
    params = params or {}
    if name == "ode":
        return lambda x: np.ones_like(np.asarray(x, float))
    if name == "tilted":
        kappa = params.get("kappa", 0.5)
        return lambda x: tilted_T(x, kappa)
    return None
