"""CSV/JSON/SVG writers with deterministic output."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    """Shortest round-trip text for a float; 'nan' for non-finite values."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else "nan"


def write_csv(path: Path, header, columns) -> Path:
    path = Path(path)
    cols = [np.asarray(c).ravel() for c in columns]
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _pyplot(no_timestamp: bool):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if no_timestamp:
        matplotlib.rcParams["svg.hashsalt"] = "expwave"
    return plt


def _save_svg(fig, path: Path, no_timestamp: bool):
    meta = {"Date": None} if no_timestamp else {}
    fig.savefig(path, format="svg", metadata=meta)


def plot_curve(path: Path, xs, Ts, cones=(), no_timestamp=False) -> Path:
    """Γ with slope-δ cones drawn at the requested (a, T(a), δ)."""
    plt = _pyplot(no_timestamp)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, Ts, lw=1.5, label="T(x)")
    for a, Ta, delta in cones:
        if not math.isfinite(delta):
            continue
        span = np.array([-1.0, 0.0, 1.0]) * 0.5 * (xs[-1] - xs[0])
        ax.plot(a + span, Ta - delta * np.abs(span), "--", lw=0.8, label=f"cone a={a:.3g}, δ={delta:.2f}")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.legend(fontsize=7)
    _save_svg(fig, path, no_timestamp)
    plt.close(fig)
    return Path(path)


def plot_profiles(path: Path, y, s_grid, w, picks=4, no_timestamp=False) -> Path:
    plt = _pyplot(no_timestamp)
    fig, ax = plt.subplots(figsize=(6, 4))
    idx = np.unique(np.linspace(0, len(s_grid) - 1, picks).round().astype(int))
    for k in idx:
        ax.plot(y, w[k], lw=1.0, label=f"s={s_grid[k]:.3g}")
    ax.set_xlabel("y")
    ax.set_ylabel("w")
    ax.legend(fontsize=7)
    _save_svg(fig, path, no_timestamp)
    plt.close(fig)
    return Path(path)


def plot_energy(path: Path, s, E, no_timestamp=False) -> Path:
    plt = _pyplot(no_timestamp)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(s, E, lw=1.2)
    ax.set_xlabel("s")
    ax.set_ylabel("E(s)")
    _save_svg(fig, path, no_timestamp)
    plt.close(fig)
    return Path(path)
