"""
Command-line driver: run an experiment from a JSON config, compare two runs,
or run only the verification checks.

    expwave run --config cfg.json --out results/ [--jobs N] [--no-timestamp] [--dump-every K]
    expwave check --config cfg.json [--out DIR]
    expwave compare results_h/manifest.json results_h2/manifest.json --out cmp/
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import artifacts, presets, verify
from .geometry import GeometryError, noncharacteristic_test
from .picard import PicardConfig, contraction_bound, picard_solve
from .similarity import energy_trace, equation_residual, to_similarity
from .solver import exp_source, solve
from .wavefield import Grid, InitialData, WavefieldError

log = logging.getLogger("expwave")

TARGET_CHECKS = ("upper_pointwise", "lower_noncharacteristic", "w1inf_rate", "average_lower",
                 "energy_lower", "cone_energy", "shatah_struwe", "lyapunov")
RUN_CHECKS = ("lemma_co", "nonblowup_criterion")
ALL_CHECKS = TARGET_CHECKS + RUN_CHECKS

_number_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["data", "grid"],
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": sorted(presets.PRESETS)},
                "params": {"type": "object"},
                "csv": {"type": "string"},
                "regularity": {"enum": ["H1L2", "W1infL_inf"]},
                "window": _number_pair,
            },
            "oneOf": [{"required": ["preset"], "not": {"required": ["csv"]}},
                      {"required": ["csv"], "not": {"required": ["preset"]}}],
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["h", "R"],
            "properties": {
                "h": {"type": "number"},
                "R": {"type": "number"},
                "t_end": {"type": "number"},
                "x_center": {"type": "number"},
            },
        },
        "u_max": {"type": "number"},
        "targets": {"oneOf": [{"const": "auto"}, {"type": "array", "items": {"type": "number"}}]},
        "checks": {"oneOf": [{"const": "all"},
                             {"type": "array", "items": {"enum": list(ALL_CHECKS)}, "uniqueItems": True}]},
        "output": {"type": "string"},
        "seed": {"type": "integer"},
        "refine": {"type": "boolean"},
        "similarity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"margin": {"type": "number"}, "ds": {"type": "number"}},
        },
        "picard": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"horizon": {"type": "number"}, "tol": {"type": "number"},
                           "max_iter": {"type": "integer"}},
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    preset: str | None
    params: dict
    csv: str | None
    regularity: str | None
    data_window: tuple[float, float] | None
    h: float
    R: float
    t_end: float
    x_center: float = 0.0
    u_max: float = 25.0
    targets: str | list = "auto"
    checks: tuple = ALL_CHECKS
    output: str | None = None
    seed: int | None = None
    refine: bool = True
    margin: float = 0.02
    ds: float = 1.0 / 40
    picard_horizon: float = 0.1
    picard_tol: float = 1e-12
    picard_max_iter: int = 60
    raw: dict = field(default_factory=dict)

    @property
    def x_window(self):
        return (self.x_center - self.R, self.x_center + self.R)

    def make_data(self, h: float) -> InitialData:
        if self.csv is not None:
            return presets.from_csv(self.csv, regularity=self.regularity, window=self.data_window, h=h)
        params = dict(self.params)
        if self.preset == "random-band-limited" and self.seed is not None:
            params.setdefault("seed", self.seed)
        return presets.make_preset(self.preset, params, window=self.data_window, h=h)


def parse_config(raw: dict) -> RunConfig:
    """Validate a config dict against the schema and the semantic rules."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    d, g = raw["data"], raw["grid"]
    h, R = float(g["h"]), float(g["R"])
    if not h > 0:
        raise ConfigError("grid.h must be > 0")
    if not R > 0:
        raise ConfigError("grid.R must be > 0")
    if 2 * R / h + 1 > 40_001:
        raise ConfigError("grid too large: 2R/h must stay below 40000 cells")
    t_end = float(g.get("t_end", R))
    if not t_end > 0:
        raise ConfigError("grid.t_end must be > 0")
    sim = raw.get("similarity", {})
    pc = raw.get("picard", {})
    checks = raw.get("checks", "all")
    cfg = RunConfig(
        preset=d.get("preset"), params=dict(d.get("params", {})), csv=d.get("csv"),
        regularity=d.get("regularity"),
        data_window=tuple(d["window"]) if "window" in d else None,
        h=h, R=R, t_end=t_end, x_center=float(g.get("x_center", 0.0)),
        u_max=float(raw.get("u_max", 25.0)), targets=raw.get("targets", "auto"),
        checks=ALL_CHECKS if checks == "all" else tuple(checks),
        output=raw.get("output"), seed=raw.get("seed"), refine=bool(raw.get("refine", True)),
        margin=float(sim.get("margin", 0.02)), ds=float(sim.get("ds", 1.0 / 40)),
        picard_horizon=float(pc.get("horizon", 0.1)), picard_tol=float(pc.get("tol", 1e-12)),
        picard_max_iter=int(pc.get("max_iter", 60)), raw=raw)
    if not 0 < cfg.margin < 0.5:
        raise ConfigError("similarity.margin must lie in (0, 0.5)")
    if not cfg.ds > 0 or not cfg.picard_horizon > 0:
        raise ConfigError("similarity.ds and picard.horizon must be > 0")
    try:
        data = cfg.make_data(h)
    except (WavefieldError, TypeError, OSError) as exc:
        raise ConfigError(f"data error: {exc}") from None
    x = Grid.from_window(*cfg.x_window, h, t_end).x
    with np.errstate(all="ignore"):
        u0, u1 = data.sample(x)
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(u1))):
        raise ConfigError("non-finite initial data on the grid window")
    if not np.max(u0) < cfg.u_max - 1:
        raise ConfigError("u_max must exceed sup u0 + 1")
    return cfg


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(raw)


# ---------------------------------------------------------------- pipeline

class Stages:
    """Runs named stages, recording failures instead of aborting."""

    def __init__(self):
        self.status: dict[str, str] = {}

    def __call__(self, name, fn, *args, **kw):
        log.info("stage %s", name)
        try:
            out = fn(*args, **kw)
        except Exception as exc:  # noqa: BLE001 - every stage error is reported, not raised
            self.status[name] = f"error: {type(exc).__name__}: {exc}"
            log.warning("stage %s failed: %s", name, exc)
            return None
        self.status[name] = "ok"
        return out

    @property
    def failed(self) -> bool:
        return any(v != "ok" for v in self.status.values())


def _build_runs(cfg: RunConfig):
    kw = dict(u_max=cfg.u_max, around=cfg.x_center)
    coarse = verify.make_run(cfg.make_data(cfg.h), cfg.h, cfg.x_window, cfg.t_end, **kw)
    if not cfg.refine:
        return verify.Study(coarse=coarse, fine=coarse), (coarse,)
    fine = verify.make_run(cfg.make_data(cfg.h / 2), cfg.h / 2, cfg.x_window, cfg.t_end, **kw)
    study = verify.Study(coarse=coarse, fine=fine)
    return study, study.runs


def resolve_targets(cfg: RunConfig, run: verify.Run) -> list[float]:
    """Explicit targets, or argmin T plus the first and third quartiles of the sampled window."""
    if cfg.targets != "auto":
        return [float(a) for a in cfg.targets]
    c = run.curve
    if c is None:
        raise GeometryError("no blow-up detected; cannot pick targets")
    # middle of the samples within h of the minimum, so flat curves give a central target
    near = np.flatnonzero(c.Ts <= c.Ts.min() + run.h)
    a_min = float(c.xs[near[near.size // 2]])
    lo, hi = c.xs[0], c.xs[-1]
    quart = [lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)]
    snap = lambda v: float(c.xs[int(np.argmin(np.abs(c.xs - v)))])  # noqa: E731
    out = []
    for a in [a_min] + [snap(q) for q in quart]:
        if a not in out:
            out.append(a)
    return out


def curve_table(run: verify.Run):
    c = run.curve
    deltas = np.full(c.xs.shape, np.nan)
    flags = np.zeros(c.xs.shape, dtype=int)
    for k, x0 in enumerate(c.xs):
        try:
            res = noncharacteristic_test(c, float(x0))
        except GeometryError:
            continue
        deltas[k] = res.delta_min
        flags[k] = int(res.is_noncharacteristic)
    return deltas, flags


def _run_check(name, runs, a, cfg: RunConfig):
    if name == "upper_pointwise":
        return verify.check_upper_pointwise(runs, a)
    if name == "lower_noncharacteristic":
        return verify.check_lower_noncharacteristic(runs, a)
    if name == "w1inf_rate":
        return verify.check_w1inf_rate(runs, a)
    if name == "average_lower":
        return verify.check_average_lower(runs, a)
    if name == "energy_lower":
        return verify.check_energy_lower(runs, a)
    if name == "cone_energy":
        return verify.check_cone_energy(runs, a)
    if name == "shatah_struwe":
        return verify.check_shatah_struwe(runs, a)
    if name == "lyapunov":
        return verify.check_lyapunov(runs, a)
    if name == "lemma_co":
        return verify.lemma_co_check(runs[0])
    if name == "nonblowup_criterion":
        return verify.check_nonblowup_criterion(cfg.make_data(cfg.h), 1.0, cfg.h, cfg.u_max)
    raise ValueError(f"unknown check {name}")


def run_checks(cfg: RunConfig, runs, targets, jobs: int = 1) -> verify.VerificationReport:
    """Every requested check; results merged in a fixed order whatever the worker count."""
    tasks = []
    for name in cfg.checks:
        if name in TARGET_CHECKS:
            tasks += [(f"{name}@a={a:.6g}", name, a) for a in targets]
        else:
            tasks.append((name, name, None))

    def one(task):
        label, name, a = task
        try:
            chk = _run_check(name, runs, a, cfg)
        except Exception as exc:  # noqa: BLE001 - a failing check is reported, not raised
            chk = verify.BoundCheck(name=name, quantity=np.array([]), bound_form="",
                                    measured_constant=float("nan"), passed=False,
                                    notes=f"error: {type(exc).__name__}: {exc}")
        chk.name = label
        return chk

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(t) for t in tasks]
    report = verify.VerificationReport()
    for chk in sorted(results, key=lambda c: c.name):
        report.add(chk)
    return report


def picard_summary(cfg: RunConfig, a: float) -> dict:
    """Picard solve on [0, horizon] around x = a, cross-checked against the leapfrog solver."""
    h = cfg.h
    T = cfg.picard_horizon
    pcfg = PicardConfig(tol=cfg.picard_tol, max_iter=cfg.picard_max_iter)
    grid = Grid.from_window(a - T - 0.05, a + T + 0.05, h, T)
    data = cfg.make_data(h)
    res = picard_solve(data, grid, pcfg, T_local=T)
    ref = solve(data, exp_source, grid, u_max=cfg.u_max, t_end=res.T_local)
    n = res.field.levels.shape[0]
    m = res.field.valid_mask & ref.field.valid_mask[:n]
    diff = float(np.max(np.abs(res.field.levels - ref.field.levels[:n])[m]))
    out = res.summary()
    out.update({"center": a, "h": h, "norm_H": data.h_norm, "c0": pcfg.c0_const, "c_star": pcfg.c_star,
                "contraction_bound": contraction_bound(res.T_local, data.h_norm, pcfg),
                "max_diff_vs_leapfrog": diff})
    return out


def _frame_residual(run: verify.Run, a: float) -> float:
    """Transformed-equation residual on s in [-log T(a), -log T(a) + 2], frame spacing 10h."""
    Ta = run.T_at(a)
    s0 = -math.log(Ta)
    ny = int(round(1.96 / (10 * run.h))) + 1
    fr = to_similarity(run.field, a, Ta, s_min=s0, s_max=s0 + 2.0, ds=10 * run.h, ny=ny)
    return equation_residual(fr)


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "matplotlib", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def execute(cfg: RunConfig, out_dir: Path, jobs: int = 1, no_timestamp: bool = False,
            dump_every: int | None = None, full: bool = True) -> tuple[dict, verify.VerificationReport | None]:
    """The whole pipeline; returns (manifest, report). Stage errors land in the manifest."""
    t_start = time.perf_counter()
    out_dir.mkdir(parents=True, exist_ok=True)
    st = Stages()
    files: list[Path] = []
    built = st("solve", _build_runs, cfg)
    study, runs = built if built else (None, ())
    coarse = runs[0] if runs else None
    summary: dict = {"preset": cfg.preset, "params": cfg.params, "csv": cfg.csv, "h": cfg.h,
                     "R": cfg.R, "refine": cfg.refine}
    if coarse is not None:
        summary["stopped_reason"] = coarse.outcome.stopped_reason
        summary["norm_H"] = coarse.data.h_norm
    targets = st("targets", resolve_targets, cfg, coarse) if coarse else None
    targets = targets or []
    summary["targets"] = targets

    if coarse is not None and coarse.curve is not None:
        def write_curve():
            deltas, flags = curve_table(coarse)
            c = coarse.curve
            files.append(artifacts.write_csv(out_dir / "curve.csv", ["x", "T", "delta_min", "noncharacteristic"],
                                             [c.xs, c.Ts, deltas, flags]))
            summary["lipschitz_defect"] = c.lipschitz_defect
            summary["curve_accepted"] = c.accepted
            if full:
                cones = []
                for a in targets:
                    k = int(np.argmin(np.abs(c.xs - a)))
                    cones.append((a, float(c.T_at(a)), deltas[k]))
                files.append(artifacts.plot_curve(out_dir / "curve.svg", c.xs, c.Ts, cones, no_timestamp))
        st("curve", write_curve)

    exact = presets.exact_T(cfg.preset, cfg.params) if cfg.preset else None
    per_target = {}
    for a in targets:
        key = f"{a:.6g}"
        entry: dict = {"a": a}
        per_target[key] = entry

        def t_estimates(a=a, entry=entry):
            entry["T"] = [r.T_at(a) for r in runs]
            entry["h"] = [r.h for r in runs]
            if exact is not None:
                entry["T_exact"] = float(exact(a))
            entry["equation_residual"] = [_frame_residual(r, a) for r in runs]
        st(f"estimate@{key}", t_estimates)

        if full:
            def frames(a=a, key=key, entry=entry):
                Ta = coarse.T_at(a)
                fr = to_similarity(coarse.field, a, Ta, y_margin=cfg.margin, ds=cfg.ds)
                tr = energy_trace(fr)
                S, Y = np.meshgrid(fr.s_grid, fr.y_grid, indexing="ij")
                files.append(artifacts.write_csv(out_dir / f"frame_a{key}.csv", ["s", "y", "w", "ws", "wy"],
                                                 [S, Y, fr.w, fr.ws, fr.wy]))
                files.append(artifacts.write_csv(out_dir / f"energy_a{key}.csv", ["s", "E", "flux", "residual"],
                                                 [tr.s, tr.E, tr.flux, tr.residual]))
                files.append(artifacts.plot_profiles(out_dir / f"profiles_a{key}.svg", fr.y_grid, fr.s_grid,
                                                     fr.w, no_timestamp=no_timestamp))
                files.append(artifacts.plot_energy(out_dir / f"energy_a{key}.svg", tr.s, tr.E, no_timestamp))
                entry["margin"] = fr.margin
                entry["frame_truncated"] = fr.truncated
            st(f"similarity@{key}", frames)

    summary["per_target"] = per_target

    report = None
    if runs:
        report = st("checks", run_checks, cfg, runs, targets, jobs)
    if report is not None:
        files.append(artifacts.write_json(out_dir / "report.json", json.loads(report.to_json())))
        summary["checks"] = {c.name: {"status": c.status, "measured_constant": c.measured_constant,
                                      "refinement_order": c.refinement_order} for c in report.checks}

    if full and targets:
        pic = st("picard", picard_summary, cfg, targets[0])
        if pic is not None:
            summary["picard"] = pic

    if dump_every and coarse is not None:
        def dump():
            f = coarse.field
            n_idx = np.arange(0, f.n_levels, dump_every)
            N, I = np.nonzero(f.valid_mask[n_idx])
            files.append(artifacts.write_csv(out_dir / "field.csv", ["t", "x", "u"],
                                             [f.t[n_idx[N]], f.x[I], f.levels[n_idx[N], I]]))
        st("dump", dump)

    summary["stages"] = dict(st.status)
    files.append(artifacts.write_json(out_dir / "summary.json", summary))
    ok = (report is None or report.passed) and not st.failed
    manifest = {"config": cfg.raw, "versions": _versions(), "stages": dict(st.status),
                "passed": bool(ok and report is not None),
                "files": [{"path": p.name, "sha256": artifacts.sha256(p)} for p in files]}
    if not no_timestamp:
        manifest["timing"] = {"wall_seconds": time.perf_counter() - t_start,
                              "finished": time.strftime("%Y-%m-%dT%H:%M:%S")}
    artifacts.write_json(out_dir / "manifest.json", manifest)
    return manifest, report


# ---------------------------------------------------------------- compare

def _load_summary(manifest_path: Path) -> dict:
    man = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    names = [f["path"] for f in man.get("files", [])]
    if "summary.json" not in names:
        raise ConfigError(f"{manifest_path}: manifest lists no summary.json")
    return json.loads((Path(manifest_path).parent / "summary.json").read_text(encoding="utf-8"))


def _order(err_coarse, err_fine):
    if err_coarse is None or err_fine is None or err_coarse <= 0 or err_fine <= 0:
        return None
    return math.log2(err_coarse / err_fine)


def compare(manifest_a, manifest_b) -> dict:
    """Observed convergence orders between two runs of the same data at different h."""
    sa, sb = _load_summary(manifest_a), _load_summary(manifest_b)
    for key in ("preset", "params", "csv"):
        if sa.get(key) != sb.get(key):
            raise ConfigError(f"mismatched {key}: {sa.get(key)!r} vs {sb.get(key)!r}")
    if sa["h"] == sb["h"]:
        return {"degenerate": True, "h": [sa["h"], sb["h"]], "orders": {},
                "notes": "identical resolutions; orders undefined"}
    coarse, fine = (sa, sb) if sa["h"] > sb["h"] else (sb, sa)
    ratio = coarse["h"] / fine["h"]
    orders: dict = {}
    for key, ec in coarse.get("per_target", {}).items():
        ef = fine.get("per_target", {}).get(key)
        if ef is None or "T" not in ec or "T" not in ef:
            continue
        item = {}
        if "T_exact" in ec:
            e1, e2 = abs(ec["T"][0] - ec["T_exact"]), abs(ef["T"][0] - ef["T_exact"])
            o = _order(e1, e2)
            item["T_error"] = [e1, e2]
            item["T_order"] = None if o is None else o / math.log2(ratio)
        if "equation_residual" in ec and "equation_residual" in ef:
            r1, r2 = ec["equation_residual"][0], ef["equation_residual"][0]
            o = _order(r1, r2)
            item["equation_residual"] = [r1, r2]
            item["residual_order"] = None if o is None else o / math.log2(ratio)
        orders[key] = item
    constants = {}
    for name, cc in coarse.get("checks", {}).items():
        cf = fine.get("checks", {}).get(name)
        if cf is None:
            continue
        c1, c2 = cc.get("measured_constant"), cf.get("measured_constant")
        change = None
        if c1 is not None and c2 is not None:
            change = abs(c1 - c2) / max(abs(c2), 1e-300)
        constants[name] = {"constants": [c1, c2], "relative_change": change}
    return {"degenerate": False, "h": [coarse["h"], fine["h"]], "orders": orders, "constants": constants}


# ---------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="expwave", description="Blow-up experiments for u_tt = u_xx + e^u.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1, help="worker cap for independent checks")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit timing and plot dates so reruns are byte-identical")
    common.add_argument("-v", "--verbose", action="store_true")
    r = sub.add_parser("run", parents=[common], help="full pipeline with artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--dump-every", type=int, default=None, help="write field.csv every K levels")
    c = sub.add_parser("check", parents=[common], help="solve and run the checks only")
    c.add_argument("--config", required=True)
    c.add_argument("--out", default=None)
    m = sub.add_parser("compare", parents=[common], help="convergence orders between two runs")
    m.add_argument("manifest_a")
    m.add_argument("manifest_b")
    m.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.command == "compare":
            result = compare(args.manifest_a, args.manifest_b)
            text = json.dumps(artifacts._clean(result), indent=2, sort_keys=True)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                artifacts.write_json(Path(args.out) / "compare.json", result)
            print(text)
            return 0
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.output
    if out is None:
        print("error: no output directory (--out or config 'output')", file=sys.stderr)
        return 2
    if getattr(args, "dump_every", None) is not None and args.dump_every < 1:
        print("error: --dump-every must be >= 1", file=sys.stderr)
        return 2
    manifest, report = execute(cfg, Path(out), jobs=args.jobs, no_timestamp=args.no_timestamp,
                               dump_every=getattr(args, "dump_every", None), full=args.command == "run")
    if report is not None:
        print(report.table())
    for name, status in manifest["stages"].items():
        if status != "ok":
            print(f"stage {name}: {status}")
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
