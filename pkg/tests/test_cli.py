import json

import numpy as np
import pytest

from expwave import artifacts, cli
from expwave.cli import ConfigError, compare, parse_config

ODE_CFG = {"data": {"preset": "ode"}, "grid": {"h": 0.004, "R": 1.6, "t_end": 1.05},
           "checks": ["upper_pointwise", "average_lower", "lemma_co"], "refine": False}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


@pytest.mark.parametrize("bad, msg", [
    ({"data": {"preset": "ode"}, "grid": {"h": 0.0, "R": 1}}, "grid.h"),
    ({"data": {"preset": "ode"}, "grid": {"h": 0.01, "R": -1}}, "grid.R"),
    ({"data": {"preset": "ode"}, "grid": {"h": 0.01, "R": 1}, "typo": 1}, "typo"),
    ({"data": {"preset": "ode"}}, "grid"),
    ({"data": {"preset": "ode", "csv": "x.csv"}, "grid": {"h": 0.01, "R": 1}}, "data"),
    ({"data": {"preset": "nope"}, "grid": {"h": 0.01, "R": 1}}, "preset"),
    ({"data": {"preset": "ode"}, "grid": {"h": 1e-5, "R": 1}}, "too large"),
    ({"data": {"preset": "ode"}, "grid": {"h": 0.01, "R": 1}, "checks": ["bogus"]}, "checks"),
])
def test_config_errors(bad, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(bad)


def test_bad_config_exits_2_without_artifacts(tmp_path, capsys):
    cfg = _write(tmp_path, {"data": {"preset": "ode"}, "grid": {"h": 0, "R": 1}})
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()
    assert "grid.h" in capsys.readouterr().err


def test_jobs_must_be_positive(tmp_path):
    cfg = _write(tmp_path, ODE_CFG)
    assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path / "o"), "--jobs", "0"]) == 2


def test_missing_output_dir(tmp_path):
    cfg = _write(tmp_path, ODE_CFG)
    assert cli.main(["check", "--config", str(cfg)]) == 2


def test_check_subcommand(tmp_path):
    cfg = _write(tmp_path, ODE_CFG)
    out = tmp_path / "o"
    assert cli.main(["check", "--config", str(cfg), "--out", str(out), "--jobs", "2"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    # flat curve: the middle of the minimum plus the quartiles of the sampled range
    assert summary["targets"] == pytest.approx([0.0, -0.28, 0.28])
    assert {"upper_pointwise@a=0", "average_lower@a=-0.28", "lemma_co"} <= set(summary["checks"])
    assert not (out / "curve.svg").exists()


def test_run_writes_manifest_with_hashes(tmp_path):
    cfg = _write(tmp_path, ODE_CFG)
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--dump-every", "50"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    names = {f["path"] for f in man["files"]}
    assert {"curve.csv", "curve.svg", "report.json", "summary.json", "field.csv",
            "frame_a0.csv", "energy_a0.csv"} <= names
    for f in man["files"]:
        assert artifacts.sha256(out / f["path"]) == f["sha256"]
    assert "timing" in man
    summary = json.loads((out / "summary.json").read_text())
    assert summary["picard"]["max_diff_vs_leapfrog"] < 1e-6
    assert abs(summary["per_target"]["0"]["T"][0] - 1.0) < 1e-3


def test_compare_orders(tmp_path):
    base = {"data": {"preset": "tilted", "params": {"kappa": 0.5}},
            "grid": {"h": 0.004, "R": 1.9, "x_center": 0.3, "t_end": 1.6},
            "targets": [0.0], "checks": ["upper_pointwise"], "refine": False}
    mans = []
    for h in (0.004, 0.002):
        cfg = dict(base, grid=dict(base["grid"], h=h))
        out = tmp_path / f"h{h}"
        cli.main(["check", "--config", str(_write(tmp_path, cfg, f"c{h}.json")), "--out", str(out)])
        mans.append(out / "manifest.json")
    res = compare(*mans)
    assert not res["degenerate"]
    item = res["orders"]["0"]
    assert 0.8 < item["T_order"] < 1.2
    assert item["residual_order"] > 0.9
    assert compare(mans[0], mans[0])["degenerate"]
    assert cli.main(["compare", str(mans[0]), str(mans[1]), "--out", str(tmp_path / "cmp")]) == 0
    assert (tmp_path / "cmp" / "compare.json").exists()


def test_compare_rejects_mismatched_runs(tmp_path):
    outs = []
    for name, preset in (("a", "ode"), ("b", "perturbed-ode")):
        cfg = dict(ODE_CFG, data={"preset": preset}, checks=["lemma_co"])
        out = tmp_path / name
        cli.main(["check", "--config", str(_write(tmp_path, cfg, f"{name}.json")), "--out", str(out)])
        outs.append(out / "manifest.json")
    with pytest.raises(ConfigError, match="mismatched preset"):
        compare(*outs)


def test_csv_initial_data(tmp_path):
    x = np.linspace(-2.5, 2.5, 501)
    rows = "\n".join(f"{float(v)!r},{float(np.log(2))!r},2.0" for v in x)
    (tmp_path / "data.csv").write_text("x,u0,u1\n" + rows + "\n")
    cfg = dict(ODE_CFG, data={"csv": str(tmp_path / "data.csv")}, checks=["lemma_co"])
    out = tmp_path / "o"
    assert cli.main(["check", "--config", str(_write(tmp_path, cfg)), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["csv"].endswith("data.csv")


def test_run_all_checks_on_ode(tmp_path):
    cfg = {"data": {"preset": "ode"}, "grid": {"h": 0.004, "R": 1.6, "t_end": 1.05},
           "targets": [0.0], "checks": "all", "refine": True}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(_write(tmp_path, cfg)), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert {"curve.csv", "energy_a0.csv", "report.json"} <= {f["path"] for f in man["files"]}
    checks = json.loads((out / "report.json").read_text())["checks"]
    assert len(checks) == 10
    # ODE data violate the nonblowup hypothesis, so that check is not applicable
    assert {c["name"]: c["status"] for c in checks}["nonblowup_criterion"] == "n/a"
    assert all(c["status"] == "pass" for c in checks if c["name"] != "nonblowup_criterion")


def test_tilted_curve_csv_reports_slope(tmp_path):
    cfg = {"data": {"preset": "tilted", "params": {"kappa": 0.5}},
           "grid": {"h": 0.004, "R": 1.9, "x_center": 0.3, "t_end": 1.6},
           "targets": [0.0], "checks": ["lemma_co"], "refine": False}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(_write(tmp_path, cfg)), "--out", str(out)]) == 0
    rows = [line.split(",") for line in (out / "curve.csv").read_text().splitlines()]
    assert rows[0] == ["x", "T", "delta_min", "noncharacteristic"]
    at0 = next(r for r in rows[1:] if float(r[0]) == 0.0)
    assert float(at0[2]) == pytest.approx(0.5, abs=0.05) and at0[3] == "1"
