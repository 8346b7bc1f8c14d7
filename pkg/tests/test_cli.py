"""CLI and report path: verbs, exit codes, determinism, config handling."""

import json

import numpy as np
import pytest

from sectionlab import cli
from sectionlab.errors import ConfigError
from sectionlab.report import report_json_bytes, residual_csv_bytes


def test_describe_all_fixtures(capsys):
    for name in ("product-p1", "twisted-p1", "torus-pencil"):
        assert cli.main(["describe", "--fixture", name]) == 0
    out = capsys.readouterr().out
    assert "2 chart(s)" in out
    assert "9 chart(s)" in out


def test_describe_unknown_fixture():
    assert cli.main(["describe", "--fixture", "bogus"]) == 2


def test_run_light_suites_exit_zero(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = cli.main(["run", "--fixture", "product-p1", "--grid", "16",
                     "--suite", "atlas", "--suite", "bumps",
                     "--seed", "3", "--out", str(out), "--no-figures"])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["passed"] is True
    assert report["suites"]["atlas"]["passed"]
    assert (tmp_path / "report_residuals.csv").exists()


def test_run_all_suites_healthy_end_to_end(tmp_path):
    out = tmp_path / "report.json"
    code = cli.main(["run", "--fixture", "product-p1", "--grid", "16",
                     "--suite", "all", "--seed", "7", "--out", str(out),
                     "--no-figures"])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["passed"]
    assert all(not s["skipped"] for s in report["suites"].values())


def test_run_corrupt_fixture_fails_with_witness(tmp_path):
    out = tmp_path / "report.json"
    code = cli.main(["run", "--fixture", "twisted-p1-corrupt", "--suite", "all",
                     "--seed", "3", "--out", str(out), "--no-figures"])
    assert code == 1
    report = json.loads(out.read_text())
    atlas = report["suites"]["atlas"]
    assert not atlas["passed"]
    holo = next(c for c in atlas["checks"] if c["name"] == "transition_holomorphy")
    assert not holo["passed"] and "witness" in holo
    # dependents are skipped, not silently passed
    assert report["suites"]["sections"]["skipped"]


def test_run_jump_fixture_fails_continuity(tmp_path):
    out = tmp_path / "report.json"
    code = cli.main(["run", "--fixture", "twisted-p1-jump", "--suite", "atlas",
                     "--seed", "3", "--out", str(out), "--no-figures"])
    assert code == 1
    report = json.loads(out.read_text())
    chk = next(c for c in report["suites"]["atlas"]["checks"]
               if c["name"] == "parameter_continuity_refinement")
    assert not chk["passed"]


def test_single_suite_runs_alone():
    rep = cli.run({"fixture": "product-p1", "grid": 16, "seed": 3, "suites": ["metric"]})
    assert list(rep["suites"]) == ["metric"]
    assert rep["suites"]["metric"]["passed"]
    assert rep["passed"]


def test_determinism_byte_identical(tmp_path):
    cfgs = [{"fixture": "product-p1", "grid": 16, "seed": 11, "suites": ["atlas", "bumps"]}
            for _ in range(2)]
    blobs = [report_json_bytes(cli.run(c)) for c in cfgs]
    assert blobs[0] == blobs[1]


def test_timings_opt_in():
    cfg = {"fixture": "product-p1", "grid": 16, "seed": 11, "suites": ["atlas"]}
    assert "timings" not in cli.run(cfg)
    cfg["timings"] = True
    rep = cli.run(cfg)
    assert rep["timings"]["total_s"] >= 0.0


def test_config_file_and_flag_override(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"fixture": "twisted-p1-corrupt", "suites": ["atlas"],
                                    "seed": 3}))
    # flag overrides the config's fixture
    code = cli.main(["run", "--config", str(cfg_path), "--fixture", "product-p1",
                     "--no-figures"])
    assert code == 0


def test_config_errors():
    with pytest.raises(ConfigError):
        cli.run({"fixture": "product-p1", "suites": ["no-such-suite"]})
    with pytest.raises(ConfigError):
        cli.run({"suites": ["atlas"]})  # neither fixture nor family
    with pytest.raises(ConfigError):
        cli.run({"fixture": "product-p1", "tolerances": {"bogus_tol": 1.0}})
    assert cli.main(["run", "--fixture", "product-p1", "--suite", "nope"]) == 2


def test_inline_family_spec():
    spec = {
        "grid": {"kind": "circle", "n": 16},
        "charts": [{"id": "c1"}, {"id": "c2"}],
        "transitions": [
            {"src": "c1", "dst": "c2", "kind": "mobius_inversion",
             "scale": 1.0 / 2.25, "twist": {"kind": "sin", "amplitude": 0.4}},
            {"src": "c2", "dst": "c1", "kind": "mobius_inversion",
             "scale": 1.0 / 2.25, "twist": {"kind": "sin", "amplitude": 0.4}},
        ],
    }
    rep = cli.run({"family": spec, "grid": 16, "seed": 5, "suites": ["atlas", "bumps"],
                   "section": [{"chart": "c1", "t": t,
                                "z": [[0.65 * float(np.cos(0.1 * t)), 0.65 * float(np.sin(0.1 * t))]]}
                               for t in range(16)]})
    assert rep["fixture"] == "inline"
    assert rep["suites"]["atlas"]["passed"]
    assert rep["suites"]["bumps"]["passed"]


def test_inline_family_bad_spec():
    with pytest.raises(ConfigError):
        cli.run({"family": {"grid": {"n": 8}, "charts": [{"id": "c"}],
                 "transitions": [{"src": "c", "dst": "c", "kind": "wormhole"}]}})


def test_constants_command(capsys):
    code = cli.main(["constants", "--fixture", "product-p1", "--grid", "16", "--seed", "4"])
    assert code == 0
    out = capsys.readouterr().out
    for key in ("r0", "alpha0", "beta0", "delta0a", "delta0b", "c1a", "c1b", "delta2", "c2"):
        assert key in out


def test_report_csv_and_figures(tmp_path):
    cfg = {"fixture": "product-p1", "grid": 16, "seed": 3, "suites": ["atlas"],
           "out": str(tmp_path / "r.json")}
    rep = cli.run(cfg)
    csv_text = residual_csv_bytes(rep).decode()
    assert "transition_holomorphy" in csv_text
    assert (tmp_path / "r_residuals.png").exists()
    assert (tmp_path / "r_constants.png").exists()
