"""Command-line front end: run / describe / constants.

`run` executes the selected verification suites on a fixture (or an inline
family spec) and writes a machine-readable JSON report, a residual CSV and two
figures next to it.  Exit status: 0 all suites pass, 1 a suite failed, 2 the
configuration was unusable.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import report as report_mod
from . import sections as sec
from . import suites as suites_mod
from .errors import ConfigError, FixtureError, SectionLabError
from .family import (
    AffineTransition,
    Atlas,
    Chart,
    MobiusInversionTransition,
)
from .fixtures import FIXTURE_NAMES, Bundle, describe_fixture, make_bumps, make_fixture
from .grid import BaseGrid
from .suites import SUITE_ORDER, Tolerances

DEFAULT_GRID = 16
DEFAULT_SEED = 7


# ---------------------------------------------------------------------------
# configuration

def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _twist_values(grid: BaseGrid, spec) -> np.ndarray:
    kind = spec.get("kind", "none")
    if kind == "none":
        return np.zeros(grid.size)
    if kind == "sin":
        return float(spec.get("amplitude", 0.0)) * np.sin(grid.coords)
    if kind == "values":
        vals = np.asarray(spec.get("values", []), dtype=float)
        if len(vals) != grid.size:
            raise ConfigError("twist values must match the grid size")
        return vals
    raise ConfigError(f"unknown twist kind {kind!r}")


def family_from_spec(spec: dict) -> Atlas:
    """Inline family: named transition formulas with parameters, no code."""
    try:
        gspec = spec["grid"]
        grid = (BaseGrid.circle(int(gspec["n"])) if gspec.get("kind", "circle") == "circle"
                else BaseGrid.interval(int(gspec["n"])))
        charts = [Chart(c["id"], int(c.get("dim", 1)), grid.full_domain())
                  for c in spec["charts"]]
        transitions = {}
        for tr in spec.get("transitions", []):
            kind = tr["kind"]
            src, dst = tr["src"], tr["dst"]
            if kind == "mobius_inversion":
                scale = float(tr.get("scale", 1.0))
                a = scale * np.exp(1j * _twist_values(grid, tr.get("twist", {})))
                transitions[(src, dst)] = MobiusInversionTransition(a)
            elif kind == "affine":
                a = complex(*tr.get("a", [1.0, 0.0]))
                b = complex(*tr.get("b", [0.0, 0.0]))
                transitions[(src, dst)] = AffineTransition(
                    np.full(grid.size, a), np.full(grid.size, b))
            elif kind == "identity":
                continue
            else:
                raise ConfigError(f"unknown transition kind {kind!r}")
        return Atlas(grid, charts, transitions, name=spec.get("name", "inline"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed family spec: {exc}") from None


def bundle_from_config(cfg: dict) -> Bundle:
    grid_n = int(cfg.get("grid", DEFAULT_GRID))
    if "family" in cfg:
        atlas = family_from_spec(cfg["family"])

        def rebuild(n, _spec=cfg["family"]):
            refined = dict(_spec)
            refined["grid"] = dict(_spec["grid"], n=n)
            return Bundle("inline", family_from_spec(refined), params={"source": "config"})

        bundle = Bundle("inline", atlas, params={"source": "config"}, builder=rebuild)
    else:
        name = cfg.get("fixture")
        if not name:
            raise ConfigError("config needs either a fixture name or an inline family")
        bundle = make_fixture(name, grid_n)
    if "section" in cfg:
        bundle.section_data = cfg["section"]
    return bundle


def resolve_tolerances(cfg: dict) -> Tolerances:
    overrides = cfg.get("tolerances", {})
    base = Tolerances().as_dict()
    unknown = set(overrides) - set(base)
    if unknown:
        raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
    base.update({k: float(v) for k, v in overrides.items()})
    return Tolerances(**base)


def run(cfg: dict) -> dict:
    """Execute the configured suites; returns the report dict."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a dict")
    bundle = bundle_from_config(cfg)
    seed = int(cfg.get("seed", DEFAULT_SEED))
    grid_n = int(cfg.get("grid", DEFAULT_GRID))
    selected = cfg.get("suites", ["all"])
    if isinstance(selected, str):
        selected = [selected]
    bad = [s for s in selected if s not in SUITE_ORDER and s != "all"]
    if bad:
        raise ConfigError(f"unknown suites: {bad}; known: {', '.join(SUITE_ORDER)} or 'all'")
    tol = resolve_tolerances(cfg)

    timings = {} if cfg.get("timings") else None
    t_start = time.perf_counter()
    results = suites_mod.run_all(bundle, tol, seed, selected)
    if timings is not None:
        timings["total_s"] = time.perf_counter() - t_start
    report = report_mod.build_report(bundle.name, grid_n, seed, tol.as_dict(), results, timings)

    out = cfg.get("out")
    if out:
        report_mod.write_outputs(report, out, figures=cfg.get("figures", True))
    return report


def estimate_constants(cfg: dict) -> dict:
    """Estimate and return every certified constant for a fixture, no suites."""
    bundle = bundle_from_config(cfg)
    seed = int(cfg.get("seed", DEFAULT_SEED))
    bumps = make_bumps(bundle, rng=np.random.default_rng([seed, 0]))
    mc = sec.metric_constants_for(bumps)
    u = suites_mod.canonical_section(bundle, bumps)
    nc = sec.build_normal_chart(u, bumps, seed=23)
    ec = nc.exp_constants
    return {
        "fixture": bundle.name,
        "r0": bumps.r0,
        "alpha0": ec.alpha0, "beta0": ec.beta0,
        "delta0a": ec.delta0a, "delta0b": ec.delta0b,
        "c1a": mc.c1a, "c1b": mc.c1b, "delta2": mc.delta2, "c2": mc.c2,
        "rho_star": nc.rho_star, "scale": nc.scale,
    }


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sectionlab",
        description="Verification laboratory for section spaces of families of compact complex manifolds.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run verification suites and write a report")
    run_p.add_argument("--fixture", help=f"fixture name ({', '.join(FIXTURE_NAMES)})")
    run_p.add_argument("--config", help="JSON config path (overridden by explicit flags)")
    run_p.add_argument("--grid", type=int, help="base grid resolution")
    run_p.add_argument("--suite", action="append", help="suite name or 'all' (repeatable)")
    run_p.add_argument("--seed", type=int, help="random seed (fixed seed => identical report)")
    run_p.add_argument("--out", help="report JSON path; CSV and figures land next to it")
    run_p.add_argument("--timings", action="store_true", help="include wall times in the report")
    run_p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    desc_p = sub.add_parser("describe", help="summarize a fixture")
    desc_p.add_argument("--fixture", required=True)
    desc_p.add_argument("--grid", type=int, default=DEFAULT_GRID)

    const_p = sub.add_parser("constants", help="estimate and print certified constants")
    const_p.add_argument("--fixture", required=True)
    const_p.add_argument("--grid", type=int, default=DEFAULT_GRID)
    const_p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    return parser


def _config_from_args(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    if args.fixture:
        cfg["fixture"] = args.fixture
    if args.grid is not None:
        cfg["grid"] = args.grid
    if args.suite:
        cfg["suites"] = args.suite
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out:
        cfg["out"] = args.out
    if args.timings:
        cfg["timings"] = True
    if args.no_figures:
        cfg["figures"] = False
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "describe":
            print(describe_fixture(args.fixture, args.grid))
            return 0
        if args.command == "constants":
            vals = estimate_constants({"fixture": args.fixture, "grid": args.grid,
                                       "seed": args.seed})
            for key in sorted(vals):
                val = vals[key]
                print(f"{key} = {val}" if isinstance(val, str) else f"{key} = {val:.8g}")
            return 0
        # run
        cfg = _config_from_args(args)
        report = run(cfg)
        for name in SUITE_ORDER:
            if name in report["suites"]:
                sres = report["suites"][name]
                state = "skip" if sres["skipped"] else ("pass" if sres["passed"] else "FAIL")
                print(f"{name:10s} {state}")
        print("overall:", "pass" if report["passed"] else "FAIL")
        return 0 if report["passed"] else 1
    except (ConfigError, FixtureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SectionLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
