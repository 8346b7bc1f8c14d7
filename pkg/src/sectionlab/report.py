"""Report assembly and rendering: canonical JSON, residual CSV, figures."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

SCHEMA_VERSION = 1


def build_report(fixture: str, grid_n: int, seed: int, tolerances: dict,
                 results: dict, timings: dict | None = None) -> dict:
    """Assemble the machine-readable run report.

    Deterministic for a fixed (config, seed): timings are only attached when
    measured explicitly (they are the one volatile field).
    """
    suites = {name: res.as_dict() for name, res in results.items()}
    report = {
        "schema_version": SCHEMA_VERSION,
        "fixture": fixture,
        "grid": int(grid_n),
        "seed": int(seed),
        "tolerances": {k: float(v) for k, v in tolerances.items()},
        "suites": suites,
        "passed": all(r["passed"] or r["skipped"] for r in suites.values())
                  and any(not r["skipped"] for r in suites.values()),
    }
    if timings is not None:
        report["timings"] = {k: round(float(v), 3) for k, v in timings.items()}
    return report


def report_json_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()


def residual_rows(report: dict) -> list:
    rows = [("suite", "check", "passed", "value", "bound", "witness")]
    for sname in sorted(report["suites"]):
        sres = report["suites"][sname]
        for chk in sres.get("checks", []):
            rows.append((sname, chk["name"], str(chk["passed"]).lower(),
                         repr(chk.get("value", "")), repr(chk.get("bound", "")),
                         chk.get("witness", "")))
    return rows


def residual_csv_bytes(report: dict) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf)
    for row in residual_rows(report):
        writer.writerow(row)
    return buf.getvalue().encode()


def render_figures(report: dict, stem: Path) -> list:
    """Residual-vs-bound chart and measured-constants chart, written as PNGs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    labels, values, bounds, colors = [], [], [], []
    for sname in sorted(report["suites"]):
        for chk in report["suites"][sname].get("checks", []):
            if chk.get("value") is None or chk.get("bound") is None:
                continue
            labels.append(f"{sname}:{chk['name']}")
            values.append(max(abs(chk["value"]), 1e-18))
            bounds.append(max(abs(chk["bound"]), 1e-18))
            colors.append("tab:blue" if chk["passed"] else "tab:red")
    if labels:
        fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(labels)), 4.2))
        x = range(len(labels))
        ax.bar(x, values, color=colors, label="measured")
        ax.plot(x, bounds, "k_", markersize=14, label="bound")
        ax.set_yscale("log")
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=75, ha="right", fontsize=7)
        ax.set_ylabel("residual / constant")
        ax.set_title(f"{report['fixture']}: measured values against their bounds")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = stem.with_name(stem.name + "_residuals.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)

    const_labels, const_values = [], []
    for sname in sorted(report["suites"]):
        for key, val in sorted(report["suites"][sname].get("constants", {}).items()):
            const_labels.append(f"{sname}:{key}")
            const_values.append(max(abs(val), 1e-18))
    if const_labels:
        fig, ax = plt.subplots(figsize=(max(6, 0.4 * len(const_labels)), 4.0))
        x = range(len(const_labels))
        ax.bar(x, const_values, color="tab:green")
        ax.set_yscale("log")
        ax.set_xticks(list(x))
        ax.set_xticklabels(const_labels, rotation=75, ha="right", fontsize=7)
        ax.set_ylabel("value")
        ax.set_title(f"{report['fixture']}: estimated constants")
        fig.tight_layout()
        path = stem.with_name(stem.name + "_constants.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)
    return written


def write_outputs(report: dict, out_path, figures: bool = True) -> list:
    """Write report.json plus the residual CSV (and figures) alongside it."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    written = [out_path]
    out_path.write_bytes(report_json_bytes(report))
    stem = out_path.with_suffix("")
    csv_path = stem.with_name(stem.name + "_residuals.csv")
    csv_path.write_bytes(residual_csv_bytes(report))
    written.append(csv_path)
    if figures:
        written.extend(render_figures(report, stem))
    return written
