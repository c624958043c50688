"""CSV artifact emission for experiment and backtest runs.

All files are written atomically (temp file then rename), carry a provenance
comment line, and use a fixed float format so identical runs produce
byte-identical output. Missing cells are written as NA.
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import MissingArtifacts
from .evaluation import wilson_interval

__all__ = [
    "atomic_write_text",
    "fmt",
    "write_experiment_csvs",
    "write_backtest_csvs",
    "consolidate_runs",
]


def fmt(value) -> str:
    """Render a float cell; NA for missing."""
    if value is None:
        return "NA"
    v = float(value)
    if np.isnan(v):
        return "NA"
    return f"{v:.10g}"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _provenance(config_hash: str, seed) -> str:
    return f"# schema=1 config_hash={config_hash} seed={seed}\n"


def write_experiment_csvs(result, outdir) -> list:
    """Emit result.csv, summary.csv, classification.csv and curves/<model>.csv."""
    outdir = Path(outdir)
    cfg = result.config
    head = _provenance(cfg.config_hash(), cfg.master_seed)
    written = []

    lines = [head, "model,level,coverage,wilson_lo,wilson_hi,class\n"]
    for name in cfg.models:
        report = result.reports[name]
        by_level = {lv: (s, n) for lv, s, n in result.pooled[name]}
        for rec in report.records:
            if rec.level in by_level:
                s, n = by_level[rec.level]
                ci = wilson_interval(s, n)
                lo, hi = fmt(ci.lo), fmt(ci.hi)
                cls = report.classification.get(rec.level, "NA")
            else:
                lo = hi = cls = "NA"
            lines.append(
                f"{name},{fmt(rec.level)},{fmt(rec.coverage)},{lo},{hi},{cls}\n"
            )
    path = outdir / "result.csv"
    atomic_write_text(path, "".join(lines))
    written.append(path)

    lines = [head, "model,mae,na_cells\n"]
    for name in cfg.models:
        lines.append(
            f"{name},{fmt(result.mae[name])},{result.reports[name].na_cells}\n"
        )
    path = outdir / "summary.csv"
    atomic_write_text(path, "".join(lines))
    written.append(path)

    lines = [head, "model,within,below,above\n"]
    for name in cfg.models:
        s = result.reports[name].summary
        lines.append(
            f"{name},{fmt(s.get('within'))},{fmt(s.get('below'))},{fmt(s.get('above'))}\n"
        )
    path = outdir / "classification.csv"
    atomic_write_text(path, "".join(lines))
    written.append(path)

    for name in cfg.models:
        lines = [head, "level,coverage\n"]
        for lv, cov in result.reports[name].curve:
            lines.append(f"{fmt(lv)},{fmt(cov)}\n")
        path = outdir / "curves" / f"{name}.csv"
        atomic_write_text(path, "".join(lines))
        written.append(path)
    return written


def write_backtest_csvs(result, outdir) -> list:
    """Emit pit.csv, gar_curves/<model>_h<h>.csv and gar_summary.csv."""
    outdir = Path(outdir)
    cfg = result.config
    head = _provenance("backtest", cfg.seed)
    written = []

    lines = [head, "date,model,pit\n"]
    for name in cfg.models:
        for date, pit in zip(result.dates, result.pits[name]):
            lines.append(f"{date},{name},{fmt(pit)}\n")
    path = outdir / "pit.csv"
    atomic_write_text(path, "".join(lines))
    written.append(path)

    for name in cfg.models:
        lines = [head, "level,pit_cdf\n"]
        for lv, v in result.reports[name].curve:
            lines.append(f"{fmt(lv)},{fmt(v)}\n")
        path = outdir / "gar_curves" / f"{name}_h{cfg.horizon}.csv"
        atomic_write_text(path, "".join(lines))
        written.append(path)

    lines = [head, "model,mode,h,mae\n"]
    for name in cfg.models:
        lines.append(
            f"{name},{cfg.predictor_mode},{cfg.horizon},{fmt(result.mae[name])}\n"
        )
    path = outdir / "gar_summary.csv"
    atomic_write_text(path, "".join(lines))
    written.append(path)
    return written


def _read_csv_rows(path):
    rows = []
    with open(path) as fh:
        header = None
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if header is None:
                header = parts
                continue
            rows.append(dict(zip(header, parts)))
    return rows


def consolidate_runs(output_dir):
    """Merge summary.csv artifacts from completed runs under `output_dir`.

    Returns (csv_text, table_text). Each run contributes one MAE column; runs
    with differing level grids are reported with their own level sets.
    """
    output_dir = Path(output_dir)
    runs = {}
    levels_by_run = {}
    candidates = sorted(
        {p.parent for p in output_dir.glob("**/summary.csv")}
        | {p.parent for p in output_dir.glob("**/gar_summary.csv")}
    )
    for rundir in candidates:
        label = str(rundir.relative_to(output_dir)) or "."
        summary = rundir / "summary.csv"
        if summary.exists():
            runs[label] = {r["model"]: r["mae"] for r in _read_csv_rows(summary)}
            result = rundir / "result.csv"
            if result.exists():
                levels_by_run[label] = sorted(
                    {r["level"] for r in _read_csv_rows(result)}, key=float
                )
        else:
            runs[label] = {
                f"{r['model']}[{r['mode']},h={r['h']}]": r["mae"]
                for r in _read_csv_rows(rundir / "gar_summary.csv")
            }
    if not runs:
        raise MissingArtifacts(f"no summary.csv or gar_summary.csv under {output_dir}")
    models = sorted({m for per in runs.values() for m in per})
    labels = sorted(runs)
    lines = ["model," + ",".join(labels) + "\n"]
    for m in models:
        lines.append(m + "," + ",".join(runs[lb].get(m, "NA") for lb in labels) + "\n")
    csv_text = "".join(lines)

    width = max(len(m) for m in models) + 2
    col = max(12, max(len(lb) for lb in labels) + 2)
    table = ["MAE by model and run\n"]
    table.append(" " * width + "".join(lb.rjust(col) for lb in labels) + "\n")
    for m in models:
        table.append(
            m.ljust(width)
            + "".join(runs[lb].get(m, "NA").rjust(col) for lb in labels)
            + "\n"
        )
    level_sets = {tuple(v) for v in levels_by_run.values()}
    if len(level_sets) > 1:
        table.append("\nLevel grids differ across runs:\n")
        for lb in labels:
            if lb in levels_by_run:
                table.append(f"  {lb}: {' '.join(levels_by_run[lb])}\n")
    return csv_text, "".join(table)
