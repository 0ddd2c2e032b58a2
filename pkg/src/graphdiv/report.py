"""Aggregation and rendering of metrics CSVs from one or more runs.

The first CSV is the base run; every other run is summarized as a per-metric
relative lift against it. Raw per-round series are exported as
gnuplot-compatible whitespace-separated files, and the same series are
rendered to PNG line charts so a run can be eyeballed without extra tooling.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import CSV_FIELDS

LIFT_METRICS = ("ilad", "rd", "coverage", "positives", "graph_edges")


class ReportError(ValueError):
    """Unusable metrics CSV (missing, header mismatch, malformed rows)."""


@dataclass
class RunSeries:
    """One run's per-round metric columns, keyed by CSV field name."""

    name: str
    columns: dict[str, np.ndarray]

    @property
    def rounds(self) -> np.ndarray:
        return self.columns["round"]


def load_metrics_csv(path: str | Path) -> RunSeries:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ReportError(f"{path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ReportError(f"{path}: empty metrics file")
    header = tuple(lines[0].split(","))
    if header != CSV_FIELDS:
        raise ReportError(
            f"{path}: header mismatch: expected {','.join(CSV_FIELDS)!r}, "
            f"got {lines[0]!r}"
        )
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(CSV_FIELDS):
            raise ReportError(f"{path}: line {lineno}: expected {len(CSV_FIELDS)} fields")
        try:
            rows.append([float(x) for x in parts])
        except ValueError as exc:
            raise ReportError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise ReportError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    return RunSeries(
        name=path.stem if path.stem != "metrics" else path.parent.name or path.stem,
        columns={fieldname: data[:, i] for i, fieldname in enumerate(CSV_FIELDS)},
    )


def lift_table(runs: Sequence[RunSeries]) -> str:
    """Per-metric mean-over-rounds lift of each run vs the first (base) run."""
    if not runs:
        raise ReportError("need at least one metrics CSV")
    base = runs[0]
    header = ["metric", f"{base.name} (base)"] + [r.name for r in runs[1:]]
    lines = ["\t".join(header)]
    for metric in LIFT_METRICS:
        base_mean = float(np.mean(base.columns[metric]))
        cells = [metric, f"{base_mean:.6f}"]
        for run in runs[1:]:
            value = float(np.mean(run.columns[metric]))
            if base_mean == 0.0:
                cells.append("inf%" if value != 0.0 else "+0.000%")
            else:
                cells.append(f"{100.0 * (value - base_mean) / base_mean:+.3f}%")
        lines.append("\t".join(cells))
    return "\n".join(lines)


def write_series(runs: Sequence[RunSeries], out_dir: str | Path) -> list[Path]:
    """One whitespace-separated file per metric: round, then one column per run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    max_rounds = max(len(r.rounds) for r in runs)
    for metric in LIFT_METRICS:
        path = out / f"{metric}.dat"
        lines = ["# round " + " ".join(run.name for run in runs)]
        for i in range(max_rounds):
            cells = [str(i)]
            for run in runs:
                col = run.columns[metric]
                cells.append(f"{col[i]:.6f}" if i < len(col) else "nan")
            lines.append(" ".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def render_figures(runs: Sequence[RunSeries], out_dir: str | Path) -> list[Path]:
    """Per-metric PNG line charts, one series per run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in LIFT_METRICS:
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for run in runs:
            ax.plot(run.rounds, run.columns[metric], marker="o", markersize=3, label=run.name)
        ax.set_xlabel("round")
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
