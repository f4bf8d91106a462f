"""Metrics CSV files, SVG training curves and run comparison tables."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

from .trainer import MetricsRecord


class CsvFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def csv_header(n_tasks: int) -> list[str]:
    return ["method", "trained_task", "epoch"] + [f"acc_task{i}" for i in range(1, n_tasks + 1)] + ["seconds"]


def write_metrics_csv(path, records: Sequence[MetricsRecord], n_tasks: int,
                      record_wallclock: bool = False) -> None:
    """One row per epoch. ``seconds`` is written as 0.000 unless ``record_wallclock``
    so that equal configs give byte-identical files."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(csv_header(n_tasks))
        for r in records:
            secs = r.seconds if record_wallclock else 0.0
            w.writerow([r.method, r.trained_task, r.epoch] + [f"{a:.4f}" for a in r.accuracies]
                       + [f"{secs:.3f}"])


@dataclass
class MetricsTable:
    path: str
    method: str
    n_tasks: int
    rows: list[tuple[int, int, tuple[float, ...]]]   # (trained_task, epoch, accuracies)

    @property
    def epochs_per_task(self) -> int:
        return max(e for _, e, _ in self.rows)


def read_metrics_csv(path) -> MetricsTable:
    with open(path, newline="") as f:
        lines = list(csv.reader(f))
    if not lines:
        raise CsvFormatError(path, 1, "empty file")
    head = lines[0]
    n_tasks = len(head) - 4
    if n_tasks < 1 or head != csv_header(n_tasks):
        raise CsvFormatError(path, 1, f"unexpected header {','.join(head)}")
    rows = []
    method = None
    for n, row in enumerate(lines[1:], 2):
        if len(row) != len(head):
            raise CsvFormatError(path, n, f"expected {len(head)} fields, got {len(row)}")
        try:
            t, e = int(row[1]), int(row[2])
            accs = tuple(float(x) for x in row[3:3 + n_tasks])
            float(row[-1])
        except ValueError as exc:
            raise CsvFormatError(path, n, str(exc)) from None
        if any(not 0.0 <= a <= 1.0 for a in accs):
            raise CsvFormatError(path, n, "accuracy outside [0, 1]")
        if method is not None and row[0] != method:
            raise CsvFormatError(path, n, f"method changes from {method} to {row[0]}")
        method = row[0]
        rows.append((t, e, accs))
    if not rows:
        raise CsvFormatError(path, 2, "no data rows")
    return MetricsTable(str(path), method, n_tasks, rows)


# Plot geometry. A point (epoch, acc), epoch counted cumulatively from 1 to
# E = n_tasks * epochs_per_task, lands at
#   x = PLOT_LEFT + (epoch - 1) / (E - 1) * (PLOT_RIGHT - PLOT_LEFT)
#   y = PLOT_BOTTOM - acc * (PLOT_BOTTOM - PLOT_TOP)
WIDTH, HEIGHT = 800, 500
PLOT_LEFT, PLOT_RIGHT = 70.0, 650.0
PLOT_TOP, PLOT_BOTTOM = 40.0, 440.0
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def to_pixel(epoch: float, acc: float, total_epochs: int) -> tuple[float, float]:
    span = max(total_epochs - 1, 1)
    x = PLOT_LEFT + (epoch - 1) / span * (PLOT_RIGHT - PLOT_LEFT)
    y = PLOT_BOTTOM - acc * (PLOT_BOTTOM - PLOT_TOP)
    return x, y


def render_svg(table: MetricsTable, title: str = "") -> str:
    per = table.epochs_per_task
    total = len(table.rows)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
             f'viewBox="0 0 {WIDTH} {HEIGHT}">',
             f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    title = title or f"{table.method}: per-task test accuracy"
    parts.append(f'<text x="{(PLOT_LEFT + PLOT_RIGHT) / 2}" y="24" text-anchor="middle" '
                 f'font-size="16">{escape(title)}</text>')
    parts.append(f'<line class="axis" x1="{PLOT_LEFT}" y1="{PLOT_BOTTOM}" x2="{PLOT_RIGHT}" '
                 f'y2="{PLOT_BOTTOM}" stroke="black"/>')
    parts.append(f'<line class="axis" x1="{PLOT_LEFT}" y1="{PLOT_TOP}" x2="{PLOT_LEFT}" '
                 f'y2="{PLOT_BOTTOM}" stroke="black"/>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        _, y = to_pixel(1, tick, total)
        parts.append(f'<text x="{PLOT_LEFT - 8}" y="{y + 4}" text-anchor="end" font-size="11">{tick:.2f}</text>')
    for b in range(1, total // per):
        x, _ = to_pixel(b * per, 0.0, total)
        parts.append(f'<line class="task-boundary" x1="{x:.2f}" y1="{PLOT_TOP}" x2="{x:.2f}" '
                     f'y2="{PLOT_BOTTOM}" stroke="#888" stroke-dasharray="4 4"/>')
    for e in (1, total):
        x, _ = to_pixel(e, 0.0, total)
        parts.append(f'<text x="{x:.2f}" y="{PLOT_BOTTOM + 18}" text-anchor="middle" font-size="11">{e}</text>')
    parts.append(f'<text x="{(PLOT_LEFT + PLOT_RIGHT) / 2}" y="{HEIGHT - 15}" text-anchor="middle" '
                 f'font-size="13">epoch</text>')
    parts.append(f'<text x="18" y="{(PLOT_TOP + PLOT_BOTTOM) / 2}" text-anchor="middle" font-size="13" '
                 f'transform="rotate(-90 18 {(PLOT_TOP + PLOT_BOTTOM) / 2})">test accuracy</text>')
    for t in range(table.n_tasks):
        color = COLORS[t % len(COLORS)]
        pts = " ".join("%.2f,%.2f" % to_pixel(i + 1, accs[t], total) for i, (_, _, accs) in enumerate(table.rows))
        parts.append(f'<polyline class="task-curve" points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = PLOT_TOP + 20 * t + 10
        parts.append(f'<line x1="{PLOT_RIGHT + 20}" y1="{ly}" x2="{PLOT_RIGHT + 45}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{PLOT_RIGHT + 50}" y="{ly + 4}" font-size="12">task {t + 1}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot(csv_path, svg_path, title: str = "") -> None:
    table = read_metrics_csv(csv_path)
    with open(svg_path, "w") as f:
        f.write(render_svg(table, title))


@dataclass
class RunSummary:
    label: str
    method: str
    final: tuple[float, ...]
    task1_after_task1: float
    retention_delta: float


def summarize(table: MetricsTable) -> RunSummary:
    first = [accs for t, _, accs in table.rows if t == 1]
    t1 = first[-1][0]
    final = table.rows[-1][2]
    parent = os.path.basename(os.path.dirname(os.path.abspath(table.path)))
    label = os.path.join(parent, os.path.basename(table.path)) if parent else os.path.basename(table.path)
    return RunSummary(label, table.method, final, t1, t1 - final[0])


def compare_runs(csv_paths: Sequence) -> tuple[list[RunSummary], str]:
    """Final per-task accuracies and task-1 retention delta for each run."""
    if not csv_paths:
        raise ValueError("no CSV files given")
    tables = [read_metrics_csv(p) for p in csv_paths]
    n = tables[0].n_tasks
    for t in tables[1:]:
        if t.n_tasks != n:
            raise CsvFormatError(t.path, 1, f"has {t.n_tasks} task columns, expected {n}")
    rows = [summarize(t) for t in tables]
    head = ["run", "method"] + [f"final_t{i}" for i in range(1, n + 1)] + ["t1_initial", "t1_delta"]
    body = [[r.label, r.method] + [f"{a:.4f}" for a in r.final]
            + [f"{r.task1_after_task1:.4f}", f"{r.retention_delta:+.4f}"] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip() for line in [head] + body]
    return rows, "\n".join(lines) + "\n"
