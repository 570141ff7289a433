"""Run aggregation: delimited outputs plus rendered figures.

The report path reads one or more run directories (each holding
run_config.json, metrics.json and records.csv), writes the aggregate and
diversity tables, and renders matching matplotlib figures next to them.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .data import load_schema
from .engine import SensitivityResolver
from .knowledge import load_default_graph, load_graph
from .metrics import RunComparison, pca_project
from .records import read_records

log = logging.getLogger(__name__)


def load_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    with open(run_dir / "run_config.json", encoding="utf-8") as fh:
        config = json.load(fh)
    with open(run_dir / "metrics.json", encoding="utf-8") as fh:
        metrics = json.load(fh)
    return {"dir": run_dir, "config": config, "metrics": metrics}


def write_aggregate_csv(runs: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "mode", "tsn", "dsn", "elapsed", "dss", "sur"])
        for r in runs:
            m = r["metrics"]
            writer.writerow(
                [
                    r["dir"].name,
                    r["config"].get("mode", "?"),
                    m["tsn"],
                    m["dsn"],
                    f"{m['elapsed']:.3f}",
                    "-" if m["dss"] is None else f"{m['dss']:.6f}",
                    f"{m['sur']:.6f}",
                ]
            )


def _run_label(r: dict) -> str:
    return f"{r['config'].get('mode', '?')}:{r['dir'].name}"


def diversity_table(runs: list[dict]) -> list[tuple[float, float, str]]:
    """(x, y, label) rows from a shared 2-D projection of all run records."""
    schema_paths = {r["config"]["schema"] for r in runs}
    if len(schema_paths) != 1:
        raise ValueError(f"diversity projection needs one shared schema, got {schema_paths}")
    schema = load_schema(schema_paths.pop())
    if schema.is_text:
        log.info("diversity projection skipped: text schema has no fixed encoding")
        return []
    graph_paths = {r["config"].get("graph") for r in runs}
    graph_path = graph_paths.pop() if len(graph_paths) == 1 else None
    graph = load_graph(graph_path) if graph_path else load_default_graph()

    labels: list[str] = []
    records = []
    for r in runs:
        protected = r["config"].get("protected")
        resolver = SensitivityResolver(schema, protected, graph)
        run_records = read_records(r["dir"] / "records.csv", schema, resolver)
        records.extend(run_records)
        labels.extend([_run_label(r)] * len(run_records))
    if len(records) < 3:
        log.info("diversity projection skipped: fewer than 3 records")
        return []
    points = pca_project(records, schema)
    return [(float(x), float(y), lab) for (x, y), lab in zip(points, labels)]


def write_diversity_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "label"])
        for x, y, label in rows:
            writer.writerow([f"{x:.6f}", f"{y:.6f}", label])


def render_diversity_figure(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    by_label: dict[str, list[tuple[float, float]]] = {}
    for x, y, label in rows:
        by_label.setdefault(label, []).append((x, y))
    for label, pts in sorted(by_label.items()):
        xs, ys = zip(*pts)
        ax.scatter(xs, ys, s=8, alpha=0.5, label=label)
    ax.set_xlabel("first principal axis")
    ax.set_ylabel("second principal axis")
    ax.set_title("Diversity of discriminatory samples")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_metrics_figure(runs: list[dict], path) -> None:
    names = [_run_label(r) for r in runs]
    surs = [r["metrics"]["sur"] for r in runs]
    dsses = [r["metrics"]["dss"] for r in runs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(range(len(names)), surs, color="tab:blue")
    ax1.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=7)
    ax1.set_ylabel("SUR")
    ax1.set_title("Success rate per run")
    shown = [(n, d) for n, d in zip(names, dsses) if d is not None]
    if shown:
        ax2.bar(range(len(shown)), [d for _, d in shown], color="tab:orange")
        ax2.set_xticks(range(len(shown)), [n for n, _ in shown], rotation=45, ha="right", fontsize=7)
    ax2.set_ylabel("DSS (s/sample)")
    ax2.set_title("Seconds per discriminatory sample")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(run_dirs, out_dir) -> list[Path]:
    """Aggregate table + diversity table, each with a rendered figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = [load_run(d) for d in run_dirs]
    written = []

    aggregate_path = out_dir / "aggregate_metrics.csv"
    write_aggregate_csv(runs, aggregate_path)
    written.append(aggregate_path)
    metrics_png = out_dir / "metrics.png"
    render_metrics_figure(runs, metrics_png)
    written.append(metrics_png)

    rows = diversity_table(runs)
    diversity_path = out_dir / "diversity.csv"
    write_diversity_csv(rows, diversity_path)
    written.append(diversity_path)
    if rows:
        diversity_png = out_dir / "diversity.png"
        render_diversity_figure(rows, diversity_png)
        written.append(diversity_png)
    return written


def write_comparison(dirs_a, dirs_b, out_dir) -> list[Path]:
    """Mann-Whitney / effect-size comparison of per-run DSS, plus a figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def collect(dirs):
        values = []
        for d in dirs:
            dss = load_run(d)["metrics"]["dss"]
            if dss is None:
                raise ValueError(f"run {d} found no discriminatory samples; DSS undefined")
            values.append(dss)
        return values

    dss_a, dss_b = collect(dirs_a), collect(dirs_b)
    comparison = RunComparison.of(dss_a, dss_b)
    json_path = out_dir / "comparison.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(comparison.to_dict(), fh, indent=2)
        fh.write("\n")

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot([dss_a, dss_b], tick_labels=["runs A", "runs B"])
    ax.set_ylabel("DSS (s/sample)")
    ax.set_title(f"p={comparison.p_value:.4g}, A12={comparison.a12:.3f}")
    fig.tight_layout()
    png_path = out_dir / "dss_compare.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [json_path, png_path]
