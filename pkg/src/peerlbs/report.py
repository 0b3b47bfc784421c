"""Metrics CSV output and matplotlib figures."""

from __future__ import annotations

import csv
import io
import os
from statistics import mean

from .metrics import CASES, COLUMNS

HEAD = ["key", "value", "seed"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def rows_to_csv(rows, path=None) -> str:
    """``rows``: [(key, value, seed, MetricsReport row dict)]. Adds one mean row per value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEAD + COLUMNS)
    for key, value, seed, row in rows:
        w.writerow([key, value, seed] + [_fmt(row[c]) for c in COLUMNS])
    for key, value, group in group_by_value(rows):
        if len(group) > 1:
            w.writerow([key, value, "mean"] + [_fmt(mean(float(r[c]) for r in group)) for c in COLUMNS])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def group_by_value(rows):
    order, groups = [], {}
    for key, value, _, row in rows:
        if (key, value) not in groups:
            order.append((key, value))
            groups[(key, value)] = []
        groups[(key, value)].append(row)
    return [(k, v, groups[(k, v)]) for k, v in order]


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def sweep_figures(rows, out_dir) -> list[str]:
    """One PNG per metric family, x = swept value, y = mean over seeds."""
    plt = _pyplot()
    os.makedirs(out_dir, exist_ok=True)
    groups = group_by_value(rows)
    if not groups:
        return []
    key = groups[0][0]
    try:
        xs = [float(v) for _, v, _ in groups]
    except ValueError:
        xs = list(range(len(groups)))
    panels = {
        "hit_ratios": ["peer_hit_ratio", "local_hit_ratio", "lbs_hit_ratio", "conflicted_ratio"],
        "expo_lbs": [f"expo_lbs_{c}" for c in CASES],
        "expo_coalition": [f"expo_coalition_{c}" for c in CASES],
        "resilience": ["malicious_serving_ratio", "affected_query_ratio", "attacked_query_ratio"],
        "overhead": ["fetches_per_serving_node", "fetches_per_node", "regional_transfers_per_node"],
    }
    written = []
    for name, cols in panels.items():
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for col in cols:
            ax.plot(xs, [mean(float(r[col]) for r in g) for _, _, g in groups], marker="o", label=col)
        ax.set_xlabel(key)
        ax.set_title(name.replace("_", " "))
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{name}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def run_figures(report, out_dir) -> list[str]:
    """Serving-population time series for a single run."""
    plt = _pyplot()
    os.makedirs(out_dir, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if report.malicious_serving_ratio:
        t, m = zip(*report.malicious_serving_ratio)
        _, a = zip(*report.active_malicious_ratio)
        ax.plot(t, m, label="malicious serving")
        ax.plot(t, a, label="active malicious")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("share of serving nodes")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = os.path.join(out_dir, "serving_timeseries.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
