"""Deterministic figure rendering from the simulator's CSV outputs.

Consumes only the two documented schemas (episodes and summary CSV); no
metric is recomputed here.  Rendering is pinned so that the same CSV input
produces byte-identical SVG and PNG files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams.update({
    "svg.hashsalt": "fogrelay-figures",
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
})

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

EPISODE_HEADER = ["mode", "relay_count", "run", "episode", "termination", "steps",
                  "delivery_pct", "energy_pct", "reward_sum", "time_ms"]
SUMMARY_HEADER = ["mode", "relay_count", "delivery_mean", "delivery_sd",
                  "energy_mean", "energy_sd", "time_mean_ms", "time_sd_ms",
                  "per_agent_time_ms", "episodes", "runs"]

MODE_STYLE = {
    "decentralized": dict(color="#1f77b4", marker="o"),
    "centralized": dict(color="#d62728", marker="s"),
}

METRICS = {
    "delivery": ("delivery_mean", "delivery_sd", "Successful packets delivery (%)"),
    "energy": ("energy_mean", "energy_sd", "Total energy consumption (%)"),
    "time": ("time_mean_ms", "time_sd_ms", "Total computational time (ms)"),
}


class SchemaError(ValueError):
    """Input CSV does not match the documented schema."""


def _read(path, header):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if got != header:
            missing = [c for c in header if c not in got]
            raise SchemaError(
                f"{path}: header mismatch, missing column(s) "
                f"{missing or got}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: wrong field count")
            rows.append(dict(zip(header, row)))
    return rows


def read_episodes(path):
    return _read(path, EPISODE_HEADER)


def read_summary(path):
    return _read(path, SUMMARY_HEADER)


def _save(fig, out_base: Path):
    out_base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for ext in ("svg", "png"):
        target = out_base.with_suffix(f".{ext}")
        # a fixed Date keeps SVG output byte-stable across reruns
        fig.savefig(target, format=ext, metadata={"Date": None} if ext == "svg" else None)
        written.append(target)
    plt.close(fig)
    return written


def plot_convergence(episodes_csv, out_base):
    """Steps-per-episode learning curves for the decentralized runs.

    One line per relay count present in the CSV, each averaged over runs.
    """
    rows = [r for r in read_episodes(episodes_csv) if r["mode"] == "decentralized"]
    if not rows:
        raise SchemaError(f"{episodes_csv}: no decentralized rows to plot")
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    counts = sorted({int(r["relay_count"]) for r in rows})
    for k in counts:
        per_episode = {}
        for r in rows:
            if int(r["relay_count"]) != k:
                continue
            per_episode.setdefault(int(r["episode"]), []).append(float(r["steps"]))
        episodes = sorted(per_episode)
        means = [sum(per_episode[e]) / len(per_episode[e]) for e in episodes]
        ax.plot([e + 1 for e in episodes], means, lw=1.2,
                label=f"{k} relay{'s' if k > 1 else ''}")
    ax.set_xlabel("Episode")
    ax.set_ylabel("Steps per episode")
    ax.set_yscale("log")
    ax.set_title("Learning progress of the relay agents")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, Path(out_base))


def plot_vs_relays(summary_csv, metric, out_base):
    """Mean +/- sd of a summary metric against relay count, per mode."""
    if metric not in METRICS:
        raise SchemaError(f"unknown metric {metric!r}, expected one of "
                          f"{sorted(METRICS)}")
    mean_col, sd_col, ylabel = METRICS[metric]
    rows = read_summary(summary_csv)
    modes = sorted({r["mode"] for r in rows})
    if not modes:
        raise SchemaError(f"{summary_csv}: no rows")
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for mode in modes:
        series = sorted(((int(r["relay_count"]), float(r[mean_col]),
                          float(r[sd_col])) for r in rows if r["mode"] == mode))
        xs = [s[0] for s in series]
        ys = [s[1] for s in series]
        errs = [s[2] for s in series]
        style = MODE_STYLE.get(mode, dict(marker="^"))
        ax.errorbar(xs, ys, yerr=errs, capsize=3, lw=1.3, label=mode, **style)
    if len(modes) == 1:
        print(f"warning: only one mode ({modes[0]}) present in {summary_csv}")
    ax.set_xlabel("Number of fog relays")
    ax.set_ylabel(ylabel)
    ax.set_xticks(sorted({int(r['relay_count']) for r in rows}))
    ax.set_title(f"{ylabel.split(' (')[0]} vs. number of fog relays")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, Path(out_base))
