#!/usr/bin/env python3
"""Plot cache.csv and latency-*.csv written by `harness` as SVG and PNG."""

import argparse
import csv
import glob
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

TASKS = [
    "establish session",
    "receive data",
    "reconstruct secret",
    "detect watermark",
    "terminate session",
]


def save(fig, out, name):
    for ext in ("svg", "png"):
        path = os.path.join(out, f"{name}.{ext}")
        fig.savefig(path, dpi=150, bbox_inches="tight")
        print("wrote", path)
    plt.close(fig)


def plot_cache(path, out):
    series = defaultdict(list)
    with open(path) as f:
        for row in csv.DictReader(f):
            series[row["policy"]].append(
                (int(row["capacity"]), float(row["mean_hr"]), float(row["min_hr"]), float(row["max_hr"]))
            )
    fig, ax = plt.subplots(figsize=(6, 4))
    for policy, pts in series.items():
        pts.sort()
        cap = [p[0] for p in pts]
        mean = [p[1] for p in pts]
        lo = [p[1] - p[2] for p in pts]
        hi = [p[3] - p[1] for p in pts]
        ax.errorbar(cap, mean, yerr=[lo, hi], marker="o", capsize=3, label=policy)
    ax.set_xlabel("cache capacity")
    ax.set_ylabel("hit ratio")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()
    save(fig, out, "cache")


def plot_latency(paths, out):
    rows = defaultdict(dict)
    for path in paths:
        with open(path) as f:
            for row in csv.DictReader(f):
                rows[(row["scheme"], row["mode"])][row["task"]] = float(row["mean_ms"])
    keys = sorted(rows)
    fig, ax = plt.subplots(figsize=(7, 4))
    bottom = [0.0] * len(keys)
    labels = [f"{s}\n{m}" for s, m in keys]
    for task in TASKS:
        vals = [rows[k].get(task, 0.0) for k in keys]
        ax.bar(labels, vals, bottom=bottom, label=task)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_ylabel("mean latency (ms)")
    ax.grid(axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    save(fig, out, "latency")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("results", help="directory holding the CSV files")
    ap.add_argument("--out", help="output directory (defaults to RESULTS)")
    args = ap.parse_args()
    out = args.out or args.results
    os.makedirs(out, exist_ok=True)
    cache = os.path.join(args.results, "cache.csv")
    if os.path.exists(cache):
        plot_cache(cache, out)
    lat = sorted(glob.glob(os.path.join(args.results, "latency-*.csv")))
    if lat:
        plot_latency(lat, out)


if __name__ == "__main__":
    main()
