#!/usr/bin/env python3
"""Plot per-word group distance over time from `pelp diff-groups --series`.

usage: plot_series.py series.csv [-o out.png] [--words w1,w2]
"""

import argparse
import csv
from collections import defaultdict


def load(path):
    series = defaultdict(list)
    order = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            t = row["timestep"]
            if t not in order:
                order.append(t)
            series[row["word"]].append((t, float(row["distance"])))
    return order, series


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("-o", "--out", default="series.png")
    ap.add_argument("--words", help="comma-separated subset to plot")
    args = ap.parse_args()

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    order, series = load(args.csv)
    pos = {t: i for i, t in enumerate(order)}
    words = args.words.split(",") if args.words else sorted(series)
    fig, ax = plt.subplots(figsize=(8, 5))
    for w in words:
        pts = sorted(series.get(w, []), key=lambda p: pos[p[0]])
        if pts:
            ax.plot([pos[t] for t, _ in pts], [d for _, d in pts], marker="o", label=w)
    ax.set_xticks(range(len(order)))
    ax.set_xticklabels(order)
    ax.set_xlabel("timestep")
    ax.set_ylabel("distance between groups")
    ax.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
