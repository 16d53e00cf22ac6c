#!/usr/bin/env python3
"""Render figure analogs from the replay report CSVs.

Kinds:
  depth_sweep - hit rate vs immediate-FoV depth   (reads depth_sweep.csv)
  size_sweep  - hit rate vs cache capacity        (reads sweep.csv)
  user_bars   - per-user hit-rate bars            (reads users.csv)
  delay_bars  - per-user mean-delay bars          (reads users.csv)

Output is deterministic: fixed canvas, fixed series order
(standard, extended, prefetch, irm), no timestamps.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

FIGSIZE = (7.0, 4.5)
DPI = 150

STRATEGY_ORDER = ["standard", "extended", "prefetch", "irm"]
STRATEGY_MARKER = {"standard": "o", "extended": "s", "prefetch": "^", "irm": "D"}
STRATEGY_COLOR = {
    "standard": "tab:blue",
    "extended": "tab:green",
    "prefetch": "tab:red",
    "irm": "tab:purple",
}

SCHEMAS = {
    "depth_sweep": ["S", "capacity", "hit_rate"],
    "size_sweep": ["capacity", "strategy", "requests", "hits", "hit_rate"],
    "user_bars": ["user_id", "strategy", "requests", "hits", "hit_rate", "mean_delay_ms"],
    "delay_bars": ["user_id", "strategy", "requests", "hits", "hit_rate", "mean_delay_ms"],
}


class RenderError(Exception):
    pass


def read_rows(paths: list[str], columns: list[str]) -> list[dict[str, str]]:
    rows: list[dict[str, str]] = []
    for path in paths:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise RenderError(f"{path}: empty file")
            missing = [c for c in columns if c not in header]
            if missing:
                raise RenderError(f"{path}: missing column {missing[0]!r}")
            index = {c: header.index(c) for c in columns}
            for line in reader:
                if line:
                    rows.append({c: line[index[c]] for c in columns})
    if not rows:
        raise RenderError(f"no data rows in {', '.join(paths)}")
    return rows


def ordered_strategies(rows: list[dict[str, str]]) -> list[str]:
    present = {r["strategy"] for r in rows}
    known = [s for s in STRATEGY_ORDER if s in present]
    return known + sorted(present - set(STRATEGY_ORDER))


def render_depth_sweep(rows, ax) -> None:
    capacities = sorted({int(r["capacity"]) for r in rows})
    for capacity in capacities:
        series = [(float(r["S"]), float(r["hit_rate"])) for r in rows if int(r["capacity"]) == capacity]
        series.sort()
        ax.plot(
            [s for s, _ in series],
            [h for _, h in series],
            marker="o",
            color="tab:blue" if len(capacities) == 1 else None,
            label=f"capacity {capacity} objects",
        )
    ax.set_xlabel("immediate FoV depth (world units)")
    ax.set_ylabel("demand hit rate (fraction)")
    ax.set_ylim(bottom=0.0)
    ax.legend()


def render_size_sweep(rows, ax) -> None:
    for strategy in ordered_strategies(rows):
        series = [
            (int(r["capacity"]), float(r["hit_rate"])) for r in rows if r["strategy"] == strategy
        ]
        series.sort()
        ax.plot(
            [c for c, _ in series],
            [h for _, h in series],
            marker=STRATEGY_MARKER.get(strategy, "x"),
            color=STRATEGY_COLOR.get(strategy),
            label=strategy,
        )
    ax.set_xlabel("cache capacity (objects)")
    ax.set_ylabel("demand hit rate (fraction)")
    ax.set_ylim(bottom=0.0)
    ax.legend()


def _user_bars(rows, ax, value_column: str, ylabel: str) -> None:
    strategies = ordered_strategies(rows)
    users = sorted({int(r["user_id"]) for r in rows})
    values = {
        (int(r["user_id"]), r["strategy"]): float(r[value_column]) for r in rows
    }
    width = 0.8 / len(strategies)
    for i, strategy in enumerate(strategies):
        offsets = [u + (i - (len(strategies) - 1) / 2.0) * width for u in range(len(users))]
        heights = [values.get((u, strategy), 0.0) for u in users]
        ax.bar(
            offsets,
            heights,
            width=width,
            color=STRATEGY_COLOR.get(strategy),
            label=strategy,
        )
    ax.set_xticks(range(len(users)))
    ax.set_xticklabels([f"user {u}" for u in users])
    ax.set_xlabel("user")
    ax.set_ylabel(ylabel)
    ax.legend()


def render_user_bars(rows, ax) -> None:
    _user_bars(rows, ax, "hit_rate", "demand hit rate (fraction)")


def render_delay_bars(rows, ax) -> None:
    _user_bars(rows, ax, "mean_delay_ms", "mean network delay (ms)")


RENDERERS = {
    "depth_sweep": render_depth_sweep,
    "size_sweep": render_size_sweep,
    "user_bars": render_user_bars,
    "delay_bars": render_delay_bars,
}


def render(kind: str, inputs: list[str], out: str) -> None:
    rows = read_rows(inputs, SCHEMAS[kind])
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    try:
        RENDERERS[kind](rows, ax)
        fig.tight_layout()
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out)
    finally:
        plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", required=True, choices=sorted(RENDERERS))
    parser.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="CSV")
    parser.add_argument("--out", required=True, metavar="PNG")
    args = parser.parse_args(argv)
    try:
        render(args.kind, args.inputs, args.out)
    except (RenderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
