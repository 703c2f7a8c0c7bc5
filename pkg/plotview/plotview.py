#!/usr/bin/env python3
"""Render figures from simulation result CSVs.

Reads only the documented result.csv contract of the simulator (columns
t, y_*, z_*, zd*_*, h_*, e_*, u_*, bnd_*, margin_*) and produces one of
three figure kinds:

* ``error-vs-funnel``: error traces against the +-boundary curves (the
  boundary columns are drawn dashed/dotted, mirrored about zero).
* ``overlay``: direct column overlays, e.g. a measured signal y against the
  cascade output z of several runs (multiple --csv inputs are overlaid and
  labelled by file stem).
* ``input``: the feedback input channels u_*.

SVG output is byte-stable across runs: the id hash salt is pinned and no
date metadata is written.

Usage:
    plotview.py --csv F [F ...] --kind K --out IMG [--cols C ...]
                [--boundary B ...] [--title T]
"""

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "plotview"

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("error-vs-funnel", "overlay", "input")


class PlotviewError(ValueError):
    pass


def load_table(path):
    """Read a result CSV into {column: ndarray}; rejects empty files."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise PlotviewError(f"{path}: empty CSV") from None
            rows = [[float(v) for v in row] for row in reader if row]
    except OSError as exc:
        raise PlotviewError(f"{path}: cannot read ({exc.strerror})") from None
    if not rows:
        raise PlotviewError(f"{path}: no data rows")
    data = np.array(rows)
    if data.shape[1] != len(header):
        raise PlotviewError(f"{path}: ragged rows")
    return {name: data[:, i] for i, name in enumerate(header)}


def require_columns(table, names, path):
    for name in names:
        if name not in table:
            raise PlotviewError(f"{path}: missing column {name!r}")


def columns_with_prefix(table, prefix):
    return sorted((c for c in table if c.startswith(prefix)),
                  key=lambda c: (len(c), c))


def render(request) -> None:
    """Draw the requested figure and write it to the output path."""
    kind = request["kind"]
    paths = [Path(p) for p in request["csv"]]
    out = Path(request["out"])
    tables = [load_table(p) for p in paths]
    for table, path in zip(tables, paths):
        require_columns(table, ["t"], path)

    fig, ax = plt.subplots(figsize=(7.0, 4.2))

    if kind == "error-vs-funnel":
        table, path = tables[0], paths[0]
        cols = request.get("cols") or columns_with_prefix(table, "e_")
        if not cols:
            raise PlotviewError(f"{path}: no error columns found; pass --cols")
        require_columns(table, cols, path)
        boundaries = request.get("boundary")
        if not boundaries:
            boundaries = ["bnd_fc"] if "bnd_fc" in table else ["bnd_phi"]
        require_columns(table, boundaries, path)
        t = table["t"]
        for col in cols:
            ax.plot(t, table[col], label=col)
        styles = ["--", ":", "-."]
        for i, b in enumerate(boundaries):
            style = styles[i % len(styles)]
            finite = np.isfinite(table[b])
            ax.plot(t[finite], table[b][finite], style, color="k", label=b)
            ax.plot(t[finite], -table[b][finite], style, color="k")
        ax.set_ylabel("error")

    elif kind == "overlay":
        default_single = ["y_1", "z_1"]
        for idx, (table, path) in enumerate(zip(tables, paths)):
            if request.get("cols"):
                cols = request["cols"]
            elif len(tables) == 1:
                cols = default_single
            else:
                # multi-run overlay: the measured signal once, each run's output
                cols = ["y_1", "z_1"] if idx == 0 else ["z_1"]
            require_columns(table, cols, path)
            prefix = f"{path.stem}:" if len(tables) > 1 else ""
            for col in cols:
                ax.plot(table["t"], table[col], label=f"{prefix}{col}")
        ax.set_ylabel("signal")

    elif kind == "input":
        table, path = tables[0], paths[0]
        cols = request.get("cols") or columns_with_prefix(table, "u_")
        if not cols:
            raise PlotviewError(f"{path}: no input columns found; pass --cols")
        require_columns(table, cols, path)
        for col in cols:
            ax.plot(table["t"], table[col], label=col)
        ax.set_ylabel("input")

    else:
        raise PlotviewError(f"unknown figure kind {kind!r}")

    ax.set_xlabel("t")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")
    if request.get("title"):
        ax.set_title(request["title"])
    fig.tight_layout()
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Date": None} if out.suffix == ".svg" else None)
    plt.close(fig)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plotview", description="render figures from result CSVs")
    parser.add_argument("--csv", nargs="+", required=True)
    parser.add_argument("--kind", choices=KINDS, required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--cols", nargs="*", default=None)
    parser.add_argument("--boundary", nargs="*", default=None)
    parser.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    request = {"csv": args.csv, "kind": args.kind, "out": args.out,
               "cols": args.cols, "boundary": args.boundary, "title": args.title}
    try:
        render(request)
    except PlotviewError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
