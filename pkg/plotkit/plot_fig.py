#!/usr/bin/env python3
"""Render an ncfilter scenario CSV into a publication-style figure.

Usage:
    plot_fig.py <csv> --panel A --out fig.png

One panel per CSV, three curves per panel: the input-field intensity
(solid), the excitation probability from the master equation (dashed),
and the probability of at least one detection (dotted).  For a mixture
scenario the CSV flux column already carries the mixture weights, so
each pulse appears at half height, as in the source figures.

Rendering is read-only and deterministic: identical CSV and options
give byte-identical image files (no timestamps are embedded).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

REQUIRED = ("t", "flux", "P_exc", "P_atleast_one_count")

STYLES = {
    "flux": dict(linestyle="-", color="tab:blue", label="field intensity"),
    "P_exc": dict(linestyle="--", color="tab:red", label="excitation probability"),
    "P_atleast_one_count": dict(
        linestyle=":", color="black", label="P(at least one count)"
    ),
}


class TableError(ValueError):
    pass


def load_table(csv_path) -> dict:
    """Read the scenario table; complain precisely about missing pieces."""
    path = Path(csv_path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TableError(f"{path}: file is empty")
    header = rows[0]
    missing = [name for name in REQUIRED if name not in header]
    if missing:
        raise TableError(f"{path}: missing column(s) {', '.join(missing)}")
    if len(rows) < 2:
        raise TableError(f"{path}: no data rows")
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    return {name: data[:, header.index(name)] for name in REQUIRED}


def render(table: dict, panel: str = "A"):
    """Three-curve panel; returns the matplotlib figure."""
    fig, ax = plt.subplots(figsize=(4.2, 3.2), dpi=150)
    t = table["t"]
    for column in ("flux", "P_exc", "P_atleast_one_count"):
        ax.plot(t, table[column], **STYLES[column])
    ax.set_xlabel(r"$t$  [$1/\kappa$]")
    ax.set_xlim(t[0], t[-1])
    ax.set_ylim(bottom=0.0)
    ax.legend(frameon=False, fontsize=8)
    ax.text(
        0.02, 0.98, f"({panel})", transform=ax.transAxes,
        ha="left", va="top", fontsize=11,
    )
    fig.tight_layout()
    return fig


def save_figure(csv_path, out_path, panel: str = "A") -> Path:
    fig = render(load_table(csv_path), panel=panel)
    out = Path(out_path)
    # strip the writer tag so repeated renders are byte-identical
    fig.savefig(out, metadata={"Software": None})
    plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", help="scenario table written by 'ncfilter run'")
    parser.add_argument("--panel", default="A", help="panel label (A, B, ...)")
    parser.add_argument("--out", default="fig.png", help="output image path")
    args = parser.parse_args(argv)
    try:
        out = save_figure(args.csv, args.out, panel=args.panel)
    except (TableError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
