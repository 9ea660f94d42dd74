#!/usr/bin/env python3
"""Render publication-style figures from harness CSV datasets.

Usage:
    render.py <dataset-dir> --kind {spectrum-sweep|steady-map|transient} --out fig.png

A dataset is a directory produced by the `srlaser` CLI: a set of CSV files
plus a run_manifest.json. This script only reads those files; it contains no
simulation logic.
"""

import argparse
import json
import math
import os
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LogNorm  # noqa: E402


class DatasetError(RuntimeError):
    """Missing file, empty table, or a schema mismatch."""


# ---------------------------------------------------------------------------
# Dataset loading
# ---------------------------------------------------------------------------

def read_table(path, required=()):
    """Read a harness CSV: '#' metadata lines, a header row, float cells.

    Returns (columns, rows) where columns maps name -> index. Raises
    DatasetError naming any missing required column.
    """
    if not os.path.exists(path):
        raise DatasetError(f"dataset file not found: {path}")
    header, rows = None, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = [tok.strip() for tok in line.split(",")]
                continue
            row = []
            for tok in line.split(","):
                try:
                    row.append(float(tok))
                except ValueError:
                    row.append(math.nan)
            rows.append(row)
    if header is None:
        raise DatasetError(f"no header row in {path}")
    missing = [c for c in required if c not in header]
    if missing:
        raise DatasetError(
            f"{os.path.basename(path)} is missing column(s) "
            f"{', '.join(missing)}; found {', '.join(header)}")
    if not rows:
        raise DatasetError(f"{os.path.basename(path)} has no data rows")
    cols = {name: i for i, name in enumerate(header)}
    return cols, np.array(rows)


def read_manifest(dataset):
    path = os.path.join(dataset, "run_manifest.json")
    if not os.path.exists(path):
        raise DatasetError(f"no run_manifest.json in {dataset}")
    with open(path) as fh:
        return json.load(fh)


def _pivot(x, y, z):
    """Scattered (x, y, z) triples -> sorted unique axes + 2-D grid (NaN holes)."""
    xs, ys = np.unique(x), np.unique(y)
    grid = np.full((len(ys), len(xs)), np.nan)
    ix = np.searchsorted(xs, x)
    iy = np.searchsorted(ys, y)
    grid[iy, ix] = z
    return xs, ys, grid


# ---------------------------------------------------------------------------
# Figure kinds
# ---------------------------------------------------------------------------

def render_spectrum_sweep(dataset, ax=None):
    """Heatmap of S(omega) vs drive fraction, dashed mean-field overlay."""
    cols, data = read_table(os.path.join(dataset, "spectrum_sweep.csv"),
                            required=("p_d", "omega", "S"))
    if ax is None:
        _, ax = plt.subplots(figsize=(6.0, 4.2))
    p_d, omega, S = (data[:, cols[c]] for c in ("p_d", "omega", "S"))
    xs, ys, grid = _pivot(p_d, omega, S)
    floor = max(np.nanmax(grid) * 1e-8, 1e-300)
    mesh = ax.pcolormesh(xs, ys, np.clip(grid, floor, None),
                         norm=LogNorm(), cmap="inferno", shading="nearest")
    ax.figure.colorbar(mesh, ax=ax, label=r"$S(\omega)$")

    mf_cols, mf = read_table(os.path.join(dataset, "meanfield_frequency.csv"),
                             required=("p_d", "omega_plus", "omega_minus",
                                       "exists"))
    exists = mf[:, mf_cols["exists"]] > 0
    for branch in ("omega_plus", "omega_minus"):
        ax.plot(mf[exists, mf_cols["p_d"]], mf[exists, mf_cols[branch]],
                "--", color="w", lw=1.4, label="mean field"
                if branch == "omega_plus" else None)
    ax.set_xlabel(r"driven fraction $p_d$")
    ax.set_ylabel(r"$\omega / V$")
    ax.set_title("Emission spectrum vs driven fraction")
    ax.legend(loc="upper left", framealpha=0.4)
    return ax.figure


def render_steady_map(dataset, ax=None):
    """Power heatmap over (gamma_plus, p_d) with threshold line + shift mask."""
    cols, data = read_table(os.path.join(dataset, "steady_map.csv"),
                            required=("gamma_plus", "p_d", "power", "shifted"))
    if ax is None:
        _, ax = plt.subplots(figsize=(6.0, 4.2))
    gp, p_d = data[:, cols["gamma_plus"]], data[:, cols["p_d"]]
    xs, ys, power = _pivot(gp, p_d, data[:, cols["power"]])
    mesh = ax.pcolormesh(xs, ys, power, cmap="viridis", shading="nearest")
    ax.figure.colorbar(mesh, ax=ax, label=r"output power $\kappa\langle a^\dagger a\rangle$")

    # hatch the cells where the emission peak is displaced from omega = 0
    _, _, shifted = _pivot(gp, p_d, data[:, cols["shifted"]])
    masked = np.ma.masked_where(~(shifted > 0), np.zeros_like(shifted))
    ax.pcolor(xs, ys, masked, hatch="///", shading="nearest",
              facecolor="none", edgecolor="w", lw=0.0)

    thr_cols, thr = read_table(os.path.join(dataset, "threshold_curve.csv"),
                               required=("gamma_plus", "p_c"))
    ax.plot(thr[:, thr_cols["gamma_plus"]], thr[:, thr_cols["p_c"]],
            color="w", lw=2.0, label="lasing threshold")
    ax.set_xlabel(r"repumping rate $\gamma_+ / V$")
    ax.set_ylabel(r"driven fraction $p_d$")
    ax.set_ylim(ys[0], ys[-1])
    ax.set_title("Steady-state power map")
    ax.legend(loc="lower right", framealpha=0.4)
    return ax.figure


def render_transient(dataset, ax=None):
    """Peak-position track after switch-on, with the mean-field decay curve
    and (when present) the spectrogram underneath."""
    cols, track = read_table(os.path.join(dataset, "peak_track.csv"),
                             required=("t", "delta_fit"))
    if ax is None:
        _, ax = plt.subplots(figsize=(6.0, 4.2))

    spath = os.path.join(dataset, "spectrogram.csv")
    if os.path.exists(spath):
        scols, spec = read_table(spath, required=("t", "omega", "S_normalized"))
        xs, ys, grid = _pivot(spec[:, scols["t"]], spec[:, scols["omega"]],
                              spec[:, scols["S_normalized"]])
        mesh = ax.pcolormesh(xs, ys, np.clip(grid, 1e-8, None),
                             norm=LogNorm(), cmap="inferno",
                             shading="nearest")
        ax.figure.colorbar(mesh, ax=ax, label=r"$S(\omega,t)$ (normalized)")

    ax.plot(track[:, cols["t"]], track[:, cols["delta_fit"]],
            "o-", color="C0", ms=4, label="fitted peak")
    mf_cols, mf = read_table(os.path.join(dataset, "meanfield_track.csv"),
                             required=("t", "omega_mf"))
    ax.plot(mf[:, mf_cols["t"]], mf[:, mf_cols["omega_mf"]],
            "--", color="w", lw=1.6, label="mean field")
    ax.set_xlabel(r"$t \cdot V$")
    ax.set_ylabel(r"peak position $/ V$")
    ax.set_title("Frequency-shift decay after switch-on")
    ax.legend(loc="upper right", framealpha=0.4)
    return ax.figure


RENDERERS = {
    "spectrum-sweep": render_spectrum_sweep,
    "steady-map": render_steady_map,
    "transient": render_transient,
}


def render(dataset, kind, out):
    """Render `kind` from `dataset` into the image file `out`."""
    if kind not in RENDERERS:
        raise DatasetError(f"unknown figure kind: {kind}")
    read_manifest(dataset)
    fig = RENDERERS[kind](dataset)
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dataset", help="directory produced by the srlaser CLI")
    parser.add_argument("--kind", required=True, choices=sorted(RENDERERS))
    parser.add_argument("--out", required=True, help="output image (png/pdf)")
    args = parser.parse_args(argv)
    try:
        render(args.dataset, args.kind, args.out)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
