"""Render publication-style figures from stabsim output directories.

Five figure families are supported:

  parity        single-round characterization: correlated/anti-correlated
                populations and the input parity versus the preparation
                phase, plus the two fidelity estimators (characterization.csv)
  series        outcome probability versus measurement round, one curve per
                input directory, e.g. open loop against closed loop (series.csv)
  bell          Bell-stabilization outcome series with fidelity markers at
                the sampled cycles (series.csv + fidelities.csv)
  correlations  consecutive-outcome correlation per feedback category
                (correlations.csv)
  conditional   per-round conditional feedback probabilities (conditional.csv)

Rendering is deterministic: rerunning on unchanged inputs reproduces the
output file byte for byte (SVG metadata dates are suppressed and hash salts
pinned).
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "stabsim-figures"

import matplotlib.pyplot as plt
import numpy as np

FIGURES = ("parity", "series", "bell", "correlations", "conditional")

_SCHEMAS = {
    "series.csv": ["index", "cycle", "basis", "p1", "p0", "p_correct", "stderr", "shots"],
    "fidelities.csv": ["cycle", "fidelity", "zz", "xx", "yy", "stderr", "shots"],
    "characterization.csv": [
        "theta", "p_in_plus", "p_in_minus", "p_m1", "p_m0",
        "p_corr_plus1", "p_corr_minus0", "p_anti_plus0", "p_anti_minus1",
        "p_out_1_plus", "p_out_0_minus", "f_nd", "f_qsp", "shots"],
    "correlations.csv": ["basis", "category", "n_pairs", "p_equal", "stderr"],
    "conditional.csv": ["round", "p_fb_given_fb", "n_fb", "err_fb",
                        "p_fb_given_nofb", "n_nofb", "err_nofb", "sparse"],
}


class SchemaError(Exception):
    pass


def read_table(in_dir: Path, name: str) -> list[dict]:
    """Load a CSV written by the simulator, checking every expected column."""
    path = Path(in_dir) / name
    if not path.is_file():
        raise SchemaError(f"{path}: input file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in _SCHEMAS[name]:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        return list(reader)


def _floats(rows, col):
    return np.array([float(r[col]) for r in rows])


def _save(fig, out_path: Path, fmt: str) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if fmt == "svg" else None
    fig.savefig(out_path, format=fmt, metadata=metadata)
    plt.close(fig)


def render_parity(in_dirs, out_path, fmt="svg", error_bars=True):
    rows = read_table(in_dirs[0], "characterization.csv")
    theta = _floats(rows, "theta")
    shots = _floats(rows, "shots")

    def err(p):
        return np.sqrt(np.clip(p * (1 - p), 0, None) / shots) if error_bars else None

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    for col, label, style in (
            ("p_corr_plus1", "even & dark", "o-"),
            ("p_corr_minus0", "odd & bright", "s-"),
            ("p_anti_plus0", "even & bright", "^--"),
            ("p_anti_minus1", "odd & dark", "v--")):
        p = _floats(rows, col)
        ax1.errorbar(theta, p, yerr=err(p), fmt=style, ms=4, capsize=2, label=label)
    p_in = _floats(rows, "p_in_plus")
    ax1.errorbar(theta, p_in, yerr=err(p_in), fmt="*", ms=8, color="purple",
                 label="input even-parity population")
    ax1.set_ylabel("population")
    ax1.legend(fontsize=7)

    for col, label in (("f_nd", "readout agreement"), ("f_qsp", "conditional subspace")):
        f = _floats(rows, col)
        ax2.plot(theta, f, "o-", ms=4, label=label)
    ax2.set_xlabel("preparation phase (rad)")
    ax2.set_ylabel("fidelity")
    ax2.set_ylim(0, 1.05)
    ax2.legend(fontsize=8)
    _save(fig, out_path, fmt)


def render_series(in_dirs, out_path, fmt="svg", error_bars=True, reference_lines=True):
    fig, ax = plt.subplots(figsize=(6, 4))
    for in_dir in in_dirs:
        rows = read_table(in_dir, "series.csv")
        x = _floats(rows, "index")
        p = _floats(rows, "p_correct")
        yerr = _floats(rows, "stderr") if error_bars else None
        ax.errorbar(x, p, yerr=yerr, fmt="o-", ms=3, capsize=2,
                    label=Path(in_dir).name)
    if reference_lines:
        ax.axhline(0.5, color="grey", lw=0.8, ls=":")
    ax.set_xlabel("measurement round")
    ax.set_ylabel("correct-outcome probability")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    _save(fig, out_path, fmt)


def render_bell(in_dirs, out_path, fmt="svg", error_bars=True):
    in_dir = in_dirs[0]
    rows = read_table(in_dir, "series.csv")
    fig, ax = plt.subplots(figsize=(7, 4))
    for basis, marker, color in (("Z", "D", "tab:red"), ("X", "s", "tab:purple")):
        sel = [r for r in rows if r["basis"] == basis]
        x = _floats(sel, "index")
        p = _floats(sel, "p_correct")
        yerr = _floats(sel, "stderr") if error_bars else None
        ax.errorbar(x, p, yerr=yerr, fmt=marker, ms=3, color=color, capsize=2,
                    label=f"{basis} outcome")
    fid = read_table(in_dir, "fidelities.csv")
    if fid:
        cycles = _floats(fid, "cycle")
        f = _floats(fid, "fidelity")
        ferr = _floats(fid, "stderr") if error_bars else None
        # Fidelity samples sit at the end of their cycle (two rounds each).
        ax.errorbar(2 * cycles, f, yerr=ferr, fmt="*", ms=11, color="tab:green",
                    capsize=2, label="Bell fidelity")
    ax.set_xlabel("measurement round")
    ax.set_ylabel("probability / fidelity")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    _save(fig, out_path, fmt)


def render_correlations(in_dirs, out_path, fmt="svg", error_bars=True):
    fig, ax = plt.subplots(figsize=(6, 4))
    omitted = []
    for in_dir in in_dirs:
        rows = read_table(in_dir, "correlations.csv")
        kept = [r for r in rows if int(r["n_pairs"]) > 0]
        omitted += [r["category"] for r in rows if int(r["n_pairs"]) == 0]
        x = np.arange(len(kept))
        p = _floats(kept, "p_equal")
        yerr = _floats(kept, "stderr") if error_bars else None
        ax.errorbar(x, p, yerr=yerr, fmt="o", ms=6, capsize=3,
                    label=Path(in_dir).name)
        ax.set_xticks(np.arange(len(kept)))
        ax.set_xticklabels([f"{r['basis']}: {r['category']}" for r in kept],
                           rotation=20, fontsize=8)
    ax.axhline(1.0, color="grey", lw=0.8, ls=":")
    ax.axhline(0.5, color="grey", lw=0.8, ls=":")
    ax.set_ylabel("correlation of consecutive outcomes")
    ax.set_ylim(-0.05, 1.1)
    handles, labels = ax.get_legend_handles_labels()
    if omitted:
        labels[-1] += f" (omitted empty: {', '.join(sorted(set(omitted)))})"
    ax.legend(handles, labels, fontsize=8)
    _save(fig, out_path, fmt)


def render_conditional(in_dirs, out_path, fmt="svg", error_bars=True):
    rows = read_table(in_dirs[0], "conditional.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    x = _floats(rows, "round")
    for p_col, e_col, label, style in (
            ("p_fb_given_fb", "err_fb", "P(feedback | feedback before)", "o"),
            ("p_fb_given_nofb", "err_nofb", "P(feedback | none before)", "s")):
        p = _floats(rows, p_col)
        yerr = _floats(rows, e_col) if error_bars else None
        keep = ~np.isnan(p)
        ax.errorbar(x[keep], p[keep], yerr=None if yerr is None else yerr[keep],
                    fmt=style, ms=4, capsize=2, label=label)
    sparse = np.array([r["sparse"] == "1" for r in rows])
    if sparse.any():
        ax.plot(x[sparse], np.zeros(sparse.sum()) - 0.02, "|", color="grey",
                label="sparse conditioning (<20 events)")
    ax.set_xlabel("measurement round")
    ax.set_ylabel("conditional feedback probability")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8)
    _save(fig, out_path, fmt)


_RENDERERS = {
    "parity": render_parity,
    "series": render_series,
    "bell": render_bell,
    "correlations": render_correlations,
    "conditional": render_conditional,
}


def render(figure: str, in_dirs, out_path, fmt: str = "svg",
           error_bars: bool = True) -> Path:
    """Render one figure family from the given run directories."""
    if figure not in _RENDERERS:
        raise ValueError(f"unknown figure {figure!r}; expected one of {FIGURES}")
    if not in_dirs:
        raise ValueError("at least one input directory is required")
    _RENDERERS[figure](list(in_dirs), Path(out_path), fmt=fmt, error_bars=error_bars)
    return Path(out_path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stabsim-figures")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render a figure from run outputs")
    p.add_argument("--figure", required=True, choices=FIGURES)
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   metavar="DIR", help="run output directory (repeatable)")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--format", default="svg", choices=("svg", "png"))
    p.add_argument("--no-error-bars", action="store_true")
    args = parser.parse_args(argv)

    try:
        path = render(args.figure, args.inputs, args.out, fmt=args.format,
                      error_bars=not args.no_error_bars)
    except (SchemaError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
