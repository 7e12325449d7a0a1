"""Batch front end: validate experiment configs, run them, write outputs.

Configs are JSON documents.  Outputs are CSV tables plus a ``manifest.json``
echoing the resolved config, the seed, and summary results.  Output bytes are
a pure function of (config contents, seed): aggregation is ordered by
trajectory index, floats are formatted with a fixed rule, and manifests carry
no timestamps, so reruns and different worker counts produce identical files.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as exp
from .gates import BELL_EIGENVALUES
from .noise import NoiseParams

SCHEMA_VERSION = "1"

EXPERIMENTS = ("single_round", "stabilize_subspace", "stabilize_bell", "correlations")

_NOISE_FIELDS = {
    "gamma_dep": (0.0, 1.0),
    "gamma_leak": (0.0, 1.0),
    "readout_drift": (0.0, None),
    "readout_bias0": (0.0, 1.0),
    "det_error_be": (0.0, 1.0),
    "photon_mean_bright": (0.0, None),
    "photon_mean_dark": (0.0, None),
    "photon_threshold": (0, None),
}
_NOISE_ENUMS = {
    "depolarize_mode": ("full", "be_pair"),
    "leak_detection": ("dark", "bright"),
}

SERIES_COLUMNS = ("index", "cycle", "basis", "p1", "p0", "p_correct", "stderr", "shots")
FIDELITY_COLUMNS = ("cycle", "fidelity", "zz", "xx", "yy", "stderr", "shots")
CHARACTERIZATION_COLUMNS = (
    "theta", "p_in_plus", "p_in_minus", "p_m1", "p_m0",
    "p_corr_plus1", "p_corr_minus0", "p_anti_plus0", "p_anti_minus1",
    "p_out_1_plus", "p_out_0_minus", "f_nd", "f_qsp", "shots")
CORRELATION_COLUMNS = ("basis", "category", "n_pairs", "p_equal", "stderr")
CONDITIONAL_COLUMNS = ("round", "p_fb_given_fb", "n_fb", "err_fb",
                       "p_fb_given_nofb", "n_nofb", "err_nofb", "sparse")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "nan" if math.isnan(v) else format(v, ".12g")
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Config loading and validation


def load_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e}") from e
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {p} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


class ConfigError(Exception):
    pass


def validate_config(cfg: dict) -> list[str]:
    """Every violation in the config, not just the first."""
    issues = []
    exp_kind = cfg.get("experiment")
    if exp_kind not in EXPERIMENTS:
        issues.append(f"experiment: must be one of {EXPERIMENTS}, got {exp_kind!r}")
    seed = cfg.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        issues.append(f"seed: must be an integer in [0, 2^64), got {seed!r}")
    shots = cfg.get("shots")
    if not isinstance(shots, int) or isinstance(shots, bool) or shots < 1:
        issues.append(f"shots: must be an integer >= 1, got {shots!r}")
    workers = cfg.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        issues.append(f"workers: must be an integer >= 1, got {workers!r}")
    if "output_dir" in cfg and not isinstance(cfg["output_dir"], str):
        issues.append("output_dir: must be a string path")

    noise = cfg.get("noise", {})
    if not isinstance(noise, dict):
        issues.append("noise: must be an object")
        noise = {}
    for key, val in noise.items():
        if key in _NOISE_FIELDS:
            lo, hi = _NOISE_FIELDS[key]
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                issues.append(f"noise.{key}: must be a number, got {val!r}")
            elif val < lo or (hi is not None and val > hi):
                rng = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
                issues.append(f"noise.{key}: value {val} outside {rng}")
        elif key in _NOISE_ENUMS:
            if val not in _NOISE_ENUMS[key]:
                issues.append(f"noise.{key}: must be one of {_NOISE_ENUMS[key]}, got {val!r}")
        elif key == "use_photon_counts":
            if not isinstance(val, bool):
                issues.append(f"noise.{key}: must be a boolean")
        else:
            issues.append(f"noise.{key}: unknown field")

    protocol = cfg.get("protocol", {})
    if not isinstance(protocol, dict):
        issues.append("protocol: must be an object")
        protocol = {}
    if exp_kind in EXPERIMENTS:
        issues.extend(_validate_protocol(exp_kind, protocol))
    return issues


def _validate_protocol(kind: str, proto: dict) -> list[str]:
    issues = []

    def check_pm1(field):
        v = proto.get(field)
        if v not in (1, -1):
            issues.append(f"protocol.{field}: must be +1 or -1, got {v!r}")

    def check_posint(field, minimum=1):
        v = proto.get(field)
        if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
            issues.append(f"protocol.{field}: must be an integer >= {minimum}, got {v!r}")

    def check_unit(field):
        v = proto.get(field)
        if v is not None and (not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0):
            issues.append(f"protocol.{field}: must be in [0, 1], got {v!r}")

    mode = proto.get("mode", "subspace") if kind == "correlations" else None
    if kind == "correlations" and mode not in ("subspace", "bell"):
        issues.append(f"protocol.mode: must be 'subspace' or 'bell', got {mode!r}")
        mode = "subspace"
    base = {"correlations": mode, "stabilize_subspace": "subspace",
            "stabilize_bell": "bell", "single_round": "single"}[kind]

    if base == "single":
        grid = proto.get("theta_grid")
        if isinstance(grid, dict):
            if not all(k in grid for k in ("start", "stop", "num")) or \
                    not isinstance(grid.get("num"), int) or grid.get("num", 0) < 1:
                issues.append("protocol.theta_grid: range form needs start, stop and integer num >= 1")
        elif isinstance(grid, list):
            if not grid or not all(isinstance(t, (int, float)) for t in grid):
                issues.append("protocol.theta_grid: must be a non-empty list of numbers")
        else:
            issues.append(f"protocol.theta_grid: missing or invalid, got {grid!r}")
    elif base == "subspace":
        if proto.get("basis") not in ("Z", "X"):
            issues.append(f"protocol.basis: must be 'Z' or 'X', got {proto.get('basis')!r}")
        if not isinstance(proto.get("feedback"), bool):
            issues.append("protocol.feedback: must be a boolean")
        check_posint("rounds")
        check_pm1("target")
    elif base == "bell":
        if proto.get("target") not in BELL_EIGENVALUES:
            issues.append(f"protocol.target: must be one of {sorted(BELL_EIGENVALUES)}, "
                          f"got {proto.get('target')!r} (required for Bell stabilization)")
        check_posint("cycles")
        sp = proto.get("sample_points", [])
        if not isinstance(sp, list) or not all(isinstance(s, int) for s in sp):
            issues.append("protocol.sample_points: must be a list of integers")
        elif isinstance(proto.get("cycles"), int):
            for s in sp:
                if not 1 <= s <= proto["cycles"]:
                    issues.append(f"protocol.sample_points: {s} outside 1..{proto['cycles']}")
    if base in ("subspace", "bell"):
        check_unit("correction_fidelity")
        check_unit("correction_kick")
    if kind == "correlations" and proto.get("analysis_basis", "Z") not in ("Z", "X"):
        issues.append("protocol.analysis_basis: must be 'Z' or 'X'")
    return issues


# ---------------------------------------------------------------------------
# Execution


def run_config(path, seed_override: int | None = None,
               workers_override: int | None = None,
               out_override: str | None = None) -> dict:
    """Execute a config file; returns the manifest. Raises ConfigError on a
    bad config and RuntimeError on execution failures."""
    cfg = load_config(path)
    issues = validate_config(cfg)
    if issues:
        raise ConfigError("; ".join(issues))

    seed = seed_override if seed_override is not None else cfg["seed"]
    workers = workers_override if workers_override is not None else cfg.get("workers", 1)
    out_dir = Path(out_override if out_override is not None
                   else cfg.get("output_dir", "."))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as e:
        raise RuntimeError(f"output directory {out_dir} is not writable: {e}") from e

    noise = NoiseParams(**cfg.get("noise", {}))
    proto = cfg.get("protocol", {})
    kind = cfg["experiment"]

    # Execution details (worker count, output location) are excluded so the
    # written bytes depend only on the scientific config and the seed.
    resolved = {k: v for k, v in cfg.items() if k not in ("workers", "output_dir")}
    resolved["seed"] = seed
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "experiment": kind,
        "seed": seed,
        "config": resolved,
        "outputs": {},
        "results": {},
    }

    if kind == "single_round":
        _run_single_round(manifest, proto, noise, seed, cfg["shots"], workers, out_dir)
    elif kind == "stabilize_subspace":
        _run_subspace(manifest, proto, noise, seed, cfg["shots"], workers, out_dir)
    elif kind == "stabilize_bell":
        _run_bell(manifest, proto, noise, seed, cfg["shots"], workers, out_dir)
    else:
        _run_correlations(manifest, proto, noise, seed, cfg["shots"], workers, out_dir)

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                             encoding="utf-8")
    return manifest


def _theta_list(proto) -> list[float]:
    grid = proto["theta_grid"]
    if isinstance(grid, dict):
        return [float(t) for t in np.linspace(grid["start"], grid["stop"], grid["num"])]
    return [float(t) for t in grid]


def _subspace_kwargs(proto) -> dict:
    return {
        "target": proto["target"],
        "input_state": proto.get("input_state"),
        "correction_fidelity": proto.get("correction_fidelity", 1.0),
        "correction_kick": proto.get("correction_kick", 1.0),
        "phi_b": proto.get("phi_b", 0.0),
        "stark_delta": proto.get("stark_shift_per_correction", 0.0),
        "compensate": proto.get("compensate_stark", True),
    }


def _bell_kwargs(proto) -> dict:
    return {
        "sample_points": proto.get("sample_points", []),
        "input_state": proto.get("input_state"),
        "correction_fidelity": proto.get("correction_fidelity", 1.0),
        "correction_kick": proto.get("correction_kick", 1.0),
        "phi_b": proto.get("phi_b", 0.0),
        "stark_delta": proto.get("stark_shift_per_correction", 0.0),
        "compensate": proto.get("compensate_stark", True),
        "fidelity_shots": proto.get("fidelity_shots"),
    }


def _write_series(manifest, out_dir, series, basis_fallback="") -> None:
    rows = []
    for i in range(len(series.index)):
        basis = series.basis[i] if series.basis is not None else basis_fallback
        cycle = int(series.cycle[i]) if series.cycle is not None else int(series.index[i])
        rows.append((int(series.index[i]), cycle, basis, series.p1[i], series.p0[i],
                     series.p_correct[i], series.stderr[i], series.shots))
    _write_csv(out_dir / "series.csv", SERIES_COLUMNS, rows)
    manifest["outputs"]["series"] = "series.csv"
    manifest["results"]["series_schema"] = ",".join(SERIES_COLUMNS)


def _run_single_round(manifest, proto, noise, seed, shots, workers, out_dir):
    table = exp.run_single_round(_theta_list(proto), shots, noise, seed,
                                 phi_b=proto.get("phi_b", 0.0), workers=workers)
    rows = [(r.theta, r.p_in_plus, r.p_in_minus, r.p_m1, r.p_m0,
             r.p_corr_plus1, r.p_corr_minus0, r.p_anti_plus0, r.p_anti_minus1,
             r.p_out_1_plus, r.p_out_0_minus, r.f_nd, r.f_qsp, r.shots)
            for r in table.rows]
    _write_csv(out_dir / "characterization.csv", CHARACTERIZATION_COLUMNS, rows)
    manifest["outputs"]["characterization"] = "characterization.csv"
    manifest["results"]["mean_f_nd"] = table.mean_f_nd
    manifest["results"]["mean_f_qsp"] = table.mean_f_qsp


def _run_subspace(manifest, proto, noise, seed, shots, workers, out_dir):
    series, records = exp.run_stabilization(
        proto["basis"], proto["feedback"], proto["rounds"], shots, noise, seed,
        workers=workers, **_subspace_kwargs(proto))
    _write_series(manifest, out_dir, series, basis_fallback=proto["basis"])
    manifest["results"]["fit"] = _fit_summary(series, proto["feedback"])
    return series, records


def _run_bell(manifest, proto, noise, seed, shots, workers, out_dir):
    series, samples, records = exp.run_bell_stabilization(
        proto["target"], proto["cycles"], shots, noise, seed,
        workers=workers, **_bell_kwargs(proto))
    _write_series(manifest, out_dir, series)
    rows = [(s.cycle, s.fidelity, s.zz, s.xx, s.yy, s.stderr, s.shots) for s in samples]
    _write_csv(out_dir / "fidelities.csv", FIDELITY_COLUMNS, rows)
    manifest["outputs"]["fidelities"] = "fidelities.csv"
    if samples:
        manifest["results"]["first_sample_fidelity"] = samples[0].fidelity
        manifest["results"]["last_sample_fidelity"] = samples[-1].fidelity
    return series, records


def _run_correlations(manifest, proto, noise, seed, shots, workers, out_dir):
    if proto.get("mode", "subspace") == "subspace":
        series, records = exp.run_stabilization(
            proto["basis"], proto["feedback"], proto["rounds"], shots, noise, seed,
            workers=workers, **_subspace_kwargs(proto))
        _write_series(manifest, out_dir, series, basis_fallback=proto["basis"])
        manifest["results"]["fit"] = _fit_summary(series, proto["feedback"])
    else:
        series, samples, records = exp.run_bell_stabilization(
            proto["target"], proto["cycles"], shots, noise, seed,
            workers=workers, **_bell_kwargs(proto))
        _write_series(manifest, out_dir, series)
    basis = proto.get("analysis_basis", "Z")
    corr = exp.correlation_analysis(records, basis)
    _write_csv(out_dir / "correlations.csv", CORRELATION_COLUMNS,
               [(r.basis, r.category, r.n_pairs, r.p_equal, r.stderr) for r in corr])
    cond = exp.conditional_feedback_stats(records)
    rows = [(int(cond.rounds[i]), cond.p_fb_given_fb[i], int(cond.n_fb[i]), cond.err_fb[i],
             cond.p_fb_given_nofb[i], int(cond.n_nofb[i]), cond.err_nofb[i],
             bool(cond.sparse[i]))
            for i in range(len(cond.rounds))]
    _write_csv(out_dir / "conditional.csv", CONDITIONAL_COLUMNS, rows)
    manifest["outputs"]["correlations"] = "correlations.csv"
    manifest["outputs"]["conditional"] = "conditional.csv"


def _fit_summary(series, feedback: bool) -> dict:
    try:
        fit = exp.fit_closed_loop(series) if feedback else exp.fit_open_loop(series)
    except ValueError as e:
        return {"error": str(e)}
    return {"model": fit.model, "rate": fit.rate, "stderr": fit.stderr,
            "amplitude": fit.amplitude, "converged": fit.converged}


# ---------------------------------------------------------------------------
# Command line


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stabsim",
                                     description="Stabilizer readout and feedback simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--workers", type=int, default=None, help="override worker count")
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            issues = validate_config(load_config(args.config))
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        for issue in issues:
            print(issue)
        return 0 if not issues else 2

    try:
        manifest = run_config(args.config, seed_override=args.seed,
                              workers_override=args.workers, out_override=args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 3
    for name, fname in sorted(manifest["outputs"].items()):
        print(f"wrote {fname}")
    print("wrote manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
