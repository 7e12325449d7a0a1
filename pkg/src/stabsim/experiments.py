"""Protocol runners, estimators, fits, and correlation analyses.

Runners execute Monte-Carlo trajectories of the measurement-and-feedback
protocols: a single characterized parity round, repeated single-subspace
stabilization, and Bell-state stabilization with sequential Z/X readout.
Each trajectory owns a generator derived from (master seed, stream,
trajectory index), so results are independent of how trajectories are
distributed over workers and aggregation is a deterministic reduction in
trajectory order.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from . import gates, qstate
from .controller import FeedbackPolicy, expected_bit, feedback_decision
from .gates import BELL_EIGENVALUES
from .noise import NoiseParams, sample_leakage, _depolarize_ion_raw, _depolarize_raw, _leak_ion_raw
from .readout import MeasurementOutcome, _detect_be_raw, _measure_ancilla_raw

# RNG stream tags: series trajectories, fidelity-sampling ensembles, and the
# two sub-experiments of the single-round characterization.
_STREAM_SERIES = 0
_STREAM_FID = 1
_STREAM_REF = 2
_STREAM_MAIN = 3

_FID_BASES = ("zz", "xx", "yy")

CORRELATION_CATEGORIES = ("none", "C_X", "C_Z", "C_Z+C_X")


# ---------------------------------------------------------------------------
# Records and aggregates


@dataclass(frozen=True)
class RoundEntry:
    """One measurement round inside a trajectory."""

    basis: str
    outcome: MeasurementOutcome
    corrections: tuple[str, ...] = ()
    corrections_ok: tuple[bool, ...] = ()
    leaks: tuple[str, ...] = ()


@dataclass(frozen=True)
class TrajectoryRecord:
    """Full history of one shot: per-round outcomes, feedback, leak events."""

    seed_key: tuple[int, ...]
    rounds: tuple[RoundEntry, ...]
    be_bits: tuple[int, int] | None = None


@dataclass(frozen=True)
class RoundSeries:
    """Per-round outcome statistics aggregated over trajectories."""

    index: np.ndarray
    p1: np.ndarray
    p0: np.ndarray
    p_correct: np.ndarray
    stderr: np.ndarray
    shots: int
    basis: tuple[str, ...] | None = None
    cycle: np.ndarray | None = None


@dataclass(frozen=True)
class FidelitySample:
    """Bell fidelity estimated by halting fresh ensembles at a cycle."""

    cycle: int
    fidelity: float
    zz: float
    xx: float
    yy: float
    stderr: float
    shots: int


@dataclass(frozen=True)
class CharacterizationRow:
    theta: float
    p_in_plus: float
    p_in_minus: float
    p_m1: float
    p_m0: float
    p_corr_plus1: float
    p_corr_minus0: float
    p_anti_plus0: float
    p_anti_minus1: float
    p_out_1_plus: float
    p_out_0_minus: float
    f_nd: float
    f_qsp: float
    shots: int


@dataclass(frozen=True)
class CharacterizationTable:
    rows: tuple[CharacterizationRow, ...]

    @property
    def mean_f_nd(self) -> float:
        return float(np.mean([r.f_nd for r in self.rows]))

    @property
    def mean_f_qsp(self) -> float:
        return float(np.mean([r.f_qsp for r in self.rows]))


@dataclass(frozen=True)
class CorrelationRow:
    basis: str
    category: str
    n_pairs: int
    p_equal: float
    stderr: float


@dataclass(frozen=True)
class ConditionalStats:
    """P(feedback at i+1 | feedback / no feedback at i), per round."""

    rounds: np.ndarray
    p_fb_given_fb: np.ndarray
    n_fb: np.ndarray
    err_fb: np.ndarray
    p_fb_given_nofb: np.ndarray
    n_nofb: np.ndarray
    err_nofb: np.ndarray
    sparse: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class FitResult:
    rate: float
    stderr: float
    amplitude: float
    converged: bool
    model: str


# ---------------------------------------------------------------------------
# Estimators


def fidelity_nd(p_in: Sequence[float], p_m: Sequence[float]) -> float:
    """Classical (Bhattacharyya) overlap of the two 2-outcome distributions.

    Computed in expanded form a*c + b*d + 2 sqrt(a c b d) so that exact
    special cases (e.g. a disjoint support) come out exact.
    """
    (a, b), (c, d) = _check_dist(p_in, "p_in"), _check_dist(p_m, "p_m")
    return a * c + b * d + 2.0 * math.sqrt(a * c * b * d)


def fidelity_qsp(p_m: Sequence[float], p_out: Sequence[float]) -> float:
    """Mean conditional probability that detection matched the announced subspace."""
    (m1, m0), (c1, c0) = _check_dist(p_m, "p_m"), p_out
    for v in (c1, c0):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"conditional probability {v} outside [0, 1]")
    return m1 * c1 + m0 * c0


def _check_dist(p: Sequence[float], name: str) -> tuple[float, float]:
    if len(p) != 2:
        raise ValueError(f"{name} must have two outcomes")
    a, b = float(p[0]), float(p[1])
    if a < 0 or b < 0:
        raise ValueError(f"{name} has negative entries")
    return a, b


def bell_fidelity_from_correlations(zz: float, xx: float, yy: float, label: str) -> float:
    """Fidelity with a Bell state from the three correlation values.

    F = (1 + s_z zz + s_x xx + s_y yy)/4 with the sign pattern fixed by the
    target's stabilizer eigenvalues: (s_z, s_x, s_y) = (E_Z, E_X, -E_Z E_X).
    """
    for name, v in (("zz", zz), ("xx", xx), ("yy", yy)):
        if abs(v) > 1.0 + 1e-9:
            raise ValueError(f"{name} = {v} has magnitude above 1")
    ez, ex = _bell_eigenvalues(label)
    return (1.0 + ez * zz + ex * xx - ez * ex * yy) / 4.0


def _bell_eigenvalues(label: str) -> tuple[int, int]:
    try:
        return BELL_EIGENVALUES[label]
    except KeyError:
        raise ValueError(f"unknown Bell label {label!r}") from None


# ---------------------------------------------------------------------------
# Decay fits


def _correct_probs(series) -> np.ndarray:
    if isinstance(series, RoundSeries):
        return np.asarray(series.p_correct, dtype=float)
    return np.asarray(series, dtype=float)


def fit_open_loop(series) -> FitResult:
    """Least-squares fit of p(n) = 0.5 + A exp(-gamma n), n = 1..N."""
    p = _correct_probs(series)
    if len(p) < 5:
        raise ValueError("need at least 5 rounds to fit")
    n = np.arange(1, len(p) + 1, dtype=float)
    a0 = max(p[0] - 0.5, 1e-3)
    try:
        with warnings.catch_warnings():
            # Degenerate covariance (e.g. an exact or constant series) is
            # handled below by reporting a NaN standard error.
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(lambda x, a, g: 0.5 + a * np.exp(-g * x), n, p,
                                   p0=(a0, 0.05), maxfev=20000)
    except RuntimeError:
        return FitResult(math.nan, math.nan, math.nan, False, "exponential")
    err = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else math.nan
    return FitResult(float(popt[1]), err, float(popt[0]), True, "exponential")


def fit_closed_loop(series) -> FitResult:
    """Fractional loss per round from a linear fit that skips round 1.

    Fits p(n) = a + b n over n = 2..N and reports |b| divided by the fitted
    amplitude above 0.5 at n = 2, making the number comparable to an
    exponential rate.
    """
    p = _correct_probs(series)
    if len(p) < 5:
        raise ValueError("need at least 5 rounds to fit")
    n = np.arange(1, len(p) + 1, dtype=float)[1:]
    (b, a), cov = np.polyfit(n, p[1:], 1, cov=True)
    amplitude = float(a + b * 2.0 - 0.5)
    if amplitude < 1e-6:
        raise ValueError(f"fitted amplitude {amplitude} below 1e-6")
    rate = abs(b) / amplitude
    stderr = float(np.sqrt(cov[0, 0])) / amplitude
    return FitResult(float(rate), stderr, amplitude, True, "linear")


# ---------------------------------------------------------------------------
# Input states and analysis plans


def build_input_state(desc: Mapping | None) -> np.ndarray:
    """Density matrix for an input-state descriptor (Ca always in |0>)."""
    if desc is None:
        desc = {"kind": "half_pi", "phi": 0.0}
    kind = desc.get("kind")
    if kind == "basis":
        b1, b2 = desc.get("levels", (0, 0))
        return qstate.new_register(int(b1), int(b2), 0).rho
    if kind == "mixed":
        return qstate.mixed_be_register().rho
    if kind == "half_pi":
        u = gates.rotation_half_pi(float(desc.get("phi", 0.0)))
        ket = u @ qstate.basis_ket(0, 0, 0)
        return np.outer(ket, ket.conj())
    if kind == "x_basis":
        s1, s2 = desc.get("signs", (1, 1))
        ket = np.zeros(qstate.DIM, dtype=complex)
        for b1 in (0, 1):
            for b2 in (0, 1):
                amp = (s1 ** b1) * (s2 ** b2) / 2.0
                ket[qstate.state_index(b1, b2, 0)] = amp
        return np.outer(ket, ket.conj())
    if kind == "prep":
        return gates.prepare_input(float(desc["phi_p"])).rho
    if kind == "bell":
        return gates.bell_state(desc["label"]).rho
    raise ValueError(f"unknown input state kind {kind!r}")


def default_input_state(basis: str, feedback: bool, target: int) -> dict:
    """Input used when a run does not specify one.

    Feedback runs start in an equal superposition of the two eigenspaces (a
    common quarter turn on |00>); open-loop runs start in an eigenstate of
    the monitored stabilizer with the target eigenvalue.
    """
    if feedback:
        return {"kind": "half_pi", "phi": 0.0}
    if basis == "Z":
        return {"kind": "basis", "levels": (0, 0) if target == 1 else (0, 1)}
    return {"kind": "x_basis", "signs": (1, 1) if target == 1 else (1, -1)}


def _bell_analysis_ops(label: str, basis: str, frame_phase: float):
    """Pulse list and sign for estimating one correlation of a Bell state.

    zz is read directly in the detection basis.  xx/yy use a common quarter
    turn (axis pi/2 resp. pi); for the odd-parity targets a C_Z pulse first
    converts them to the even-parity family, which flips the sign of the
    measured yy correlation.
    """
    ez, _ = _bell_eigenvalues(label)
    if basis == "zz":
        return (), 1.0
    ops = []
    sign = 1.0
    if ez == -1:
        ops.append(gates.correction_unitary("C_Z", frame_phase))
        if basis == "yy":
            sign = -1.0
    phi = np.pi / 2 if basis == "xx" else np.pi
    ops.append(gates.rotation_half_pi(phi + frame_phase))
    return tuple(ops), sign


# ---------------------------------------------------------------------------
# Trajectory engine


@dataclass(frozen=True)
class RunSpec:
    """Picklable description of a run, sufficient to rebuild the engine."""

    kind: str
    seed: int
    shots: int
    noise: NoiseParams
    policy: FeedbackPolicy
    basis: str = "Z"
    feedback: bool = False
    target: int = 1
    rounds: int = 0
    cycles: int = 0
    label: str = "phi_plus"
    input_state: tuple = ()
    phi_b: float = 0.0
    stark_delta: float = 0.0
    compensate: bool = True

    def input_desc(self) -> dict | None:
        return dict(self.input_state) if self.input_state else None


def _freeze_desc(desc: Mapping | None) -> tuple:
    if desc is None:
        return ()
    return tuple(sorted((k, tuple(v) if isinstance(v, (list, tuple)) else v)
                        for k, v in desc.items()))


class _Engine:
    """Per-process cache of the run's unitaries and input state."""

    def __init__(self, spec: RunSpec):
        self.spec = spec
        self.noise = spec.noise
        self.policy = spec.policy
        self.input_rho = build_input_state(spec.input_desc())
        self._blocks: dict = {}
        self._corrections: dict = {}
        self._frames: dict = {}

    def block(self, basis: str, offset: float) -> tuple[np.ndarray, np.ndarray]:
        # The Z block is frame-insensitive (diagonal on the computational
        # basis), so only the X block is keyed by the Stark offset.
        key = (basis, round(offset, 12) if basis == "X" else 0.0)
        if key not in self._blocks:
            u = gates.build_stabilizer_unitary(basis, self.spec.phi_b, frame_phase=key[1])
            self._blocks[key] = (u, u.conj().T)
        return self._blocks[key]

    def correction(self, kind: str, offset: float) -> tuple[np.ndarray, np.ndarray]:
        key = (kind, round(offset, 12) if kind == "C_Z" else 0.0)
        if key not in self._corrections:
            c = gates.correction_unitary(kind, key[1])
            self._corrections[key] = (c, c.conj().T)
        return self._corrections[key]

    def frame(self, delta: float) -> tuple[np.ndarray, np.ndarray]:
        key = round(delta, 12)
        if key not in self._frames:
            f = gates.common_z_rotation(delta)
            self._frames[key] = (f, f.conj().T)
        return self._frames[key]

    def measurement_round(self, rho, basis, round_index, rng, offset):
        u, udag = self.block(basis, offset if self.spec.compensate else 0.0)
        rho = u @ rho @ udag
        if self.noise.gamma_dep > 0.0:
            rho = _depolarize_raw(rho, self.noise.gamma_dep, self.noise.depolarize_mode)
        outcome, rho, _ = _measure_ancilla_raw(rho, round_index, self.noise, rng, reset=True)
        leaks = sample_leakage(rng, self.noise.gamma_leak)
        for ion in leaks:
            rho = _leak_ion_raw(rho, ion)
        return rho, outcome, leaks

    def apply_corrections(self, rho, kinds, rng, offset):
        """Run the commanded corrections; returns (rho, ok flags, new offset).

        Each pulse attempt injects the configured physical Stark shift
        whether or not the correction itself succeeded.
        """
        flags = []
        for kind in kinds:
            ok = rng.random() < self.policy.correction_fidelity
            if ok:
                c, cdag = self.correction(kind, offset if self.spec.compensate else 0.0)
                rho = c @ rho @ cdag
            else:
                rho = _depolarize_ion_raw(rho, "be2", self.policy.correction_kick)
            if self.spec.stark_delta != 0.0:
                f, fdag = self.frame(self.spec.stark_delta)
                rho = f @ rho @ fdag
                offset += self.spec.stark_delta
            flags.append(ok)
        return rho, tuple(flags), offset


def _subspace_trajectory(engine: _Engine, k: int):
    spec = engine.spec
    rng = np.random.default_rng([spec.seed, _STREAM_SERIES, k])
    rho = engine.input_rho.copy()
    offset = 0.0
    entries = []
    for n in range(spec.rounds):
        rho, outcome, leaks = engine.measurement_round(rho, spec.basis, n, rng, offset)
        kinds, flags = (), ()
        if spec.feedback:
            kinds = tuple(feedback_decision(engine.policy, {spec.basis: outcome.bit}))
            rho, flags, offset = engine.apply_corrections(rho, kinds, rng, offset)
        entries.append(RoundEntry(spec.basis, outcome, kinds, flags, leaks))
    return TrajectoryRecord((spec.seed, _STREAM_SERIES, k), tuple(entries)), rho


def _bell_trajectory(engine: _Engine, k: int, cycles: int, stream: Sequence[int]):
    spec = engine.spec
    rng = np.random.default_rng(list(stream) + [k])
    rho = engine.input_rho.copy()
    offset = 0.0
    entries = []
    for cycle in range(cycles):
        rho, out_z, leaks_z = engine.measurement_round(rho, "Z", 2 * cycle, rng, offset)
        rho, out_x, leaks_x = engine.measurement_round(rho, "X", 2 * cycle + 1, rng, offset)
        kinds = tuple(feedback_decision(engine.policy, {"Z": out_z.bit, "X": out_x.bit}))
        rho, flags, offset = engine.apply_corrections(rho, kinds, rng, offset)
        entries.append(RoundEntry("Z", out_z, (), (), leaks_z))
        entries.append(RoundEntry("X", out_x, kinds, flags, leaks_x))
    return TrajectoryRecord(tuple(stream) + (k,), tuple(entries)), rho, offset, rng


def _fid_shot(engine: _Engine, k: int, stop_cycle: int, basis: str, basis_idx: int):
    spec = engine.spec
    stream = (spec.seed, _STREAM_FID, stop_cycle, basis_idx)
    _, rho, offset, rng = _bell_trajectory(engine, k, stop_cycle, stream)
    ops, sign = _bell_analysis_ops(spec.label, basis,
                                   offset if spec.compensate else 0.0)
    for op in ops:
        rho = op @ rho @ op.conj().T
    bits, _ = _detect_be_raw(rho, engine.noise, rng)
    c = 1.0 if bits[0] == bits[1] else -1.0
    return sign * c


# ---------------------------------------------------------------------------
# Worker mapping


def _run_task(args):
    spec, task, indices = args
    engine = _Engine(spec)
    out = []
    for k in indices:
        if task[0] == "subspace":
            rec, _ = _subspace_trajectory(engine, k)
            out.append(rec)
        elif task[0] == "bell":
            rec, rho, _, _ = _bell_trajectory(engine, k, spec.cycles,
                                              (spec.seed, _STREAM_SERIES))
            out.append(rec)
        elif task[0] == "fid":
            _, stop_cycle, basis, basis_idx = task
            out.append(_fid_shot(engine, k, stop_cycle, basis, basis_idx))
        else:
            raise ValueError(f"unknown task {task!r}")
    return out


def _map_trajectories(spec: RunSpec, task: tuple, count: int, workers: int) -> list:
    indices = np.arange(count)
    if workers <= 1:
        return _run_task((spec, task, indices))
    chunks = [c for c in np.array_split(indices, workers * 4) if len(c)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_run_task, [(spec, task, c) for c in chunks]))
    return [item for part in parts for item in part]


# ---------------------------------------------------------------------------
# Aggregation


def _series_from_records(records: Sequence[TrajectoryRecord],
                         correct_bits: Sequence[int],
                         bases: Sequence[str] | None = None,
                         cycles: np.ndarray | None = None) -> RoundSeries:
    shots = len(records)
    n_rounds = len(records[0].rounds)
    p1 = np.zeros(n_rounds)
    p_corr = np.zeros(n_rounds)
    for rec in records:
        for i, entry in enumerate(rec.rounds):
            p1[i] += entry.outcome.bit
            p_corr[i] += 1.0 if entry.outcome.bit == correct_bits[i] else 0.0
    p1 /= shots
    p_corr /= shots
    stderr = np.sqrt(p_corr * (1.0 - p_corr) / shots)
    return RoundSeries(index=np.arange(1, n_rounds + 1), p1=p1, p0=1.0 - p1,
                       p_correct=p_corr, stderr=stderr, shots=shots,
                       basis=tuple(bases) if bases is not None else None,
                       cycle=cycles)


# ---------------------------------------------------------------------------
# Runners


def run_stabilization(basis: str, feedback: bool, rounds: int, shots: int,
                      noise: NoiseParams, seed: int, target: int = 1,
                      input_state: Mapping | None = None,
                      correction_fidelity: float = 1.0,
                      correction_kick: float = 1.0,
                      phi_b: float = 0.0,
                      stark_delta: float = 0.0,
                      compensate: bool = True,
                      workers: int = 1) -> tuple[RoundSeries, list[TrajectoryRecord]]:
    """Repeated readout of one stabilizer, optionally with feedback.

    Each round applies the readout block, the depolarizing channel, the
    biased ancilla measurement (with the ancilla re-initialized after), the
    leakage channel, and, with feedback on, the conditional correction.
    """
    if rounds < 1 or shots < 1:
        raise ValueError("rounds and shots must be >= 1")
    if basis not in ("Z", "X"):
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    if target not in (1, -1):
        raise ValueError("target must be +1 or -1")
    mode = "none" if not feedback else ("stabilize_Z" if basis == "Z" else "stabilize_X")
    policy = FeedbackPolicy(mode=mode, target_z=target if basis == "Z" else 1,
                            target_x=target if basis == "X" else 1,
                            correction_fidelity=correction_fidelity,
                            correction_kick=correction_kick)
    desc = input_state if input_state is not None else default_input_state(basis, feedback, target)
    spec = RunSpec(kind="subspace", seed=seed, shots=shots, noise=noise, policy=policy,
                   basis=basis, feedback=feedback, target=target, rounds=rounds,
                   input_state=_freeze_desc(desc), phi_b=phi_b,
                   stark_delta=stark_delta, compensate=compensate)
    records = _map_trajectories(spec, ("subspace",), shots, workers)
    series = _series_from_records(records, [expected_bit(target)] * rounds)
    return series, records


def run_bell_stabilization(target: str, cycles: int, shots: int,
                           noise: NoiseParams, seed: int,
                           sample_points: Sequence[int] = (),
                           input_state: Mapping | None = None,
                           correction_fidelity: float = 1.0,
                           correction_kick: float = 1.0,
                           phi_b: float = 0.0,
                           stark_delta: float = 0.0,
                           compensate: bool = True,
                           fidelity_shots: int | None = None,
                           workers: int = 1
                           ) -> tuple[RoundSeries, list[FidelitySample], list[TrajectoryRecord]]:
    """Bell-state stabilization: sequential Z and X readout plus feedback.

    Every cycle measures S_Z then S_X and applies C_Z/C_X for outcomes that
    disagree with the target's eigenvalues.  At each requested sample point
    the Bell fidelity is estimated from fresh ensembles halted there, via
    direct Be detection in three bases (with its error model).
    """
    ez, ex = _bell_eigenvalues(target)
    if cycles < 1 or shots < 1:
        raise ValueError("cycles and shots must be >= 1")
    for sp in sample_points:
        if not 1 <= sp <= cycles:
            raise ValueError(f"sample point {sp} outside 1..{cycles}")
    policy = FeedbackPolicy(mode="stabilize_bell", target_z=ez, target_x=ex,
                            correction_fidelity=correction_fidelity,
                            correction_kick=correction_kick)
    desc = input_state if input_state is not None else {"kind": "half_pi", "phi": 0.0}
    spec = RunSpec(kind="bell", seed=seed, shots=shots, noise=noise, policy=policy,
                   cycles=cycles, label=target, input_state=_freeze_desc(desc),
                   phi_b=phi_b, stark_delta=stark_delta, compensate=compensate)
    records = _map_trajectories(spec, ("bell",), shots, workers)

    bases = ("Z", "X") * cycles
    correct = [expected_bit(ez if b == "Z" else ex) for b in bases]
    cyc = np.repeat(np.arange(1, cycles + 1), 2)
    series = _series_from_records(records, correct, bases, cyc)

    n_fid = fidelity_shots if fidelity_shots is not None else shots
    samples = []
    for sp in sample_points:
        corr = {}
        err_var = 0.0
        for bi, b in enumerate(_FID_BASES):
            vals = np.array(_map_trajectories(spec, ("fid", sp, b, bi), n_fid, workers))
            corr[b] = float(vals.mean())
            err_var += (1.0 - corr[b] ** 2) / (16.0 * n_fid)
        f = bell_fidelity_from_correlations(corr["zz"], corr["xx"], corr["yy"], target)
        samples.append(FidelitySample(cycle=sp, fidelity=f, zz=corr["zz"],
                                      xx=corr["xx"], yy=corr["yy"],
                                      stderr=math.sqrt(err_var), shots=n_fid))
    return series, samples, records


def run_single_round(theta_grid: Sequence[float], shots: int, noise: NoiseParams,
                     seed: int, phi_b: float = 0.0,
                     workers: int = 1) -> CharacterizationTable:
    """Single parity round characterized against direct Be detection.

    For each preparation phase theta two experiments run: a reference that
    detects the input state directly (estimating the input parity
    distribution) and the main sequence (readout block, depolarization,
    ancilla measurement, leakage, then direct Be detection).
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    thetas = [float(t) for t in theta_grid]
    if not thetas:
        raise ValueError("theta grid must not be empty")
    args = [(seed, shots, noise, phi_b, ti, theta) for ti, theta in enumerate(thetas)]
    if workers <= 1:
        rows = [_characterize_theta(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_characterize_theta, args))
    return CharacterizationTable(tuple(rows))


def _characterize_theta(args) -> CharacterizationRow:
    seed, shots, noise, phi_b, ti, theta = args
    prep = gates.prepare_input(theta).rho
    block = gates.build_stabilizer_unitary("Z", phi_b)
    block_dag = block.conj().T

    n_in_plus = 0
    for k in range(shots):
        rng = np.random.default_rng([seed, _STREAM_REF, ti, k])
        bits, _ = _detect_be_raw(prep, noise, rng)
        if bits[0] == bits[1]:
            n_in_plus += 1

    joint = np.zeros((2, 2))  # [ca bit][0: parity +1, 1: parity -1]
    for k in range(shots):
        rng = np.random.default_rng([seed, _STREAM_MAIN, ti, k])
        rho = block @ prep @ block_dag
        if noise.gamma_dep > 0.0:
            rho = _depolarize_raw(rho, noise.gamma_dep, noise.depolarize_mode)
        outcome, rho, _ = _measure_ancilla_raw(rho, 0, noise, rng, reset=False)
        for ion in sample_leakage(rng, noise.gamma_leak):
            rho = _leak_ion_raw(rho, ion)
        bits, _ = _detect_be_raw(rho, noise, rng)
        joint[outcome.bit, 0 if bits[0] == bits[1] else 1] += 1

    joint /= shots
    p_in = (n_in_plus / shots, 1.0 - n_in_plus / shots)
    p_m1 = joint[1].sum()
    p_m0 = joint[0].sum()
    p_out_1_plus = joint[1, 0] / p_m1 if p_m1 > 0 else 0.0
    p_out_0_minus = joint[0, 1] / p_m0 if p_m0 > 0 else 0.0
    return CharacterizationRow(
        theta=theta, p_in_plus=p_in[0], p_in_minus=p_in[1],
        p_m1=p_m1, p_m0=p_m0,
        p_corr_plus1=joint[1, 0], p_corr_minus0=joint[0, 1],
        p_anti_plus0=joint[0, 0], p_anti_minus1=joint[1, 1],
        p_out_1_plus=p_out_1_plus, p_out_0_minus=p_out_0_minus,
        f_nd=fidelity_nd(p_in, (p_m1, p_m0)),
        f_qsp=fidelity_qsp((p_m1, p_m0), (p_out_1_plus, p_out_0_minus)),
        shots=shots)


# ---------------------------------------------------------------------------
# Correlation analyses


def correlation_analysis(records: Sequence[TrajectoryRecord],
                         basis: str) -> list[CorrelationRow]:
    """Correlation of consecutive same-basis outcomes, split by the
    corrections commanded between them.

    p_equal = 1 means the two classified bits always agreed; 0 means perfect
    anti-correlation.  Categories with no events are reported with zero
    weight.
    """
    if basis not in ("Z", "X"):
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    counts = {cat: [0, 0] for cat in CORRELATION_CATEGORIES}
    for rec in records:
        idxs = [i for i, e in enumerate(rec.rounds) if e.basis == basis]
        for a, b in zip(idxs, idxs[1:]):
            between = set()
            for e in rec.rounds[a:b]:
                between.update(e.corrections)
            cat = _category(between)
            counts[cat][1] += 1
            if rec.rounds[a].outcome.bit == rec.rounds[b].outcome.bit:
                counts[cat][0] += 1
    rows = []
    for cat in CORRELATION_CATEGORIES:
        n_eq, n = counts[cat]
        if n == 0:
            rows.append(CorrelationRow(basis, cat, 0, math.nan, math.nan))
        else:
            p = n_eq / n
            rows.append(CorrelationRow(basis, cat, n, p, math.sqrt(p * (1 - p) / n)))
    return rows


def _category(between: set) -> str:
    has_z, has_x = "C_Z" in between, "C_X" in between
    if has_z and has_x:
        return "C_Z+C_X"
    if has_z:
        return "C_Z"
    if has_x:
        return "C_X"
    return "none"


def conditional_feedback_stats(records: Sequence[TrajectoryRecord],
                               sparse_threshold: int = 20) -> ConditionalStats:
    """Per-round conditional feedback frequencies.

    A round counts as a feedback event when any correction was commanded
    after it.  Conditioning counts below ``sparse_threshold`` are flagged;
    rounds with no conditioning events report NaN.
    """
    if not records:
        raise ValueError("no records")
    n_rounds = len(records[0].rounds)
    fb = np.array([[1 if e.corrections else 0 for e in rec.rounds]
                   for rec in records], dtype=bool)
    degenerate = not fb.any()
    prev, nxt = fb[:, :-1], fb[:, 1:]
    n_fb = prev.sum(axis=0)
    n_nofb = (~prev).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_ff = np.where(n_fb > 0, (prev & nxt).sum(axis=0) / np.maximum(n_fb, 1), math.nan)
        p_nf = np.where(n_nofb > 0, (~prev & nxt).sum(axis=0) / np.maximum(n_nofb, 1), math.nan)
        err_ff = np.sqrt(np.clip(p_ff * (1 - p_ff), 0, None) / np.maximum(n_fb, 1))
        err_nf = np.sqrt(np.clip(p_nf * (1 - p_nf), 0, None) / np.maximum(n_nofb, 1))
    return ConditionalStats(
        rounds=np.arange(1, n_rounds), p_fb_given_fb=p_ff, n_fb=n_fb, err_fb=err_ff,
        p_fb_given_nofb=p_nf, n_nofb=n_nofb, err_nofb=err_nf,
        sparse=n_fb < sparse_threshold, degenerate=degenerate)
