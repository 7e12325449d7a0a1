"""Error model for a measurement round: depolarization, leakage, readout drift.

Per round the simulation applies a depolarizing channel after the readout
unitary (before the ancilla result is extracted), then samples per-ion
leakage after the projection.  Classified ancilla bits are flipped with a
probability that drifts linearly with the round index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qstate import DIM, QUBIT_BLOCK, LEAK, RegisterState, state_index, subsystem_id

BE_IONS = ("be1", "be2")

_QUBIT_IDX = np.array(QUBIT_BLOCK)
_BLOCK_DIM = len(QUBIT_BLOCK)

# Per-ion qubit-block index sets: register states where the given ion is
# not in |L> (used for single-ion depolarization).
_ION_QUBIT_IDX = {
    "be1": np.array([state_index(b1, b2, c)
                     for b1 in (0, 1) for b2 in range(3) for c in (0, 1)]),
    "be2": np.array([state_index(b1, b2, c)
                     for b1 in range(3) for b2 in (0, 1) for c in (0, 1)]),
}


@dataclass(frozen=True)
class NoiseParams:
    """Knobs of the round-level error model.

    gamma_dep        depolarization probability per measurement round
    gamma_leak       per-ion leakage probability per round
    readout_drift    additive increase of the ancilla misclassification
                     probability per round
    readout_bias0    misclassification probability at round 0
    det_error_be     per-ion bit-flip probability in direct Be detection
    photon_mean_*    Poisson means of the fluorescence count distributions
    depolarize_mode  "full" depolarizes the whole 8-dim qubit block,
                     "be_pair" only the two data ions
    use_photon_counts  classify the ancilla from simulated counts instead of
                     the flat bias model
    photon_threshold counts <= threshold classify as dark
    leak_detection   how a leaked ion reads out in direct detection
    """

    gamma_dep: float = 0.0
    gamma_leak: float = 0.0
    readout_drift: float = 0.0
    readout_bias0: float = 0.0
    det_error_be: float = 0.0
    photon_mean_bright: float = 25.0
    photon_mean_dark: float = 0.2
    depolarize_mode: str = "full"
    use_photon_counts: bool = False
    photon_threshold: int = 5
    leak_detection: str = "dark"

    def __post_init__(self):
        for name in ("gamma_dep", "gamma_leak", "readout_bias0", "det_error_be"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if self.readout_drift < 0.0:
            raise ValueError(f"readout_drift = {self.readout_drift} must be >= 0")
        for name in ("photon_mean_bright", "photon_mean_dark"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.depolarize_mode not in ("full", "be_pair"):
            raise ValueError(f"unknown depolarize_mode {self.depolarize_mode!r}")
        if self.leak_detection not in ("dark", "bright"):
            raise ValueError(f"unknown leak_detection {self.leak_detection!r}")
        if self.photon_threshold < 0:
            raise ValueError("photon_threshold must be >= 0")


def depolarize(state: RegisterState, gamma: float, mode: str = "full") -> RegisterState:
    """Depolarizing channel on the qubit block.

    rho -> (1-gamma) rho + gamma L(rho) where L replaces the computational
    block by the maximally mixed state, erases its coherences with leaked
    configurations, and leaves the leaked sector untouched.  In "be_pair"
    mode the replacement mixes only the two data ions, preserving the
    ancilla's reduced state.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma = {gamma} outside [0, 1]")
    if gamma == 0.0:
        return state
    rho = np.asarray(_depolarize_raw(state.rho, gamma, mode))
    return RegisterState(rho)


def _depolarize_raw(rho: np.ndarray, gamma: float, mode: str = "full") -> np.ndarray:
    if gamma == 0.0:
        return rho
    block = rho[np.ix_(_QUBIT_IDX, _QUBIT_IDX)]
    # Leak sector (I-Q) rho (I-Q), including its internal coherences,
    # passes through the depolarized branch whole.
    rest = rho.copy()
    rest[_QUBIT_IDX, :] = 0.0
    rest[:, _QUBIT_IDX] = 0.0
    out = (1.0 - gamma) * rho + gamma * rest
    if mode == "full":
        out[_QUBIT_IDX, _QUBIT_IDX] += gamma * np.trace(block).real / _BLOCK_DIM
    else:
        # Mix the Be pair, keep the ancilla factor of the block.
        b = block.reshape(4, 2, 4, 2)
        ca_part = np.einsum("iaib->ab", b) / 4.0
        out[np.ix_(_QUBIT_IDX, _QUBIT_IDX)] += gamma * np.kron(np.eye(4, dtype=complex), ca_part)
    return (out + out.conj().T) / 2


def depolarize_ion(state: RegisterState, ion: str, strength: float) -> RegisterState:
    """Partial depolarization of a single Be ion's qubit block."""
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength = {strength} outside [0, 1]")
    return RegisterState(_depolarize_ion_raw(state.rho, ion, strength))


def _depolarize_ion_raw(rho: np.ndarray, ion: str, strength: float) -> np.ndarray:
    if strength == 0.0:
        return rho
    sub = subsystem_id(ion)
    if sub not in (0, 1):
        raise ValueError(f"can only depolarize a Be ion, got {ion!r}")
    idx = _ION_QUBIT_IDX[ion]
    rest = rho.copy()
    rest[idx, :] = 0.0
    rest[:, idx] = 0.0
    out = (1.0 - strength) * rho + strength * rest
    block = rho[np.ix_(idx, idx)]
    # Trace out the ion's qubit levels and re-insert the mixed qubit.
    if sub == 0:
        env = np.einsum("iaib->ab", block.reshape(2, 6, 2, 6)) / 2.0
        repl = np.kron(np.eye(2, dtype=complex), env)
    else:
        env = np.einsum("aibcid->abcd", block.reshape(3, 2, 2, 3, 2, 2)) / 2.0
        repl = _interleave_be2(env)
    out[np.ix_(idx, idx)] += strength * repl
    return (out + out.conj().T) / 2


def _interleave_be2(env: np.ndarray) -> np.ndarray:
    """Insert a mixed qubit as the middle tensor factor of (be1, ca) env."""
    out = np.zeros((3, 2, 2, 3, 2, 2), dtype=complex)
    for q in (0, 1):
        out[:, q, :, :, q, :] = env
    return out.reshape(12, 12)


def leak_ion(state: RegisterState, ion: str) -> RegisterState:
    """Move one Be ion to the shelf: rho -> |L><L|_ion (x) tr_ion(rho)."""
    return RegisterState(_leak_ion_raw(state.rho, ion))


def _leak_ion_raw(rho: np.ndarray, ion: str) -> np.ndarray:
    sub = subsystem_id(ion)
    if sub not in (0, 1):
        raise ValueError(f"only Be ions can leak, got {ion!r}")
    t = rho.reshape(3, 3, 2, 3, 3, 2)
    # np.trace moves the remaining axes forward: env axes are
    # (other_be, ca, other_be', ca') for either ion.
    env = np.trace(t, axis1=sub, axis2=sub + 3)
    out = np.zeros_like(t)
    if sub == 0:
        out[LEAK, :, :, LEAK, :, :] = env
    else:
        out[:, LEAK, :, :, LEAK, :] = env
    return out.reshape(DIM, DIM)


def sample_leakage(rng: np.random.Generator, gamma_leak: float) -> tuple[str, ...]:
    """Independently select each Be ion for leakage this round."""
    if not 0.0 <= gamma_leak <= 1.0:
        raise ValueError(f"gamma_leak = {gamma_leak} outside [0, 1]")
    return tuple(ion for ion in BE_IONS if rng.random() < gamma_leak)


def readout_bias(round_index: int, params: NoiseParams) -> float:
    """Ancilla misclassification probability at the given round."""
    if round_index < 0:
        raise ValueError("round_index must be >= 0")
    bias = params.readout_bias0 + params.readout_drift * round_index
    return float(min(max(bias, 0.0), 0.5))
