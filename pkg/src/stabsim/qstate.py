"""Dense operator algebra for the Be1-Be2-Ca register.

The register is a 18-dimensional Hilbert space ordered as Be1 (x) Be2 (x) Ca
with subsystem dimensions (3, 3, 2).  Each beryllium ion carries the qubit
levels |0>, |1> plus one abstract shelf level |L> that collects population
leaked out of the qubit subspace.  Pauli operators on a Be ion have zero
matrix elements involving |L>; gates act as the identity there.

States are density operators handled as plain complex ndarrays wrapped in
:class:`RegisterState`.  All operations return new states; nothing in this
module mutates its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

DIMS = (3, 3, 2)
DIM = 18
SUBSYSTEMS = ("be1", "be2", "ca")
LEAK = 2

TRACE_TOL = 1e-10
HERM_TOL = 1e-10
PSD_TOL = -1e-9
UNITARY_TOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def qubit_block(op2: np.ndarray) -> np.ndarray:
    """Embed a 2x2 operator into the Be qubit block, zero on |L>."""
    out = np.zeros((3, 3), dtype=complex)
    out[:2, :2] = op2
    return out


def gate_block(op2: np.ndarray) -> np.ndarray:
    """Embed a 2x2 operator into a Be ion acting as identity on |L>."""
    out = np.eye(3, dtype=complex)
    out[:2, :2] = op2
    return out


def kron3(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.kron(np.kron(a, b), c)


def embed(be1: np.ndarray | None = None,
          be2: np.ndarray | None = None,
          ca: np.ndarray | None = None) -> np.ndarray:
    """Tensor the given single-subsystem operators with identities elsewhere."""
    a = np.eye(3, dtype=complex) if be1 is None else np.asarray(be1, dtype=complex)
    b = np.eye(3, dtype=complex) if be2 is None else np.asarray(be2, dtype=complex)
    c = np.eye(2, dtype=complex) if ca is None else np.asarray(ca, dtype=complex)
    return kron3(a, b, c)


def state_index(be1: int, be2: int, ca: int) -> int:
    return (be1 * 3 + be2) * 2 + ca


def basis_ket(be1: int, be2: int, ca: int) -> np.ndarray:
    v = np.zeros(DIM, dtype=complex)
    v[state_index(be1, be2, ca)] = 1.0
    return v


# Indices of the 8-dim computational block (no leaked ion) and, per Ca level,
# of the 9 Be-pair configurations.
QUBIT_BLOCK = tuple(state_index(b1, b2, c)
                    for b1 in (0, 1) for b2 in (0, 1) for c in (0, 1))
CA_INDICES = tuple(tuple(state_index(b1, b2, c) for b1 in range(3) for b2 in range(3))
                   for c in (0, 1))


def subsystem_id(name: str | int) -> int:
    if isinstance(name, int):
        if name not in (0, 1, 2):
            raise ValueError(f"unknown subsystem index {name}")
        return name
    try:
        return SUBSYSTEMS.index(name)
    except ValueError:
        raise ValueError(f"unknown subsystem {name!r}; expected one of {SUBSYSTEMS}") from None


@dataclass(frozen=True)
class RegisterState:
    """Density operator on the full register.

    The array is treated as immutable; operations build new instances.
    Invariants (unit trace, Hermiticity, positivity) are enforced by
    :meth:`validate`, which construction helpers call once.
    """

    rho: np.ndarray
    dims: tuple[int, int, int] = DIMS

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (DIM, DIM):
            raise ValueError(f"rho must be {DIM}x{DIM}, got {rho.shape}")
        object.__setattr__(self, "rho", rho)

    def validate(self) -> "RegisterState":
        tr = np.trace(self.rho)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace(rho) = {tr}, expected 1 within {TRACE_TOL}")
        if np.max(np.abs(self.rho - self.rho.conj().T)) > HERM_TOL:
            raise ValueError("rho is not Hermitian within tolerance")
        if np.min(np.linalg.eigvalsh((self.rho + self.rho.conj().T) / 2)) < PSD_TOL:
            raise ValueError("rho has a negative eigenvalue beyond tolerance")
        return self


@dataclass(frozen=True)
class Observable:
    """Hermitian operator on the register with a human-readable label."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (DIM, DIM):
            raise ValueError(f"observable must be {DIM}x{DIM}, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERM_TOL:
            raise ValueError(f"observable {self.label!r} is not Hermitian")
        object.__setattr__(self, "matrix", m)


def new_register(be1: int, be2: int, ca: int) -> RegisterState:
    """Pure product state with each subsystem in the given level."""
    for lev, lim, name in ((be1, 3, "be1"), (be2, 3, "be2"), (ca, 2, "ca")):
        if not (isinstance(lev, (int, np.integer)) and 0 <= lev < lim):
            raise ValueError(f"invalid level {lev} for {name}")
    v = basis_ket(be1, be2, ca)
    return RegisterState(np.outer(v, v.conj()))


def state_from_ket(ket: np.ndarray) -> RegisterState:
    ket = np.asarray(ket, dtype=complex).reshape(DIM)
    n = np.linalg.norm(ket)
    if n < 1e-12:
        raise ValueError("cannot build a state from the zero vector")
    ket = ket / n
    return RegisterState(np.outer(ket, ket.conj()))


def mixed_be_register() -> RegisterState:
    """Maximally mixed state on the Be-pair computational block, Ca in |0>."""
    rho = np.zeros((DIM, DIM), dtype=complex)
    for b1 in (0, 1):
        for b2 in (0, 1):
            i = state_index(b1, b2, 0)
            rho[i, i] = 0.25
    return RegisterState(rho)


def apply_unitary(state: RegisterState, u: np.ndarray) -> RegisterState:
    """Conjugate the state by a unitary, rho -> u rho u^dag."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (DIM, DIM):
        raise ValueError(f"unitary must be {DIM}x{DIM}, got {u.shape}")
    if np.max(np.abs(u.conj().T @ u - np.eye(DIM))) > UNITARY_TOL:
        raise ValueError("operator is not unitary within tolerance")
    rho = u @ state.rho @ u.conj().T
    return RegisterState((rho + rho.conj().T) / 2)


def partial_trace(state: RegisterState, keep: Iterable[str | int]) -> np.ndarray:
    """Trace out everything except ``keep``, returning the reduced matrix.

    ``keep`` names subsystems ("be1", "be2", "ca" or indices 0..2); the
    result keeps them in register order regardless of the order given.
    """
    keep_ids = sorted({subsystem_id(k) for k in keep})
    if not keep_ids:
        raise ValueError("keep must name at least one subsystem")
    t = state.rho.reshape(*DIMS, *DIMS)
    # Contract each traced subsystem's row index with its column index.
    for sub in (2, 1, 0):
        if sub not in keep_ids:
            nrow = t.ndim // 2
            t = np.trace(t, axis1=sub, axis2=sub + nrow)
    d = int(np.prod([DIMS[i] for i in keep_ids]))
    return t.reshape(d, d)


def expectation(state: RegisterState, obs: Observable) -> float:
    """Real expectation value trace(rho O) of a Hermitian observable."""
    val = np.trace(state.rho @ obs.matrix)
    if abs(val.imag) >= 1e-9:
        raise ValueError(f"expectation of {obs.label!r} has imaginary residue {val.imag}")
    return float(val.real)


def project(state: RegisterState, projector: Observable,
            normalize: bool = True) -> tuple[float, RegisterState | None]:
    """Apply a projector: returns (probability, collapsed state).

    The projector must be idempotent.  When the probability is below 1e-12
    the collapsed state is undefined: an error if normalization was
    requested, ``None`` otherwise.
    """
    p = projector.matrix
    if np.max(np.abs(p @ p - p)) > 1e-10:
        raise ValueError("projector is not idempotent within tolerance")
    reduced = p @ state.rho @ p
    prob = float(np.trace(reduced).real)
    if prob < 1e-12:
        if normalize:
            raise ValueError(f"projection probability {prob} below 1e-12")
        return max(prob, 0.0), None
    rho = reduced / prob
    return prob, RegisterState((rho + rho.conj().T) / 2)


def _stabilizer(op2: np.ndarray, label: str) -> Observable:
    p3 = qubit_block(op2)
    return Observable(embed(be1=p3, be2=p3), label)


def stabilizer_z() -> Observable:
    """Z1 Z2 on the qubit blocks, zero on leaked population, identity on Ca."""
    return _stabilizer(PAULI_Z, "S_Z")


def stabilizer_x() -> Observable:
    return _stabilizer(PAULI_X, "S_X")


def stabilizer_y() -> Observable:
    """Y1 Y2 correlation observable (not a stabilizer, used in tomography)."""
    return _stabilizer(PAULI_Y, "Y1Y2")


def ca_projector(level: int) -> Observable:
    if level not in (0, 1):
        raise ValueError(f"invalid Ca level {level}")
    e = np.zeros((2, 2), dtype=complex)
    e[level, level] = 1.0
    return Observable(embed(ca=e), f"Ca|{level}>")


def parity_projector(sign: int) -> Observable:
    """Projector onto the Be computational subspace with S_Z eigenvalue ``sign``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    m = np.zeros((DIM, DIM), dtype=complex)
    for b1 in (0, 1):
        for b2 in (0, 1):
            if (1 if b1 == b2 else -1) == sign:
                for c in (0, 1):
                    i = state_index(b1, b2, c)
                    m[i, i] = 1.0
    return Observable(m, f"parity{sign:+d}")


def be_config_projector(be1: int, be2: int) -> Observable:
    """Projector onto a Be-pair level configuration, identity on Ca."""
    m = np.zeros((DIM, DIM), dtype=complex)
    for c in (0, 1):
        i = state_index(be1, be2, c)
        m[i, i] = 1.0
    return Observable(m, f"Be({be1},{be2})")
