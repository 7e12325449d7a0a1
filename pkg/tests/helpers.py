"""Shared random-object builders for the test suite."""
import numpy as np

from stabsim import qstate


def random_ket(rng, dim=qstate.DIM):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_comp_ket(rng):
    """Random pure state supported on the 8-dim computational block."""
    v = np.zeros(qstate.DIM, dtype=complex)
    amps = rng.normal(size=8) + 1j * rng.normal(size=8)
    v[list(qstate.QUBIT_BLOCK)] = amps / np.linalg.norm(amps)
    return v


def random_density(rng, rank=4, dim=qstate.DIM):
    rho = np.zeros((dim, dim), dtype=complex)
    w = rng.random(rank)
    w /= w.sum()
    for i in range(rank):
        k = random_ket(rng, dim)
        rho += w[i] * np.outer(k, k.conj())
    return rho


def random_state(rng, rank=4):
    return qstate.RegisterState(random_density(rng, rank))


def random_unitary(rng, dim=qstate.DIM):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def ca_outcome_probs(rho_or_state):
    """(p0, p1) of the ancilla from a density matrix or RegisterState."""
    rho = rho_or_state.rho if hasattr(rho_or_state, "rho") else rho_or_state
    d = rho.diagonal().real
    p0 = sum(d[i] for i in qstate.CA_INDICES[0])
    p1 = sum(d[i] for i in qstate.CA_INDICES[1])
    return float(p0), float(p1)
