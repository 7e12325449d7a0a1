"""Feedback policy logic and the pulse-phase ledger.

The single eigenvalue/bit convention lives here: a +1 stabilizer eigenvalue
corresponds to the ancilla read out as bit 1 (dark).  Every module maps
outcomes through these helpers rather than hard-coding the sign.

The ledger tracks, per rf channel, the angular frequency, the reference time
t_start that pulse phases are computed from, and an accumulated Stark offset.
Shifting t_start re-zeroes a repeated pulse block's internal phases; Stark
offsets feed the compensation of later pulses.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

PLUS_EIGENVALUE_BIT = 1

POLICY_MODES = ("none", "stabilize_Z", "stabilize_X", "stabilize_bell")


def expected_bit(eigenvalue: int) -> int:
    """Ancilla bit announcing the given stabilizer eigenvalue."""
    if eigenvalue == 1:
        return PLUS_EIGENVALUE_BIT
    if eigenvalue == -1:
        return 1 - PLUS_EIGENVALUE_BIT
    raise ValueError(f"eigenvalue must be +1 or -1, got {eigenvalue}")


def eigenvalue_from_bit(bit: int) -> int:
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    return 1 if bit == PLUS_EIGENVALUE_BIT else -1


@dataclass(frozen=True)
class FeedbackPolicy:
    """What to stabilize and how reliably the corrections execute.

    ``correction_fidelity`` is the probability that a commanded correction
    applies its ideal unitary; otherwise the pulse misfires and instead
    deposits a depolarizing kick of strength ``correction_kick`` on the
    addressed ion.
    """

    mode: str = "none"
    target_z: int = 1
    target_x: int = 1
    correction_fidelity: float = 1.0
    correction_kick: float = 1.0

    def __post_init__(self):
        if self.mode not in POLICY_MODES:
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.target_z not in (1, -1) or self.target_x not in (1, -1):
            raise ValueError("targets must be +1 or -1")
        if not 0.0 <= self.correction_fidelity <= 1.0:
            raise ValueError("correction_fidelity must be in [0, 1]")
        if not 0.0 <= self.correction_kick <= 1.0:
            raise ValueError("correction_kick must be in [0, 1]")


def feedback_decision(policy: FeedbackPolicy,
                      outcomes: Mapping[str, int]) -> list[str]:
    """Corrections to apply, in order, given this round's classified bits.

    ``outcomes`` maps basis ("Z"/"X") to the classified ancilla bit.  A
    correction is commanded whenever the measured eigenvalue disagrees with
    the policy target; in Bell mode C_Z is decided first, then C_X.
    """
    if policy.mode == "none":
        return []
    wanted = []
    if policy.mode in ("stabilize_Z", "stabilize_bell"):
        wanted.append(("Z", policy.target_z, "C_Z"))
    if policy.mode in ("stabilize_X", "stabilize_bell"):
        wanted.append(("X", policy.target_x, "C_X"))
    corrections = []
    for basis, target, kind in wanted:
        if basis not in outcomes:
            raise ValueError(f"policy {policy.mode!r} needs a {basis!r} outcome")
        if eigenvalue_from_bit(outcomes[basis]) != target:
            corrections.append(kind)
    return corrections


@dataclass(frozen=True)
class PhaseChannel:
    omega: float
    t_start: float = 0.0
    stark_offset: float = 0.0

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("channel frequency must be >= 0")
        if not np.isfinite(self.stark_offset):
            raise ValueError("stark offset must be finite")


@dataclass(frozen=True)
class PhaseLedger:
    """Per-channel phase bookkeeping.  Immutable; updates return new ledgers."""

    channels: Mapping[str, PhaseChannel] = field(default_factory=dict)
    op_channels: Mapping[str, str] = field(default_factory=dict)

    def channel(self, label: str) -> PhaseChannel:
        try:
            return self.channels[label]
        except KeyError:
            raise ValueError(f"unknown channel {label!r}") from None


def phase_resolve(ledger: PhaseLedger, channel: str, t: float) -> float:
    """Pulse phase omega (t - t_start) + stark_offset, wrapped to [0, 2pi)."""
    ch = ledger.channel(channel)
    phase = ch.omega * (t - ch.t_start) + ch.stark_offset
    return float(np.mod(phase, 2 * np.pi))


def shift_reference(ledger: PhaseLedger, channel: str, t_start: float) -> PhaseLedger:
    """Move a channel's phase reference time; later resolutions use it."""
    ch = ledger.channel(channel)
    channels = dict(ledger.channels)
    channels[channel] = replace(ch, t_start=t_start)
    return replace(ledger, channels=channels)


def stark_update(ledger: PhaseLedger, op_kind: str, delta: float) -> PhaseLedger:
    """Accumulate a Stark-shift offset on the channel serving ``op_kind``.

    Unmapped kinds fall through to a channel of the same name; offsets add
    over repeated applications.
    """
    if not np.isfinite(delta):
        raise ValueError("stark shift must be finite")
    label = ledger.op_channels.get(op_kind, op_kind)
    ch = ledger.channel(label)
    channels = dict(ledger.channels)
    channels[label] = replace(ch, stark_offset=ch.stark_offset + delta)
    return replace(ledger, channels=channels)
