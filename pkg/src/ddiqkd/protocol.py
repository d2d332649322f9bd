"""The DDI-QKD round state machine: state choices, detection, sifting, tallies.

A session draws Alice and Bob's states, pushes each pulse through the
physical layer, and accumulates every round into a TallyMatrix indexed by
(Alice state, Bob encoded state, outcome slot).  The tally matrix is the
sole input to all estimators and to the finite-key bounds; the per-round
transcript supports audit and exact replay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelParams, DetectorMode, DetectorModel, SourceParams
from .quantum import (
    OUTCOME_ORDER,
    STATE_ORDER,
    BellOutcome,
    ProtocolState,
    decode_table,
    outcome_distribution_table,
)

__all__ = [
    "AliceStateSet",
    "KeyBlock",
    "KeyRole",
    "Party",
    "ProtocolConfig",
    "SessionResult",
    "SiftResult",
    "TallyMatrix",
    "Transcript",
    "UndefinedRateError",
    "phase_error_threestate",
    "qber_x_fourstate",
    "qber_z",
    "run_session",
    "sift",
    "tallies_from_transcript",
]

# Outcome slots in the tally matrix: the four Bell outcomes, then
# double-click rounds and no-click rounds.
SLOT_DOUBLE = 4
SLOT_NONE = 5
N_SLOTS = 6

_DECODE = decode_table()  # [bob_state, outcome] -> bit


class UndefinedRateError(ZeroDivisionError):
    """An estimator was asked for a rate whose denominator is empty."""


class AliceStateSet(Enum):
    THREE_STATE = "three"
    FOUR_STATE = "four"


class KeyRole(Enum):
    RAW = "raw"
    SIFTED = "sifted"
    CORRECTED = "corrected"
    SECRET = "secret"


class Party(Enum):
    ALICE = "alice"
    BOB = "bob"


@dataclass
class KeyBlock:
    """A bit string at some stage of distillation."""

    bits: np.ndarray
    role: KeyRole
    party: Party
    block_id: int = 0

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1:
            raise ValueError("key bits must be a 1-D array")
        if self.bits.size and self.bits.max() > 1:
            raise ValueError("key bits must be 0/1")

    def __len__(self) -> int:
        return int(self.bits.size)


@dataclass(frozen=True)
class ProtocolConfig:
    """Basis biases and Alice's state set.

    In three-state mode Alice sends H, V with probability z_basis_prob/2
    each and + with probability 1 - z_basis_prob.  Bob always uses four
    states; within a basis his two states are drawn uniformly.
    """

    rounds: int
    z_basis_prob: float = 0.875
    bob_z_basis_prob: Optional[float] = None
    alice_states: AliceStateSet = AliceStateSet.THREE_STATE

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        probs = [self.z_basis_prob]
        if self.bob_z_basis_prob is not None:
            probs.append(self.bob_z_basis_prob)
        for p in probs:
            if not 0.0 < p < 1.0:
                raise ValueError(f"basis probability must be in (0, 1), got {p}")

    @property
    def bob_z(self) -> float:
        return self.z_basis_prob if self.bob_z_basis_prob is None else self.bob_z_basis_prob

    def alice_probs(self) -> np.ndarray:
        z = self.z_basis_prob
        if self.alice_states is AliceStateSet.THREE_STATE:
            return np.array([z / 2, z / 2, 1.0 - z, 0.0])
        return np.array([z / 2, z / 2, (1 - z) / 2, (1 - z) / 2])

    def bob_probs(self) -> np.ndarray:
        z = self.bob_z
        return np.array([z / 2, z / 2, (1 - z) / 2, (1 - z) / 2])


@dataclass
class TallyMatrix:
    """Counts of every round by (Alice state, Bob encoded state, outcome slot).

    counts has shape (4, 4, 6): slots 0-3 are single-click Bell outcomes,
    slot 4 double clicks, slot 5 no clicks; the sum over all slots equals the
    number of rounds.  double_assigned (4, 4, 4) records which outcome each
    double-click round was randomly assigned to, so the key-stream statistics
    remain reconstructible while the countermeasure still sees the doubles.
    """

    counts: np.ndarray = field(default_factory=lambda: np.zeros((4, 4, N_SLOTS), dtype=np.int64))
    double_assigned: np.ndarray = field(default_factory=lambda: np.zeros((4, 4, 4), dtype=np.int64))

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.double_assigned = np.asarray(self.double_assigned, dtype=np.int64)
        if self.counts.shape != (4, 4, N_SLOTS) or self.double_assigned.shape != (4, 4, 4):
            raise ValueError("tally arrays have wrong shape")
        if self.counts.min() < 0 or self.double_assigned.min() < 0:
            raise ValueError("counts must be >= 0")
        if not np.array_equal(self.counts[:, :, SLOT_DOUBLE], self.double_assigned.sum(axis=2)):
            raise ValueError("double_assigned must split the double-click slot")

    def __add__(self, other: "TallyMatrix") -> "TallyMatrix":
        return TallyMatrix(self.counts + other.counts, self.double_assigned + other.double_assigned)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TallyMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts) and np.array_equal(
            self.double_assigned, other.double_assigned
        )

    @property
    def rounds(self) -> int:
        return int(self.counts.sum())

    def sent(self) -> np.ndarray:
        """Signals sent per (alice, bob) pairing, detected or not."""
        return self.counts.sum(axis=2)

    def detections(self) -> np.ndarray:
        """Detected rounds (single or double click) per (alice, bob)."""
        return self.counts[:, :, :SLOT_NONE].sum(axis=2)

    def effective_outcomes(self) -> np.ndarray:
        """Per-outcome counts as the key stream sees them (doubles assigned)."""
        return self.counts[:, :, :4] + self.double_assigned

    def outcome_state_counts(self) -> np.ndarray:
        """Counts N[a][b_out]: Alice state a, Bob *measured outcome state* b_out.

        Bob's outcome state combines his encoding basis with the decoded bit:
        encoding H or V with decoded bit 0 is the outcome "H", and so on.
        """
        eff = self.effective_outcomes()
        n = np.zeros((4, 4), dtype=np.int64)
        for b in range(4):
            basis_x = b >= 2
            for o in range(4):
                bit = _DECODE[b, o]
                b_out = (2 if basis_x else 0) + bit
                n[:, b_out] += eff[:, b, o]
        return n

    def double_click_total(self) -> int:
        return int(self.counts[:, :, SLOT_DOUBLE].sum())

    # Marginals used by the finite-key bounds (Z = states 0,1; X = states 2,3).
    def n_z(self) -> int:
        return int(self.detections()[:2, :2].sum())

    def n_x(self) -> int:
        return int(self.detections()[2:, 2:].sum())

    def sent_z(self) -> int:
        return int(self.sent()[:2, :2].sum())

    def sent_x(self) -> int:
        return int(self.sent()[2:, 2:].sum())

    def sent_x_given_alice(self, alice: ProtocolState) -> int:
        """Signals where Alice sent the given state and Bob encoded in X."""
        return int(self.sent()[alice.index, 2:].sum())

    def m_outcome(self, b_out: ProtocolState, alice: ProtocolState) -> int:
        """Detections with Alice sending `alice` and Bob's X outcome `b_out`."""
        if b_out.index < 2:
            raise ValueError("m(b, a) is defined for X-basis outcomes")
        return int(self.outcome_state_counts()[alice.index, b_out.index])


@dataclass
class Transcript:
    """Columnar per-round record: state choices, outcome, double-click flag.

    outcome_slot is 0-3 for the assigned Bell outcome (doubles included,
    after random assignment), or 5 for no click; the double flag marks which
    assigned rounds were double clicks.
    """

    alice: np.ndarray
    bob: np.ndarray
    outcome_slot: np.ndarray
    double: np.ndarray

    def __post_init__(self):
        self.alice = np.asarray(self.alice, dtype=np.int8)
        self.bob = np.asarray(self.bob, dtype=np.int8)
        self.outcome_slot = np.asarray(self.outcome_slot, dtype=np.int8)
        self.double = np.asarray(self.double, dtype=bool)
        n = self.alice.size
        if not (self.bob.size == self.outcome_slot.size == self.double.size == n):
            raise ValueError("transcript columns must have equal length")

    def __len__(self) -> int:
        return int(self.alice.size)

    def concat(self, other: "Transcript") -> "Transcript":
        return Transcript(
            np.concatenate([self.alice, other.alice]),
            np.concatenate([self.bob, other.bob]),
            np.concatenate([self.outcome_slot, other.outcome_slot]),
            np.concatenate([self.double, other.double]),
        )

    def save(self, path) -> None:
        """Columnar text: index, alice label, bob label, outcome, double flag."""
        labels = np.array([s.value for s in STATE_ORDER])
        outcome_labels = np.array([o.value for o in OUTCOME_ORDER] + ["", "-"])
        cols = [
            np.arange(len(self)).astype(str),
            labels[self.alice],
            labels[self.bob],
            outcome_labels[self.outcome_slot],
            np.where(self.double, "1", "0"),
        ]
        body = "\n".join(" ".join(row) for row in zip(*cols))
        text = "# round alice bob outcome double\n" + body + ("\n" if body else "")
        Path(path).write_text(text)

    @classmethod
    def load(cls, path) -> "Transcript":
        state_idx = {s.value: i for i, s in enumerate(STATE_ORDER)}
        slot_idx = {o.value: i for i, o in enumerate(OUTCOME_ORDER)}
        slot_idx["-"] = SLOT_NONE
        alice, bob, slot, double = [], [], [], []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            _, a, b, o, d = line.split()
            alice.append(state_idx[a])
            bob.append(state_idx[b])
            slot.append(slot_idx[o])
            double.append(d == "1")
        return cls(np.array(alice), np.array(bob), np.array(slot), np.array(double))


def tallies_from_transcript(transcript: Transcript) -> TallyMatrix:
    """Rebuild the tally matrix from a per-round transcript (exact replay)."""
    counts = np.zeros((4, 4, N_SLOTS), dtype=np.int64)
    double_assigned = np.zeros((4, 4, 4), dtype=np.int64)
    slot = np.where(transcript.double, SLOT_DOUBLE, transcript.outcome_slot)
    np.add.at(counts, (transcript.alice, transcript.bob, slot), 1)
    dd = transcript.double
    np.add.at(
        double_assigned,
        (transcript.alice[dd], transcript.bob[dd], transcript.outcome_slot[dd]),
        1,
    )
    return TallyMatrix(counts, double_assigned)


@dataclass
class SessionResult:
    tallies: TallyMatrix
    alice_raw: KeyBlock
    bob_raw: KeyBlock
    transcript: Transcript


def run_session(
    config: ProtocolConfig,
    source: SourceParams,
    channel: ChannelParams,
    detectors: Sequence[DetectorModel],
    seed: int,
) -> SessionResult:
    """Simulate a full honest session; deterministic for a given seed.

    Raw keys contain one bit per *detected* round (either basis, matched or
    not): Alice's encoded bit and Bob's decoded bit.  Sifting comes later.
    """
    if config.rounds == 0:
        raise ValueError("cannot run a session of 0 rounds")
    if any(d.mode is not DetectorMode.GEIGER for d in detectors):
        raise ValueError("honest sessions require Geiger-mode detectors")
    rng = np.random.default_rng(seed)
    n = config.rounds

    alice_idx = rng.choice(4, size=n, p=config.alice_probs()).astype(np.int8)
    bob_idx = rng.choice(4, size=n, p=config.bob_probs()).astype(np.int8)

    # Pauli noise acts on the transmitted qubit; tallies keep what Alice chose.
    channel_idx = alice_idx.copy()
    if channel.bit_flip_prob > 0:
        flip = rng.random(n) < channel.bit_flip_prob
        swap_z = np.array([1, 0, 2, 3], dtype=np.int8)  # H<->V
        channel_idx[flip] = swap_z[channel_idx[flip]]
    if channel.phase_flip_prob > 0:
        flip = rng.random(n) < channel.phase_flip_prob
        swap_x = np.array([0, 1, 3, 2], dtype=np.int8)  # +<->-
        channel_idx[flip] = swap_x[channel_idx[flip]]

    if source.fixed_photon_number is not None:
        k = np.full(n, source.fixed_photon_number, dtype=np.int64)
    else:
        k = rng.poisson(source.mu, size=n)
    surv = channel.survival_prob
    k_surv = rng.binomial(k, surv) if surv < 1.0 else k

    clicks = _route_and_detect(rng, channel_idx, bob_idx, k_surv, detectors)
    darks = np.array([d.dark_count_prob for d in detectors])
    if darks.any():
        clicks |= rng.random((n, 4)) < darks[None, :]

    dead = np.array([d.dead_time_ns for d in detectors])
    if dead.any():
        _apply_dead_time(clicks, dead, source.pulse_rate)

    n_clicked = clicks.sum(axis=1)
    assigned = _assign_outcomes(rng, clicks, n_clicked)
    outcome_slot = np.where(n_clicked > 0, assigned, SLOT_NONE).astype(np.int8)
    double = n_clicked >= 2

    transcript = Transcript(alice_idx, bob_idx, outcome_slot, double)
    tallies = tallies_from_transcript(transcript)

    det = n_clicked > 0
    alice_bits = _STATE_BIT[alice_idx[det]]
    bob_bits = _DECODE[bob_idx[det], assigned[det]].astype(np.uint8)
    return SessionResult(
        tallies,
        KeyBlock(alice_bits, KeyRole.RAW, Party.ALICE),
        KeyBlock(bob_bits, KeyRole.RAW, Party.BOB),
        transcript,
    )


_STATE_BIT = np.array([0, 1, 0, 1], dtype=np.uint8)


def _route_and_detect(rng, channel_idx, bob_idx, k_surv, detectors) -> np.ndarray:
    """Route every surviving photon and fire detectors; returns (n, 4) bools."""
    n = channel_idx.size
    clicks = np.zeros((n, 4), dtype=bool)
    total = int(k_surv.sum())
    if total == 0:
        return clicks
    dist_cdf = np.cumsum(outcome_distribution_table().reshape(16, 4), axis=1)
    photon_round = np.repeat(np.arange(n), k_surv)
    cell = (channel_idx.astype(np.int64) * 4 + bob_idx)[photon_round]
    u = rng.random(total)
    port = (dist_cdf[cell] < u[:, None]).sum(axis=1)
    port = np.minimum(port, 3)  # guard the u ~ 1.0 edge
    eff = np.array([d.efficiency for d in detectors])
    fired = rng.random(total) < eff[port]
    clicks[photon_round[fired], port[fired]] = True
    return clicks


def _apply_dead_time(clicks: np.ndarray, dead_ns: np.ndarray, pulse_rate: float) -> None:
    """Suppress clicks falling inside each detector's veto window, in place."""
    period_ns = 1e9 / pulse_rate
    last = np.full(4, -np.inf)
    for r in np.flatnonzero(clicks.any(axis=1)):
        t = r * period_ns
        for i in np.flatnonzero(clicks[r]):
            if dead_ns[i] > 0 and t - last[i] < dead_ns[i]:
                clicks[r, i] = False
            else:
                last[i] = t


def _assign_outcomes(rng, clicks: np.ndarray, n_clicked: np.ndarray) -> np.ndarray:
    """Pick the recorded outcome per round: the click, or uniform among clicks."""
    n = clicks.shape[0]
    assigned = np.zeros(n, dtype=np.int8)
    any_click = n_clicked > 0
    # index of the (target)-th set bit per row, target uniform in [1, n_clicked]
    r = rng.random(n)
    target = np.floor(r * n_clicked).astype(np.int64) + 1
    cum = clicks.cumsum(axis=1)
    assigned[any_click] = (cum[any_click] < target[any_click, None]).sum(axis=1).astype(np.int8)
    return assigned


@dataclass
class SiftResult:
    alice_key: KeyBlock
    bob_key: KeyBlock
    matched_z_rounds: int
    matched_x_rounds: int
    mismatched_rounds: int


def sift(transcript: Transcript) -> SiftResult:
    """Key rounds are detections where both parties chose Z.

    X-basis and mismatched-basis detections feed the estimators only; rounds
    without a click were already discarded by loss postselection.
    """
    detected = transcript.outcome_slot != SLOT_NONE
    alice_z = transcript.alice < 2
    bob_z = transcript.bob < 2
    keep = detected & alice_z & bob_z
    alice_bits = _STATE_BIT[transcript.alice[keep]]
    bob_bits = _DECODE[
        transcript.bob[keep].astype(np.int64), transcript.outcome_slot[keep].astype(np.int64)
    ].astype(np.uint8)
    matched_x = int((detected & ~alice_z & ~bob_z).sum())
    mismatched = int((detected & (alice_z != bob_z)).sum())
    return SiftResult(
        KeyBlock(alice_bits, KeyRole.SIFTED, Party.ALICE),
        KeyBlock(bob_bits, KeyRole.SIFTED, Party.BOB),
        int(keep.sum()),
        matched_x,
        mismatched,
    )


def qber_z(tallies: TallyMatrix) -> float:
    """Error rate of the sifted Z key: decoded bit vs Alice's bit."""
    eff = tallies.effective_outcomes()
    total = 0
    errors = 0
    for a in range(2):
        for b in range(2):
            for o in range(4):
                c = int(eff[a, b, o])
                total += c
                if _DECODE[b, o] != _STATE_BIT[a]:
                    errors += c
    if total == 0:
        raise UndefinedRateError("no matched-Z detections")
    return errors / total


def qber_x_fourstate(tallies: TallyMatrix) -> float:
    """Four-state X error rate (N+- + N-+) / (N++ + N-- + N+- + N-+)."""
    n = tallies.outcome_state_counts()
    plus, minus = ProtocolState.PLUS.index, ProtocolState.MINUS.index
    num = int(n[plus, minus] + n[minus, plus])
    den = int(n[plus, plus] + n[minus, minus] + n[plus, minus] + n[minus, plus])
    if den == 0:
        raise UndefinedRateError("no matched-X detections")
    return num / den


def phase_error_threestate(tallies: TallyMatrix) -> float:
    """Phase error rate from matched and mismatched statistics.

    N+-/(N++ + N+-) + [N_{H+}/(N_{H+}+N_{H-}) + N_{V+}/(N_{V+}+N_{V-}) - 1]/2,
    clamped into [0, 1]; finite samples can push the bracket slightly negative.
    """
    n = tallies.outcome_state_counts()
    h, v = ProtocolState.H.index, ProtocolState.V.index
    plus, minus = ProtocolState.PLUS.index, ProtocolState.MINUS.index
    d_matched = int(n[plus, plus] + n[plus, minus])
    d_h = int(n[h, plus] + n[h, minus])
    d_v = int(n[v, plus] + n[v, minus])
    if d_matched == 0 or d_h == 0 or d_v == 0:
        raise UndefinedRateError("a mismatched-statistics pool is empty")
    val = n[plus, minus] / d_matched + 0.5 * (n[h, plus] / d_h + n[v, plus] / d_v - 1.0)
    return min(1.0, max(0.0, float(val)))
