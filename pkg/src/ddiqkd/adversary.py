"""Attack models and the detection-statistics countermeasure.

Two attacks are simulated end to end: detector blinding (bright classical
pulses force linear-mode detectors, with Eve crafting faked states after an
intercept-and-resend measurement) and multi-photon siphoning (a malicious
detector unit reads Bob's setting from many identical photon copies via
unambiguous state discrimination and forges consistent Bell announcements).
The countermeasure cross-checks the observed outcome pattern against the
exact Bell statistics and monitors double clicks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .channel import ChannelParams, DetectorMode, DetectorModel, SourceParams
from .protocol import (
    SLOT_NONE,
    ProtocolConfig,
    SessionResult,
    TallyMatrix,
    Transcript,
    UndefinedRateError,
    run_session,
    tallies_from_transcript,
)
from .quantum import outcome_distribution_table, usd_success_lower_bound

__all__ = [
    "BlindingConfig",
    "CountermeasureConfig",
    "CountermeasureReport",
    "SiphoningConfig",
    "SiphoningResult",
    "attack_detection_rate",
    "countermeasure_statistics",
    "run_blinding_attack",
    "run_intercept_resend",
    "run_siphoning_attack",
]

_STATE_BIT = np.array([0, 1, 0, 1], dtype=np.uint8)


@dataclass(frozen=True)
class SiphoningConfig:
    """Photon-number encoding of Eve's measurement record.

    photon_numbers maps Eve's (basis, outcome) = H, V, +, - to the injected
    photon count n_j; the counts must be pairwise distinct and well above
    the n = 3 discrimination threshold.
    """

    photon_numbers: tuple[int, int, int, int] = (11, 13, 15, 17)
    usd_success_override: Optional[float] = None

    def __post_init__(self):
        if len(self.photon_numbers) != 4:
            raise ValueError("need one photon number per BB84 state")
        if len(set(self.photon_numbers)) != 4:
            raise ValueError("photon numbers must be pairwise distinct")
        if any(n < 3 for n in self.photon_numbers):
            raise ValueError("photon numbers must be >= 3")
        if self.usd_success_override is not None and not 0.0 <= self.usd_success_override <= 1.0:
            raise ValueError("usd_success_override must be in [0, 1]")

    def success_probabilities(self) -> np.ndarray:
        if self.usd_success_override is not None:
            return np.full(4, self.usd_success_override)
        return np.array([usd_success_lower_bound(n) for n in self.photon_numbers])


@dataclass
class SiphoningResult:
    tallies: TallyMatrix
    transcript: Transcript
    eve_bits: np.ndarray
    conclusive: np.ndarray
    eve_basis_x: np.ndarray


def run_siphoning_attack(
    config: SiphoningConfig,
    protocol_config: ProtocolConfig,
    seed: int,
) -> SiphoningResult:
    """Three-phase siphoning run with the detector unit acting for Eve.

    Phase 1: Eve intercepts Alice's pulse in a random basis and resends the
    photon-number code of her outcome.  Phase 2: the detector unit reads the
    photon number (Eve's basis and bit) and attempts discrimination of Bob's
    setting, succeeding with the discrimination bound (or the override).
    Phase 3: on success with matching Eve/Bob bases it announces a Bell
    outcome consistent with the expected statistics, otherwise no click.
    """
    rounds = protocol_config.rounds
    if rounds == 0:
        raise ValueError("cannot run an attack over 0 rounds")
    rng = np.random.default_rng(seed)
    alice_idx = rng.choice(4, size=rounds, p=protocol_config.alice_probs()).astype(np.int8)
    bob_idx = rng.choice(4, size=rounds, p=protocol_config.bob_probs()).astype(np.int8)

    # Eve measures in Z or X uniformly; matching basis reproduces Alice's
    # state, the other basis yields a uniform outcome within Eve's basis.
    eve_basis_x = rng.random(rounds) < 0.5
    alice_basis_x = alice_idx >= 2
    coin = rng.integers(0, 2, size=rounds).astype(np.int8)
    eve_idx = np.where(
        eve_basis_x == alice_basis_x,
        alice_idx,
        np.where(eve_basis_x, 2 + coin, coin),
    ).astype(np.int8)

    usd_p = config.success_probabilities()
    usd_ok = rng.random(rounds) < usd_p[eve_idx]
    basis_match = eve_basis_x == (bob_idx >= 2)
    conclusive = usd_ok & basis_match

    # Announce an outcome drawn from the honest Bell distribution of
    # (Eve's state, Bob's state); inconclusive rounds stay silent.
    dist_cdf = np.cumsum(outcome_distribution_table().reshape(16, 4), axis=1)
    cell = eve_idx.astype(np.int64) * 4 + bob_idx
    u = rng.random(rounds)
    outcome = np.minimum((dist_cdf[cell] < u[:, None]).sum(axis=1), 3).astype(np.int8)
    outcome_slot = np.where(conclusive, outcome, SLOT_NONE).astype(np.int8)

    transcript = Transcript(alice_idx, bob_idx, outcome_slot, np.zeros(rounds, dtype=bool))
    return SiphoningResult(
        tallies_from_transcript(transcript),
        transcript,
        _STATE_BIT[eve_idx],
        conclusive,
        eve_basis_x,
    )


def attack_detection_rate(tallies: TallyMatrix) -> float:
    """Fraction of rounds with a Bell announcement (conclusive fraction)."""
    rounds = tallies.rounds
    if rounds == 0:
        raise UndefinedRateError("no rounds tallied")
    return float(tallies.detections().sum()) / rounds


def run_intercept_resend(
    protocol_config: ProtocolConfig,
    seed: int,
    eve_basis: str = "random",
) -> TallyMatrix:
    """Textbook intercept-and-resend on a lossless single-photon channel.

    Eve measures each pulse in a random basis ("random") or always in Z
    ("z"), and resends her outcome state; Bob's analyzer then sees the
    honest Bell statistics of (Eve's state, Bob's state).
    """
    rounds = protocol_config.rounds
    if rounds == 0:
        raise ValueError("cannot run an attack over 0 rounds")
    if eve_basis not in ("random", "z"):
        raise ValueError("eve_basis must be 'random' or 'z'")
    rng = np.random.default_rng(seed)
    alice_idx = rng.choice(4, size=rounds, p=protocol_config.alice_probs()).astype(np.int8)
    bob_idx = rng.choice(4, size=rounds, p=protocol_config.bob_probs()).astype(np.int8)

    if eve_basis == "random":
        eve_basis_x = rng.random(rounds) < 0.5
    else:
        eve_basis_x = np.zeros(rounds, dtype=bool)
    alice_basis_x = alice_idx >= 2
    # In Eve's basis the projection of a mismatched-basis state is uniform.
    coin = rng.integers(0, 2, size=rounds).astype(np.int8)
    eve_idx = np.where(
        eve_basis_x == alice_basis_x,
        alice_idx,
        np.where(eve_basis_x, 2 + coin, coin),
    ).astype(np.int8)

    dist_cdf = np.cumsum(outcome_distribution_table().reshape(16, 4), axis=1)
    cell = eve_idx.astype(np.int64) * 4 + bob_idx
    u = rng.random(rounds)
    outcome = np.minimum((dist_cdf[cell] < u[:, None]).sum(axis=1), 3).astype(np.int8)
    transcript = Transcript(alice_idx, bob_idx, outcome, np.zeros(rounds, dtype=bool))
    return tallies_from_transcript(transcript)


def faked_state_energies(pulse_energy: float) -> Callable[[int, int], np.ndarray]:
    """Default bright-pulse strategy: energy splits across the analyzer ports
    exactly as the Bell statistics of (Eve's resent state, Bob's state)."""
    table = outcome_distribution_table()

    def strategy(eve_idx: int, bob_idx: int) -> np.ndarray:
        return pulse_energy * table[eve_idx, bob_idx]

    return strategy


@dataclass(frozen=True)
class BlindingConfig:
    """Bright-light blinding of the analyzer detectors.

    blinding_power 0 disables the attack entirely (the run degrades to the
    honest session).  pulse_energy is Eve's faked-pulse energy in units of
    the nominal click threshold; the port-split strategy is pluggable.
    """

    blinding_power: float = 1.0
    pulse_energy: float = 2.2
    strategy: Optional[Callable[[int, int], np.ndarray]] = None
    disabled_outcomes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.blinding_power < 0 or self.pulse_energy < 0:
            raise ValueError("energies must be >= 0")

    def port_energies(self) -> Callable[[int, int], np.ndarray]:
        return self.strategy or faked_state_energies(self.pulse_energy)


def run_blinding_attack(
    config: BlindingConfig,
    protocol_config: ProtocolConfig,
    detectors: Sequence[DetectorModel],
    seed: int,
    source: Optional[SourceParams] = None,
    channel: Optional[ChannelParams] = None,
) -> TallyMatrix:
    """Intercept-and-resend with bright pulses against blinded detectors.

    With blinding_power > 0 the detectors must be in linear mode; clicks are
    threshold comparisons on the per-port energies of Eve's faked pulse.
    Double clicks get randomly assigned, as the honest protocol would do.
    disabled_outcomes models a reduced analyzer (ports removed).
    """
    rounds = protocol_config.rounds
    if rounds == 0:
        raise ValueError("cannot run an attack over 0 rounds")
    if config.blinding_power == 0:
        src = source or SourceParams(mu=0.5, fixed_photon_number=1)
        ch = channel or ChannelParams(bob_insertion_loss_db=0.0)
        return run_session(protocol_config, src, ch, detectors, seed).tallies
    if any(d.mode is not DetectorMode.LINEAR for d in detectors):
        raise ValueError("blinding requires all detectors in linear mode")

    rng = np.random.default_rng(seed)
    alice_idx = rng.choice(4, size=rounds, p=protocol_config.alice_probs()).astype(np.int8)
    bob_idx = rng.choice(4, size=rounds, p=protocol_config.bob_probs()).astype(np.int8)
    eve_basis_x = rng.random(rounds) < 0.5
    alice_basis_x = alice_idx >= 2
    coin = rng.integers(0, 2, size=rounds).astype(np.int8)
    eve_idx = np.where(
        eve_basis_x == alice_basis_x,
        alice_idx,
        np.where(eve_basis_x, 2 + coin, coin),
    ).astype(np.int8)

    strategy = config.port_energies()
    energy_table = np.stack(
        [strategy(a, b) for a in range(4) for b in range(4)]
    ).reshape(4, 4, 4)
    thresholds = np.array([d.threshold for d in detectors])
    clicks = energy_table[eve_idx, bob_idx] > thresholds[None, :]
    for port in config.disabled_outcomes:
        clicks[:, port] = False

    n_clicked = clicks.sum(axis=1)
    r = rng.random(rounds)
    target = np.floor(r * n_clicked).astype(np.int64) + 1
    cum = clicks.cumsum(axis=1)
    assigned = np.zeros(rounds, dtype=np.int8)
    any_click = n_clicked > 0
    assigned[any_click] = (cum[any_click] < target[any_click, None]).sum(axis=1).astype(np.int8)
    outcome_slot = np.where(any_click, assigned, SLOT_NONE).astype(np.int8)
    transcript = Transcript(alice_idx, bob_idx, outcome_slot, n_clicked >= 2)
    return tallies_from_transcript(transcript)


@dataclass(frozen=True)
class CountermeasureConfig:
    p_value_threshold: float = 1e-6
    double_click_rate_threshold: float = 0.05
    impossible_outcome_min: int = 5
    min_expected_per_bin: float = 5.0


@dataclass
class CountermeasureReport:
    double_click_rate: float
    chi2_stat: float
    dof: int
    p_value: float
    impossible_count: int
    insufficient_statistics: bool
    verdict: str
    reasons: tuple[str, ...]

    def to_text(self) -> str:
        lines = [
            f"double_click_rate = {self.double_click_rate!r}",
            f"chi2_stat = {self.chi2_stat!r}",
            f"dof = {self.dof}",
            f"p_value = {self.p_value!r}",
            f"impossible_count = {self.impossible_count}",
            f"insufficient_statistics = {int(self.insufficient_statistics)}",
            f"verdict = {self.verdict}",
            f"reasons = {','.join(self.reasons) if self.reasons else '-'}",
        ]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def countermeasure_statistics(
    tallies: TallyMatrix,
    config: CountermeasureConfig = CountermeasureConfig(),
) -> CountermeasureReport:
    """Goodness-of-fit of the observed clicks against the exact Bell pattern.

    Single-click outcome frequencies in every populated (Alice, Bob) cell
    are chi-square tested against the ideal distribution; clicks landing on
    zero-probability outcomes and the double-click rate are monitored
    separately.  Verdict is "attack" when any monitor trips.
    """
    expected_dist = outcome_distribution_table()
    singles = tallies.counts[:, :, :4]
    chi2 = 0.0
    dof = 0
    impossible = 0
    insufficient = False
    for a in range(4):
        for b in range(4):
            cell_total = int(singles[a, b].sum())
            if cell_total == 0:
                continue
            p = expected_dist[a, b]
            support = p > 0
            impossible += int(singles[a, b][~support].sum())
            exp = cell_total * p[support]
            if np.any(exp < config.min_expected_per_bin):
                insufficient = True
            obs = singles[a, b][support]
            chi2 += float(((obs - exp) ** 2 / exp).sum())
            dof += int(support.sum()) - 1
    p_value = float(stats.chi2.sf(chi2, dof)) if dof > 0 else 1.0

    detections = int(tallies.detections().sum())
    doubles = tallies.double_click_total()
    double_rate = doubles / detections if detections else 0.0

    reasons = []
    if dof > 0 and p_value < config.p_value_threshold:
        reasons.append("bell_pattern_chi2")
    if double_rate > config.double_click_rate_threshold:
        reasons.append("double_click_rate")
    if impossible >= config.impossible_outcome_min:
        reasons.append("impossible_outcomes")
    verdict = "attack" if reasons else "clean"
    return CountermeasureReport(
        double_click_rate=double_rate,
        chi2_stat=chi2,
        dof=dof,
        p_value=p_value,
        impossible_count=impossible,
        insufficient_statistics=insufficient,
        verdict=verdict,
        reasons=tuple(reasons),
    )
