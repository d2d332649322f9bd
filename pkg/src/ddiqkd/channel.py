"""Stochastic physical layer: photon statistics, loss, and threshold detectors.

The source is a phase-randomized weak laser (Poisson photon number), the
fiber plus Bob's apparatus act as a beam splitter (binomial thinning), and
the four analyzer outputs are threshold detectors that either avalanche on
single photons (Geiger mode) or compare incident optical energy against a
threshold (linear mode, the regime a blinding attacker forces).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .quantum import BellOutcome, OUTCOME_ORDER

__all__ = [
    "ChannelParams",
    "DetectionEvent",
    "DetectorMode",
    "DetectorModel",
    "SourceParams",
    "default_detectors",
    "detect",
    "detect_linear",
    "draw_photon_number",
    "transmit",
]


@dataclass(frozen=True)
class SourceParams:
    """Alice's pulsed laser source.

    mu is the mean photon number per pulse; fixed_photon_number, when set,
    bypasses the Poisson draw and injects exactly that many photons (used by
    calibration tests and demos).
    """

    mu: float
    pulse_rate: float = 625e6
    fixed_photon_number: Optional[int] = None

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.pulse_rate <= 0:
            raise ValueError(f"pulse_rate must be > 0, got {self.pulse_rate}")
        if self.fixed_photon_number is not None and self.fixed_photon_number < 0:
            raise ValueError("fixed_photon_number must be >= 0")


@dataclass(frozen=True)
class ChannelParams:
    """Fiber plus Bob-apparatus loss, and optional Pauli noise on the qubit.

    bit_flip_prob swaps H<->V (errors in the Z basis); phase_flip_prob swaps
    +<->- (errors in the X basis).  Both default to 0 for a clean channel.
    """

    distance_km: float = 0.0
    fiber_loss_db_per_km: float = 0.2
    bob_insertion_loss_db: float = 7.1
    bit_flip_prob: float = 0.0
    phase_flip_prob: float = 0.0

    def __post_init__(self):
        for name in ("distance_km", "fiber_loss_db_per_km", "bob_insertion_loss_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("bit_flip_prob", "phase_flip_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    @property
    def total_loss_db(self) -> float:
        return self.fiber_loss_db_per_km * self.distance_km + self.bob_insertion_loss_db

    @property
    def survival_prob(self) -> float:
        return 10.0 ** (-self.total_loss_db / 10.0)

    @classmethod
    def from_attenuation(cls, attenuation_db: float, **kwargs) -> "ChannelParams":
        """Channel whose fiber contributes exactly attenuation_db of loss."""
        loss = kwargs.pop("fiber_loss_db_per_km", 0.2)
        if loss <= 0:
            raise ValueError("fiber_loss_db_per_km must be > 0 to map attenuation")
        return cls(
            distance_km=attenuation_db / loss, fiber_loss_db_per_km=loss, **kwargs
        )


class DetectorMode(Enum):
    GEIGER = "geiger"
    LINEAR = "linear"


@dataclass(frozen=True)
class DetectorModel:
    """One threshold detector behind one Bell output port.

    efficiency and dark_count_prob apply in Geiger mode; threshold (relative
    optical energy units) applies in linear mode.  dead_time_ns = 0 disables
    the veto window.  efficiency and dark_count_prob defaults are calibration
    constants, not measured device values.
    """

    efficiency: float = 0.40
    dark_count_prob: float = 1e-9
    dead_time_ns: float = 0.0
    threshold: float = 1.0
    mode: DetectorMode = DetectorMode.GEIGER

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")
        if not 0.0 <= self.dark_count_prob <= 1.0:
            raise ValueError("dark_count_prob must be in [0, 1]")
        if self.dead_time_ns < 0:
            raise ValueError("dead_time_ns must be >= 0")

    def blinded(self) -> "DetectorModel":
        return replace(self, mode=DetectorMode.LINEAR)


def default_detectors(**kwargs) -> tuple[DetectorModel, DetectorModel, DetectorModel, DetectorModel]:
    """Four identical detectors, one per Bell outcome."""
    d = DetectorModel(**kwargs)
    return (d, d, d, d)


@dataclass(frozen=True)
class DetectionEvent:
    """Outcome of one gate: which detectors clicked and what Bob records."""

    round_index: int
    clicked: tuple[int, ...]
    assigned: Optional[BellOutcome]
    double_click: bool

    def __post_init__(self):
        if self.double_click != (len(self.clicked) >= 2):
            raise ValueError("double_click flag inconsistent with clicked set")
        if (self.assigned is not None) != (len(self.clicked) >= 1):
            raise ValueError("assigned must be populated iff at least one click")


def draw_photon_number(source: SourceParams, rng: np.random.Generator) -> int:
    """Photon number of one pulse: Poisson(mu), or the fixed override."""
    if source.fixed_photon_number is not None:
        return source.fixed_photon_number
    return int(rng.poisson(source.mu))


def transmit(k: int, channel: ChannelParams, rng: np.random.Generator) -> int:
    """Surviving photon count after fiber and Bob-apparatus loss."""
    if k < 0:
        raise ValueError("photon count must be >= 0")
    if k == 0:
        return 0
    return int(rng.binomial(k, channel.survival_prob))


def detect(
    outcome_distribution: np.ndarray,
    surviving_photons: int,
    detectors: Sequence[DetectorModel],
    rng: np.random.Generator,
    round_index: int = 0,
    time_ns: Optional[float] = None,
    last_click_ns: Optional[np.ndarray] = None,
) -> DetectionEvent:
    """Geiger-mode detection of one round.

    Each surviving photon routes independently to one of the four ports per
    the Bell-outcome distribution and fires its detector with probability
    `efficiency`; dark counts add independent clicks.  If time_ns and
    last_click_ns (mutable, length 4, updated in place) are supplied, clicks
    within a detector's dead-time window are suppressed.  Multiple clicks are
    flagged and the recorded outcome is drawn uniformly among them.
    """
    if any(d.mode is not DetectorMode.GEIGER for d in detectors):
        raise ValueError("detect() requires all detectors in Geiger mode")
    clicked = np.zeros(4, dtype=bool)
    if surviving_photons > 0:
        ports = rng.choice(4, size=surviving_photons, p=outcome_distribution)
        eff = np.array([d.efficiency for d in detectors])
        fired = rng.random(surviving_photons) < eff[ports]
        clicked[np.unique(ports[fired])] = True
    darks = np.array([d.dark_count_prob for d in detectors])
    clicked |= rng.random(4) < darks

    if time_ns is not None and last_click_ns is not None:
        for i in np.flatnonzero(clicked):
            dead = detectors[i].dead_time_ns
            if dead > 0 and time_ns - last_click_ns[i] < dead:
                clicked[i] = False
            else:
                last_click_ns[i] = time_ns

    hit = tuple(int(i) for i in np.flatnonzero(clicked))
    if not hit:
        return DetectionEvent(round_index, (), None, False)
    pick = hit[0] if len(hit) == 1 else int(rng.choice(hit))
    return DetectionEvent(round_index, hit, OUTCOME_ORDER[pick], len(hit) >= 2)


def detect_linear(
    optical_energy_per_detector: Sequence[float],
    detectors: Sequence[DetectorModel],
    rng: Optional[np.random.Generator] = None,
) -> DetectionEvent:
    """Linear-regime (blinded) detection: detector i clicks iff energy_i > threshold_i.

    Click pattern is deterministic.  For multi-click events the recorded
    outcome is drawn uniformly among the clicked detectors when an rng is
    given, else the lowest-index one.
    """
    modes = {d.mode for d in detectors}
    if modes != {DetectorMode.LINEAR}:
        raise ValueError("detect_linear() requires all detectors in linear mode")
    energies = np.asarray(optical_energy_per_detector, dtype=float)
    if energies.shape != (4,):
        raise ValueError("expected one energy per detector (4 values)")
    if np.any(energies < 0):
        raise ValueError("energies must be >= 0")
    thresholds = np.array([d.threshold for d in detectors])
    hit = tuple(int(i) for i in np.flatnonzero(energies > thresholds))
    if not hit:
        return DetectionEvent(0, (), None, False)
    if len(hit) == 1 or rng is None:
        pick = hit[0]
    else:
        pick = int(rng.choice(hit))
    return DetectionEvent(0, hit, OUTCOME_ORDER[pick], len(hit) >= 2)
