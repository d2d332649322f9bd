"""Experiment configuration: a structured JSON text file, parse-validated."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .adversary import BlindingConfig, SiphoningConfig
from .channel import ChannelParams, DetectorModel, SourceParams
from .protocol import AliceStateSet, ProtocolConfig

__all__ = ["ConfigError", "ExperimentConfig", "default_mu_grid"]


class ConfigError(ValueError):
    """The experiment configuration is missing, malformed, or inconsistent."""


def default_mu_grid() -> list[float]:
    """Geometric intensity grid covering deep-loss to short-link optima."""
    return [float(m) for m in np.geomspace(1e-4, 0.9, 28)]


SCENARIOS = ("honest", "blinding", "siphoning")


@dataclass
class ExperimentConfig:
    scenario: str = "honest"
    rounds: int = 100_000
    seed: int = 1
    block_size: int = 10_000_000
    eps_sec: float = 2e-9
    eps_cor: float = 2e-9
    source: SourceParams = field(default_factory=lambda: SourceParams(mu=0.5))
    channel: ChannelParams = field(default_factory=ChannelParams)
    detector: DetectorModel = field(default_factory=DetectorModel)
    protocol_kwargs: dict = field(default_factory=dict)
    sweep_attenuation_db: Optional[list[float]] = None
    sweep_distance_km: Optional[list[float]] = None
    mu_grid: list[float] = field(default_factory=default_mu_grid)
    blinding: BlindingConfig = field(default_factory=BlindingConfig)
    siphoning: SiphoningConfig = field(default_factory=SiphoningConfig)
    output_dir: str = "."

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.rounds <= 0:
            raise ConfigError("rounds must be > 0")
        if self.block_size <= 0:
            raise ConfigError("block_size must be > 0")
        for name in ("eps_sec", "eps_cor"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in (0, 1)")
        if not self.mu_grid:
            raise ConfigError("mu_grid must be nonempty")
        if any(m <= 0 for m in self.mu_grid):
            raise ConfigError("mu_grid entries must be > 0")

    def protocol(self, rounds: Optional[int] = None) -> ProtocolConfig:
        return ProtocolConfig(rounds=rounds or self.rounds, **self.protocol_kwargs)

    def detectors(self) -> tuple[DetectorModel, DetectorModel, DetectorModel, DetectorModel]:
        return (self.detector,) * 4

    def sweep_points(self) -> list[float]:
        """Sweep axis as attenuation values in dB (fiber part only)."""
        if self.sweep_attenuation_db is not None and self.sweep_distance_km is not None:
            raise ConfigError("give either an attenuation sweep or a distance sweep, not both")
        if self.sweep_attenuation_db is not None:
            pts = list(self.sweep_attenuation_db)
        elif self.sweep_distance_km is not None:
            loss = self.channel.fiber_loss_db_per_km
            pts = [d * loss for d in self.sweep_distance_km]
        else:
            raise ConfigError("no sweep axis configured")
        if not pts:
            raise ConfigError("sweep axis must be nonempty")
        if any(p < 0 for p in pts):
            raise ConfigError("sweep points must be >= 0 dB")
        return pts

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        try:
            return cls._build(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _build(cls, raw: dict) -> "ExperimentConfig":
        kwargs = {}
        for key in ("scenario", "rounds", "seed", "block_size", "eps_sec", "eps_cor", "output_dir"):
            if key in raw:
                kwargs[key] = raw[key]
        if "source" in raw:
            kwargs["source"] = SourceParams(**raw["source"])
        if "channel" in raw:
            ch = dict(raw["channel"])
            att = ch.pop("attenuation_db", None)
            if att is not None:
                kwargs["channel"] = ChannelParams.from_attenuation(att, **ch)
            else:
                kwargs["channel"] = ChannelParams(**ch)
        if "detector" in raw:
            det = dict(raw["detector"])
            kwargs["detector"] = DetectorModel(**det)
        if "protocol" in raw:
            proto = dict(raw["protocol"])
            if "alice_states" in proto:
                proto["alice_states"] = AliceStateSet(proto["alice_states"])
            kwargs["protocol_kwargs"] = proto
        if "sweep" in raw:
            sweep = raw["sweep"]
            kwargs["sweep_attenuation_db"] = sweep.get("attenuation_db")
            kwargs["sweep_distance_km"] = sweep.get("distance_km")
            if "mu_grid" in sweep:
                kwargs["mu_grid"] = list(sweep["mu_grid"])
        if "blinding" in raw:
            kwargs["blinding"] = BlindingConfig(**raw["blinding"])
        if "siphoning" in raw:
            s = dict(raw["siphoning"])
            if "photon_numbers" in s:
                s["photon_numbers"] = tuple(s["photon_numbers"])
            kwargs["siphoning"] = SiphoningConfig(**s)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        return cls.from_json(p.read_text())
