"""Finite-key security bounds: single-photon counts, phase error, key length.

The chain is: a multi-photon correction G turns sent-signal counts into a
lower bound on single-photon detections; upper-bounded conditional
frequencies from the matched and mismatched basis pools give the phase
error rate; the extractable key length follows from the usual
entropic bound with explicit epsilon terms.

All statistical deviation terms use the natural-log Hoeffding form
sqrt(ln(1/eps) * x / 2) (for counts) and sqrt(ln(1/eps) / (2 x)) (for
frequencies); the base-2 logs appear only in the final key-length formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

from .protocol import TallyMatrix
from .quantum import ProtocolState

__all__ = [
    "EstimationError",
    "FiniteKeyInput",
    "FiniteKeyResult",
    "MuOptimum",
    "binary_entropy",
    "evaluate",
    "multiphoton_correction",
    "optimize_mu",
    "phase_error_ub",
    "secret_key_length",
    "single_photon_lb",
    "statistical_deviation",
]


class EstimationError(ValueError):
    """A bound cannot be evaluated because a required pool is empty."""


def binary_entropy(p: float) -> float:
    """h2(p) in bits, with 0 log 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"binary_entropy domain is [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def multiphoton_correction(x: float, mu: float, eps_sec: float) -> int:
    """G(x): worst-case multi-photon signals among x pulses, with deviation.

    floor(x * (1 - (1+mu) e^-mu) + sqrt(ln(1/eps_sec) * x / 2)); holds except
    with probability eps_sec.  Monotone nondecreasing in x.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    p_multi = 1.0 - (1.0 + mu) * math.exp(-mu)
    return int(math.floor(x * p_multi + math.sqrt(math.log(1.0 / eps_sec) * x / 2.0)))


def statistical_deviation(x: float, eps_sec: float) -> float:
    """Hoeffding deviation on a frequency estimated from x samples."""
    if x <= 0:
        raise EstimationError("deviation needs a positive sample count")
    return math.sqrt(math.log(1.0 / eps_sec) / (2.0 * x))


def single_photon_lb(n: int, big_n: int, mu: float, eps_sec: float) -> int:
    """Lower bound on single-photon detections: max(0, n - G(N)).

    Vacuum detections are absorbed into the single-photon count (vacuum
    states carry no information about the bit values).
    """
    if n > big_n:
        raise ValueError("detections cannot exceed sent signals")
    return max(0, n - multiphoton_correction(big_n, mu, eps_sec))


def phase_error_ub(
    m_plus: Dict[str, int],
    q_x1_lb: Dict[str, int],
    s_x1_lb: int,
    eps_sec: float,
) -> tuple[float, float]:
    """Upper bounds on the X error probability and the phase error rate.

    m_plus[a] counts detections with Alice sending a in {H, V, +} and Bob's
    X-basis outcome being "+" ("-" for a = "+": the matched-basis error
    count); q_x1_lb[a] are the single-photon lower bounds of the
    corresponding pools.  Each frequency is capped at 1/2 before the
    Hoeffding deviation is added, and the final rates are clamped to
    [0, 1/2].
    """
    for a in ("H", "V", "+"):
        if q_x1_lb.get(a, 0) <= 0:
            raise EstimationError(f"single-photon pool for Alice '{a}' is empty")
    if s_x1_lb <= 0:
        raise EstimationError("no single-photon X-basis detections to sample")

    def p_ub(a: str) -> float:
        f = min(0.5, m_plus[a] / q_x1_lb[a])
        return f + statistical_deviation(q_x1_lb[a], eps_sec)

    p_x_err = 0.5 * (p_ub("H") + p_ub("V") + 2.0 * p_ub("+") - 1.0)
    p_x_err = min(0.5, max(0.0, p_x_err))
    delta = min(0.5, p_x_err + statistical_deviation(s_x1_lb, eps_sec))
    return p_x_err, max(0.0, delta)


def secret_key_length(
    s_z1_lb: int,
    delta_z_ph_ub: float,
    leak_ec: int,
    eps_sec: float,
    eps_cor: float,
) -> int:
    """Extractable key length, floored and clamped at zero.

    floor(s_z1 * (1 - h2(delta)) - leak_EC - 4 log2(7/eps_sec)
          - log2(1/eps_cor)).
    """
    if s_z1_lb <= 0:
        return 0
    val = (
        s_z1_lb * (1.0 - binary_entropy(min(0.5, delta_z_ph_ub)))
        - leak_ec
        - 4.0 * math.log2(7.0 / eps_sec)
        - math.log2(1.0 / eps_cor)
    )
    return max(0, int(math.floor(val)))


@dataclass
class FiniteKeyInput:
    """Everything the bound engine consumes, as plain counts.

    m_plus_h / m_minus_h etc. are the detections m(b, a) with Alice sending
    a and Bob's X-basis measured outcome b; n_x_sent_* are the signal counts
    N_X(a) with Alice sending a while Bob encoded in the X basis.
    """

    n_z: int
    n_x: int
    sent_z: int
    sent_x: int
    m_plus_h: int
    m_minus_h: int
    m_plus_v: int
    m_minus_v: int
    m_plus_plus: int
    m_minus_plus: int
    n_x_sent_h: int
    n_x_sent_v: int
    n_x_sent_plus: int
    mu: float
    eps_sec: float
    eps_cor: float
    leak_ec: int = 0

    def __post_init__(self):
        for name in ("eps_sec", "eps_cor"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        counts = {
            f: getattr(self, f)
            for f in (
                "n_z", "n_x", "sent_z", "sent_x", "m_plus_h", "m_minus_h",
                "m_plus_v", "m_minus_v", "m_plus_plus", "m_minus_plus",
                "n_x_sent_h", "n_x_sent_v", "n_x_sent_plus", "leak_ec",
            )
        }
        for name, v in counts.items():
            if v < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_z > self.sent_z or self.n_x > self.sent_x:
            raise ValueError("detections cannot exceed sent signals")

    _FIELDS = (
        "n_z", "n_x", "sent_z", "sent_x",
        "m_plus_h", "m_minus_h", "m_plus_v", "m_minus_v",
        "m_plus_plus", "m_minus_plus",
        "n_x_sent_h", "n_x_sent_v", "n_x_sent_plus",
        "mu", "eps_sec", "eps_cor", "leak_ec",
    )

    def to_text(self) -> str:
        """Flat key = value record, one field per line."""
        lines = []
        for f in self._FIELDS:
            v = getattr(self, f)
            lines.append(f"{f} = {v!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FiniteKeyInput":
        values = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in cls._FIELDS:
                raise ValueError(f"unknown field {key!r} in finite-key record")
            raw = raw.strip()
            values[key] = float(raw) if key in ("mu", "eps_sec", "eps_cor") else int(float(raw))
        missing = [f for f in cls._FIELDS if f not in values and f != "leak_ec"]
        if missing:
            raise ValueError(f"finite-key record is missing fields: {missing}")
        return cls(**values)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "FiniteKeyInput":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_tallies(
        cls,
        tallies: TallyMatrix,
        mu: float,
        eps_sec: float,
        eps_cor: float,
        leak_ec: int = 0,
    ) -> "FiniteKeyInput":
        H, V = ProtocolState.H, ProtocolState.V
        PLUS, MINUS = ProtocolState.PLUS, ProtocolState.MINUS
        return cls(
            n_z=tallies.n_z(),
            n_x=tallies.n_x(),
            sent_z=tallies.sent_z(),
            sent_x=tallies.sent_x(),
            m_plus_h=tallies.m_outcome(PLUS, H),
            m_minus_h=tallies.m_outcome(MINUS, H),
            m_plus_v=tallies.m_outcome(PLUS, V),
            m_minus_v=tallies.m_outcome(MINUS, V),
            m_plus_plus=tallies.m_outcome(PLUS, PLUS),
            m_minus_plus=tallies.m_outcome(MINUS, PLUS),
            n_x_sent_h=tallies.sent_x_given_alice(H),
            n_x_sent_v=tallies.sent_x_given_alice(V),
            n_x_sent_plus=tallies.sent_x_given_alice(PLUS),
            mu=mu,
            eps_sec=eps_sec,
            eps_cor=eps_cor,
            leak_ec=leak_ec,
        )


@dataclass
class FiniteKeyResult:
    s_z1_lb: int
    s_x1_lb: int
    q_x1_lb: Dict[str, int]
    p_x_err_ub: float
    delta_z_ph_ub: float
    ell: int


def evaluate(inp: FiniteKeyInput) -> FiniteKeyResult:
    """Full bound chain from raw counts to the secret key length."""
    s_z1 = single_photon_lb(inp.n_z, inp.sent_z, inp.mu, inp.eps_sec)
    s_x1 = single_photon_lb(inp.n_x, inp.sent_x, inp.mu, inp.eps_sec)
    pools = {
        "H": (inp.m_plus_h + inp.m_minus_h, inp.n_x_sent_h),
        "V": (inp.m_plus_v + inp.m_minus_v, inp.n_x_sent_v),
        "+": (inp.m_plus_plus + inp.m_minus_plus, inp.n_x_sent_plus),
    }
    q_x1 = {
        a: single_photon_lb(m_x, sent, inp.mu, inp.eps_sec)
        for a, (m_x, sent) in pools.items()
    }
    # The "+" numerator is the matched-basis error count m(-, +).
    m_plus = {"H": inp.m_plus_h, "V": inp.m_plus_v, "+": inp.m_minus_plus}
    p_x_err, delta = phase_error_ub(m_plus, q_x1, s_x1, inp.eps_sec)
    ell = secret_key_length(s_z1, delta, inp.leak_ec, inp.eps_sec, inp.eps_cor)
    return FiniteKeyResult(s_z1, s_x1, q_x1, p_x_err, delta, ell)


@dataclass
class MuOptimum:
    mu: float
    ell: int
    rate_bps: float
    no_key: bool


def optimize_mu(
    scenario: Callable[[float], tuple[int, float]],
    grid: Sequence[float],
) -> MuOptimum:
    """Grid search for the intensity maximizing key per unit time.

    scenario(mu) must return (ell_bits, duration_seconds) for a block
    acquired at that intensity.  Ties break toward smaller mu; if no grid
    point yields a key, the smallest mu is returned with no_key set.
    """
    if len(grid) == 0:
        raise ValueError("mu grid must be nonempty")
    best: Optional[tuple[float, float, int]] = None
    for mu in sorted(grid):  # ascending order + strict improvement = smaller mu wins ties
        ell, seconds = scenario(mu)
        rate = ell / seconds if seconds > 0 else 0.0
        if best is None or rate > best[0]:
            best = (rate, mu, ell)
    rate, mu, ell = best
    return MuOptimum(mu=mu, ell=ell, rate_bps=rate, no_key=ell == 0)
