"""Exact expected statistics of the honest protocol, for sweeps and tuning.

Photon-number splitting of a Poisson source across the analyzer ports makes
every per-port click independent, so all detection probabilities have closed
forms.  The model produces the same TallyMatrix the Monte-Carlo engine
produces (with expected counts in place of sampled ones), feeding the same
estimators and finite-key bounds; that is what makes block sizes of 10^7
bits and beyond tractable at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import finitekey
from .channel import ChannelParams, DetectorModel, SourceParams
from .protocol import (
    SLOT_DOUBLE,
    SLOT_NONE,
    ProtocolConfig,
    TallyMatrix,
    phase_error_threestate,
    qber_x_fourstate,
    qber_z,
)
from .quantum import decode_table, outcome_distribution_table

__all__ = [
    "RateModel",
    "SweepPoint",
    "asymptotic_secret_rate",
    "expected_tallies",
    "evaluate_point",
]

EC_EFFICIENCY_MODEL = 1.06  # modelled reconciliation efficiency for leak_EC


def _effective_distributions(channel: ChannelParams) -> np.ndarray:
    """Per-(a, b) outcome distributions after the channel's Pauli noise."""
    dist = outcome_distribution_table()
    qz, qx = channel.bit_flip_prob, channel.phase_flip_prob
    swap_z = [1, 0, 2, 3]
    swap_x = [0, 1, 3, 2]
    out = np.zeros_like(dist)
    for a in range(4):
        az, ax = swap_z[a], swap_x[a]
        azx = swap_x[az]
        out[a] = (
            (1 - qz) * (1 - qx) * dist[a]
            + qz * (1 - qx) * dist[az]
            + (1 - qz) * qx * dist[ax]
            + qz * qx * dist[azx]
        )
    return out


def _cell_click_probs(
    mu: float,
    dist_eff: np.ndarray,
    channel: ChannelParams,
    detector: DetectorModel,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(singles[...,4], double, none) per (alice, bob) cell.

    A Poisson-mu pulse thinned by channel loss and detector efficiency and
    split across ports with probabilities p_i gives independent Poisson
    clicks of mean mu*eta*p_i per port; dark counts multiply the no-click
    probabilities.
    """
    eta = channel.survival_prob * detector.efficiency
    lam = mu * eta * dist_eff  # (4, 4, 4)
    p_no = np.exp(-lam) * (1.0 - detector.dark_count_prob)
    c = 1.0 - p_no
    none = np.prod(p_no, axis=-1)
    prod_others = none[..., None] / np.where(p_no > 0, p_no, 1.0)
    singles = c * prod_others
    double = 1.0 - none - singles.sum(axis=-1)
    return singles, np.maximum(double, 0.0), none


def expected_tallies(
    config: ProtocolConfig,
    source: SourceParams,
    channel: ChannelParams,
    detector: DetectorModel,
    rounds: Optional[int] = None,
) -> TallyMatrix:
    """Expected tally matrix of an honest session, rounded to integer counts.

    Double-click rounds are split across outcomes in proportion to the
    per-port click probabilities (they are a vanishing fraction at key-rate
    intensities).
    """
    n = config.rounds if rounds is None else rounds
    pa = config.alice_probs()
    pb = config.bob_probs()
    pair = np.outer(pa, pb)  # (alice, bob)
    dist_eff = _effective_distributions(channel)
    singles, double, _none = _cell_click_probs(source.mu, dist_eff, channel, detector)

    counts = np.zeros((4, 4, 6))
    counts[:, :, :4] = n * pair[..., None] * singles
    counts[:, :, SLOT_DOUBLE] = n * pair * double
    eta = channel.survival_prob * detector.efficiency
    lam = source.mu * eta * dist_eff
    c = 1.0 - np.exp(-lam) * (1.0 - detector.dark_count_prob)
    c_sum = c.sum(axis=-1, keepdims=True)
    share = np.divide(c, np.where(c_sum > 0, c_sum, 1.0))
    double_assigned = np.rint(n * pair[..., None] * double[..., None] * share).astype(np.int64)

    counts = np.rint(counts).astype(np.int64)
    counts[:, :, SLOT_DOUBLE] = double_assigned.sum(axis=-1)
    counts[:, :, SLOT_NONE] = 0
    sent = np.rint(n * pair).astype(np.int64)
    counts[:, :, SLOT_NONE] = np.maximum(sent - counts.sum(axis=2), 0)
    return TallyMatrix(counts, double_assigned)


@dataclass
class RateModel:
    """One sweep point's physical scenario at a tunable intensity."""

    protocol: ProtocolConfig
    source: SourceParams
    channel: ChannelParams
    detector: DetectorModel
    eps_sec: float = 2e-9
    eps_cor: float = 2e-9
    ec_efficiency: float = EC_EFFICIENCY_MODEL

    def with_mu(self, mu: float) -> "RateModel":
        return replace(self, source=replace(self.source, mu=mu))

    def zz_detection_prob(self) -> float:
        """Per-pulse probability that both choose Z and the round detects."""
        pa = self.protocol.alice_probs()
        pb = self.protocol.bob_probs()
        dist_eff = _effective_distributions(self.channel)
        singles, double, _ = _cell_click_probs(
            self.source.mu, dist_eff, self.channel, self.detector
        )
        p_click = singles.sum(axis=-1) + double
        return float((np.outer(pa, pb)[:2, :2] * p_click[:2, :2]).sum())

    def block_rounds(self, block_size: int) -> int:
        """Rounds needed so the expected Z-key detections reach block_size."""
        p = self.zz_detection_prob()
        if p <= 0:
            raise ValueError("zero detection probability; no block can fill")
        return int(math.ceil(block_size / p))

    def finite_key_point(self, block_size: int) -> tuple[int, float, dict]:
        """(ell, seconds, details) for one distillation block of block_size bits."""
        rounds = self.block_rounds(block_size)
        tallies = expected_tallies(self.protocol, self.source, self.channel, self.detector, rounds)
        e_z = qber_z(tallies)
        if self.protocol.alice_probs()[3] > 0:
            e_x = qber_x_fourstate(tallies)
        else:
            e_x = phase_error_threestate(tallies)
        n_z = tallies.n_z()
        leak = int(math.ceil(self.ec_efficiency * n_z * finitekey.binary_entropy(e_z)))
        inp = finitekey.FiniteKeyInput.from_tallies(
            tallies, self.source.mu, self.eps_sec, self.eps_cor, leak
        )
        try:
            result = finitekey.evaluate(inp)
            ell = result.ell
        except finitekey.EstimationError:
            ell = 0
        seconds = rounds / self.source.pulse_rate
        return ell, seconds, {"qber_z": e_z, "qber_x": e_x, "n_z": n_z, "rounds": rounds}


def asymptotic_secret_rate(model: RateModel) -> float:
    """Secret bits per second in the infinite-block limit (no deviation terms).

    The multi-photon subtraction survives (no decoy states), but every
    Hoeffding term vanishes, mirroring a rate computed without finite-key
    statistics.
    """
    pa = model.protocol.alice_probs()
    pb = model.protocol.bob_probs()
    pair = np.outer(pa, pb)
    dist_eff = _effective_distributions(model.channel)
    singles, double, _ = _cell_click_probs(
        model.source.mu, dist_eff, model.channel, model.detector
    )
    p_click = singles.sum(axis=-1) + double
    mu = model.source.mu
    p_multi = 1.0 - (1.0 + mu) * math.exp(-mu)

    det_zz = float((pair[:2, :2] * p_click[:2, :2]).sum())
    sel_zz = float(pair[:2, :2].sum())
    s1_rate = det_zz - sel_zz * p_multi
    if s1_rate <= 0 or det_zz <= 0:
        return 0.0

    tallies = expected_tallies(model.protocol, model.source, model.channel, model.detector, 10**12)
    e_z = qber_z(tallies)

    decode = decode_table()

    # conditional-frequency bounds in the asymptotic limit: f = m / q_x1
    # (double clicks vanish at key-rate intensities and are dropped here)
    def f_bound(a: int, numerator_minus: bool) -> float:
        sent_x_a = float(pair[a, 2:].sum())
        m_x_rate = float((pair[a, 2:, None] * singles[a, 2:]).sum())
        q_rate = m_x_rate - sent_x_a * p_multi
        if q_rate <= 0:
            return 0.5
        want_bit = 1 if numerator_minus else 0
        m = 0.0
        for b in (2, 3):
            for o in range(4):
                if decode[b, o] == want_bit:
                    m += pair[a, b] * singles[a, b, o]
        return min(0.5, float(m) / q_rate)

    p_x_err = 0.5 * (f_bound(0, False) + f_bound(1, False) + 2 * f_bound(2, True) - 1.0)
    delta = min(0.5, max(0.0, p_x_err))
    leak_rate = model.ec_efficiency * det_zz * finitekey.binary_entropy(e_z)
    rate_per_pulse = s1_rate * (1.0 - finitekey.binary_entropy(delta)) - leak_rate
    return max(0.0, rate_per_pulse) * model.source.pulse_rate


@dataclass
class SweepPoint:
    attenuation_db: float
    distance_km: float
    skr_bps: float
    qber_z: float
    qber_x: float
    ell: int
    mu_opt: float
    error: Optional[str] = None


def evaluate_point(
    model: RateModel,
    mu_grid: Sequence[float],
    block_size: int,
    asymptotic: bool = False,
) -> SweepPoint:
    """Optimize the intensity at one channel setting and report the key rate."""
    att = model.channel.fiber_loss_db_per_km * model.channel.distance_km

    if asymptotic:
        best_mu, best_rate = None, -1.0
        for mu in sorted(mu_grid):
            r = asymptotic_secret_rate(model.with_mu(mu))
            if r > best_rate:
                best_mu, best_rate = mu, r
        m = model.with_mu(best_mu)
        tallies = expected_tallies(m.protocol, m.source, m.channel, m.detector, 10**12)
        e_z = qber_z(tallies)
        e_x = (
            qber_x_fourstate(tallies)
            if m.protocol.alice_probs()[3] > 0
            else phase_error_threestate(tallies)
        )
        return SweepPoint(att, model.channel.distance_km, best_rate, e_z, e_x, 0, best_mu)

    details_by_mu: dict[float, dict] = {}

    def scenario(mu: float) -> tuple[int, float]:
        ell, seconds, details = model.with_mu(mu).finite_key_point(block_size)
        details_by_mu[mu] = details
        return ell, seconds

    opt = finitekey.optimize_mu(scenario, mu_grid)
    d = details_by_mu[opt.mu]
    return SweepPoint(
        att,
        model.channel.distance_km,
        opt.rate_bps,
        d["qber_z"],
        d["qber_x"],
        opt.ell,
        opt.mu,
    )
