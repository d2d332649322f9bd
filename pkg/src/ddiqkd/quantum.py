"""Exact single-photon quantum mechanics of the DDI-QKD optical circuit.

Alice's polarization qubit is converted to a spatial-mode qubit at Bob's
input beam splitter, Bob encodes a second qubit in polarization, and the
analyzer projects the two-qubit photon onto the four Bell states.  Everything
in this module is a pure function of its inputs; the Bell statistics are
*computed* from state vectors, never tabulated.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "Basis",
    "BellOutcome",
    "PolarizationQubit",
    "ProtocolState",
    "UsdBoundInput",
    "alice_bit",
    "bell_outcome_distribution",
    "decode_bit",
    "state_from",
    "transformed_bob_state",
    "usd_success_lower_bound",
]

NORMALIZATION_TOL = 1e-12


class Basis(Enum):
    Z = "Z"
    X = "X"


class ProtocolState(Enum):
    """One of the four BB84 polarization states."""

    H = "H"
    V = "V"
    PLUS = "+"
    MINUS = "-"

    @property
    def basis(self) -> Basis:
        return Basis.Z if self in (ProtocolState.H, ProtocolState.V) else Basis.X

    @property
    def bit(self) -> int:
        """Key bit carried by the state: 0 for {H, +}, 1 for {V, -}."""
        return 0 if self in (ProtocolState.H, ProtocolState.PLUS) else 1

    @property
    def phase(self) -> float:
        """Modulator phase realizing this state: H->0, V->pi, +->pi/2, -->3pi/2."""
        return _PHASES[self]

    def qubit(self) -> "PolarizationQubit":
        a, b = _AMPLITUDES[self]
        return PolarizationQubit(a, b)

    @property
    def index(self) -> int:
        return _STATE_INDEX[self]


STATE_ORDER = (ProtocolState.H, ProtocolState.V, ProtocolState.PLUS, ProtocolState.MINUS)
_STATE_INDEX = {s: i for i, s in enumerate(STATE_ORDER)}

_SQ2 = 1.0 / math.sqrt(2.0)
_AMPLITUDES = {
    ProtocolState.H: (1.0 + 0.0j, 0.0 + 0.0j),
    ProtocolState.V: (0.0 + 0.0j, 1.0 + 0.0j),
    ProtocolState.PLUS: (_SQ2 + 0.0j, _SQ2 + 0.0j),
    ProtocolState.MINUS: (_SQ2 + 0.0j, -_SQ2 + 0.0j),
}
_PHASES = {
    ProtocolState.H: 0.0,
    ProtocolState.V: math.pi,
    ProtocolState.PLUS: math.pi / 2.0,
    ProtocolState.MINUS: 3.0 * math.pi / 2.0,
}


def state_from(basis: Basis, bit: int) -> ProtocolState:
    """Inverse of the (basis, bit) labelling."""
    if basis is Basis.Z:
        return ProtocolState.H if bit == 0 else ProtocolState.V
    return ProtocolState.PLUS if bit == 0 else ProtocolState.MINUS


class BellOutcome(Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"

    @property
    def index(self) -> int:
        return _OUTCOME_INDEX[self]


OUTCOME_ORDER = (
    BellOutcome.PHI_PLUS,
    BellOutcome.PHI_MINUS,
    BellOutcome.PSI_PLUS,
    BellOutcome.PSI_MINUS,
)
_OUTCOME_INDEX = {o: i for i, o in enumerate(OUTCOME_ORDER)}


@dataclass(frozen=True)
class PolarizationQubit:
    """Single-qubit state alpha|0> + beta|1> in whichever mode pair is in play."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"amplitudes not normalized: |a|^2+|b|^2 = {norm!r}")

    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)


# Two-qubit basis order (spatial, polarization): |rH>, |rV>, |tH>, |tV>.
# Alice's amplitudes live on the spatial modes after Bob's input PBS,
# Bob's on the polarization modes he encodes inside the loop.
_BELL_VECTORS = np.array(
    [
        [1, 0, 0, 1],   # Phi+ = (|rH> + |tV>)/sqrt2
        [1, 0, 0, -1],  # Phi- = (|rH> - |tV>)/sqrt2
        [0, 1, 1, 0],   # Psi+ = (|rV> + |tH>)/sqrt2
        [0, 1, -1, 0],  # Psi- = (|rV> - |tH>)/sqrt2
    ],
    dtype=complex,
) / math.sqrt(2.0)


def bell_outcome_distribution(alice: ProtocolState, bob: ProtocolState) -> np.ndarray:
    """Probabilities of the four Bell outcomes for a given state pair.

    Projects |psi_A> (spatial) tensor |psi_B> (polarization) onto the four
    Bell vectors of the analyzer.  Returns a length-4 float array ordered
    (Phi+, Phi-, Psi+, Psi-); entries are nonnegative and sum to 1.
    """
    psi = np.kron(alice.qubit().vector(), bob.qubit().vector())
    amps = _BELL_VECTORS.conj() @ psi
    probs = np.abs(amps) ** 2
    return probs.real


def outcome_distribution_table() -> np.ndarray:
    """All 16 state pairs at once: array indexed [alice, bob, outcome]."""
    table = np.empty((4, 4, 4))
    for a in STATE_ORDER:
        for b in STATE_ORDER:
            table[a.index, b.index] = bell_outcome_distribution(a, b)
    return table


# Truth table used by Bob: his encoded state plus the announced Bell outcome
# determine the bit.  Rows H, V, +, -; columns Phi+, Phi-, Psi+, Psi-.
_DECODE_TABLE = np.array(
    [
        [0, 0, 1, 1],
        [1, 1, 0, 0],
        [0, 1, 0, 1],
        [1, 0, 1, 0],
    ],
    dtype=np.int64,
)


def decode_bit(bob: ProtocolState, outcome: BellOutcome) -> int:
    """Bob's extracted bit given his encoding and the Bell outcome."""
    return int(_DECODE_TABLE[bob.index, outcome.index])


def alice_bit(alice: ProtocolState) -> int:
    """Alice's bit convention: 0 for {H, +}, 1 for {V, -}."""
    return alice.bit


def decode_table() -> np.ndarray:
    return _DECODE_TABLE.copy()


@dataclass(frozen=True)
class UsdBoundInput:
    """Inputs of the discrimination bound for an n-photon probe.

    The off-diagonal block C has every entry (1/sqrt2)^n except the lower
    right one, which is (-1/sqrt2)^n; the bound is the smallest eigenvalue
    of [[I, C], [C, I]].
    """

    n: int
    C: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"photon count must be >= 1, got {self.n}")
        if self.C is None:
            object.__setattr__(self, "C", _usd_overlap_block(self.n))
        else:
            expected = _usd_overlap_block(self.n)
            if not np.allclose(self.C, expected, rtol=0.0, atol=1e-15):
                raise ValueError("C entries must equal (+-1/sqrt2)^n")

    def block_matrix(self) -> np.ndarray:
        eye = np.eye(2)
        return np.block([[eye, self.C], [self.C, eye]])


def _usd_overlap_block(n: int) -> np.ndarray:
    v = _SQ2**n
    return np.array([[v, v], [v, (-_SQ2) ** n]])


def usd_success_lower_bound(n: int) -> float:
    """Guaranteed success probability of discriminating the probe's setting.

    Smallest eigenvalue of the 4x4 block matrix [[I, C(n)], [C(n), I]],
    clamped to [0, 1].  C(n) is symmetric with eigenvalues +-sqrt2*(1/sqrt2)^n
    for odd n and {2*(1/sqrt2)^n, 0} for even n, so the extreme eigenvalue of
    the block matrix is 1 - 2^((1-n)/2) (odd) or 1 - 2^((2-n)/2) (even).
    Values <= 0 (n <= 2) mean no guaranteed identification.
    """
    if n < 1:
        raise ValueError(f"photon count must be >= 1, got {n}")
    if n % 2 == 1:
        lam = 1.0 - 2.0 ** ((1 - n) / 2.0)
    else:
        lam = 1.0 - 2.0 ** ((2 - n) / 2.0)
    return min(1.0, max(0.0, lam))


def transformed_bob_state(phi: float) -> PolarizationQubit:
    """Effective qubit per photon at the analyzer output ports.

    In the {|0~>, |1~>} port-superposition basis the state is
    ((1+e^{i phi})/2, (1-e^{i phi})/2), already normalized.  phi must be one
    of the four protocol phases {0, pi, pi/2, 3pi/2}.
    """
    allowed = (0.0, math.pi, math.pi / 2.0, 3.0 * math.pi / 2.0)
    if not any(abs(phi - p) < 1e-9 for p in allowed):
        raise ValueError(f"phase {phi!r} is not a protocol phase")
    e = cmath.exp(1j * phi)
    return PolarizationQubit((1.0 + e) / 2.0, (1.0 - e) / 2.0)
