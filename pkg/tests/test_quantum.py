"""Bell statistics, decoding truth table, and discrimination-bound tests.

The distribution oracle here builds the two-qubit projectors from scratch
(explicit kets, dense outer products) so the library's projection code is
checked against an independent construction, not against itself.
"""

import itertools
import math

import numpy as np
import pytest

from ddiqkd.quantum import (
    OUTCOME_ORDER,
    STATE_ORDER,
    Basis,
    BellOutcome,
    PolarizationQubit,
    ProtocolState,
    UsdBoundInput,
    alice_bit,
    bell_outcome_distribution,
    decode_bit,
    state_from,
    transformed_bob_state,
    usd_success_lower_bound,
)

H, V, PLUS, MINUS = ProtocolState.H, ProtocolState.V, ProtocolState.PLUS, ProtocolState.MINUS


def oracle_distribution(alice: ProtocolState, bob: ProtocolState) -> np.ndarray:
    """Dense projector oracle: build each Bell projector |B><B| explicitly."""
    kets = {
        H: np.array([1, 0], dtype=complex),
        V: np.array([0, 1], dtype=complex),
        PLUS: np.array([1, 1], dtype=complex) / math.sqrt(2),
        MINUS: np.array([1, -1], dtype=complex) / math.sqrt(2),
    }
    r = np.array([1, 0], dtype=complex)  # spatial modes
    t = np.array([0, 1], dtype=complex)
    h = np.array([1, 0], dtype=complex)  # polarization modes
    v = np.array([0, 1], dtype=complex)
    bells = [
        (np.kron(r, h) + np.kron(t, v)) / math.sqrt(2),
        (np.kron(r, h) - np.kron(t, v)) / math.sqrt(2),
        (np.kron(r, v) + np.kron(t, h)) / math.sqrt(2),
        (np.kron(r, v) - np.kron(t, h)) / math.sqrt(2),
    ]
    psi = np.kron(kets[alice], kets[bob])
    out = []
    for b in bells:
        proj = np.outer(b, b.conj())
        out.append(np.real(psi.conj() @ proj @ psi))
    return np.array(out)


# Table rows as printed: probabilities per (alice, bob) for each Bell outcome.
PAPER_EXAMPLES = [
    (H, H, [0.5, 0.5, 0.0, 0.0]),
    (H, PLUS, [0.25, 0.25, 0.25, 0.25]),
    (PLUS, PLUS, [0.5, 0.0, 0.5, 0.0]),
]


@pytest.mark.parametrize("alice,bob,expected", PAPER_EXAMPLES)
def test_distribution_paper_rows(alice, bob, expected):
    assert bell_outcome_distribution(alice, bob) == pytest.approx(expected, abs=1e-12)


def test_distribution_matches_dense_oracle_everywhere():
    for a, b in itertools.product(STATE_ORDER, STATE_ORDER):
        got = bell_outcome_distribution(a, b)
        assert got == pytest.approx(oracle_distribution(a, b), abs=1e-12)


def test_distribution_entries_and_normalization():
    for a, b in itertools.product(STATE_ORDER, STATE_ORDER):
        p = bell_outcome_distribution(a, b)
        assert abs(p.sum() - 1.0) < 1e-12
        for x in p:
            assert min(abs(x - v) for v in (0.0, 0.25, 0.5)) < 1e-12


def test_distribution_z_bitflip_symmetry():
    swap = {H: V, V: H, PLUS: PLUS, MINUS: MINUS}
    for a, b in itertools.product(STATE_ORDER, STATE_ORDER):
        p = bell_outcome_distribution(a, b)
        q = bell_outcome_distribution(swap[a], swap[b])
        # flipping both Z bits leaves each Phi/Psi pair's probabilities in place
        assert p[:2].sum() == pytest.approx(q[:2].sum(), abs=1e-12)
        assert p == pytest.approx(q[[0, 1, 2, 3]], abs=1e-12) or p == pytest.approx(
            q[[1, 0, 3, 2]], abs=1e-12
        )


@pytest.mark.parametrize(
    "bob,outcome,expected",
    [
        (H, BellOutcome.PSI_PLUS, 1),
        (PLUS, BellOutcome.PHI_PLUS, 0),
        (MINUS, BellOutcome.PHI_MINUS, 0),
    ],
)
def test_decode_paper_examples(bob, outcome, expected):
    assert decode_bit(bob, outcome) == expected


@pytest.mark.parametrize("state,bit", [(H, 0), (MINUS, 1), (PLUS, 0), (V, 1)])
def test_alice_bit(state, bit):
    assert alice_bit(state) == bit


def test_matched_basis_decoding_inverts_encoding():
    # for every same-basis pair, every outcome with nonzero probability
    # decodes to Alice's bit
    checked = 0
    for a, b in itertools.product(STATE_ORDER, STATE_ORDER):
        if a.basis is not b.basis:
            continue
        p = bell_outcome_distribution(a, b)
        for o in OUTCOME_ORDER:
            checked += 1
            if p[o.index] > 1e-12:
                assert decode_bit(b, o) == alice_bit(a)
    assert checked == 8 * 4  # 8 same-basis pairs x 4 outcomes


def test_state_labelling():
    assert (H.basis, H.bit) == (Basis.Z, 0)
    assert (V.basis, V.bit) == (Basis.Z, 1)
    assert (PLUS.basis, PLUS.bit) == (Basis.X, 0)
    assert (MINUS.basis, MINUS.bit) == (Basis.X, 1)
    assert H.phase == 0.0 and V.phase == math.pi
    assert PLUS.phase == math.pi / 2 and MINUS.phase == 3 * math.pi / 2
    for s in STATE_ORDER:
        assert state_from(s.basis, s.bit) is s


def test_bell_outcome_serialization_roundtrip():
    assert len(BellOutcome) == 4
    for o in BellOutcome:
        assert BellOutcome(o.value) is o


def test_polarization_qubit_normalization():
    PolarizationQubit(1.0, 0.0)
    PolarizationQubit(1 / math.sqrt(2), 1j / math.sqrt(2))
    with pytest.raises(ValueError):
        PolarizationQubit(1.0, 0.5)


# --- discrimination bound ---------------------------------------------------


def eig_oracle(n: int) -> float:
    """Generic symmetric eigensolver on the explicit 4x4 block matrix."""
    lam = float(np.linalg.eigvalsh(UsdBoundInput(n).block_matrix()).min())
    return min(1.0, max(0.0, lam))


@pytest.mark.parametrize("n,expected", [(3, 0.5), (2, 0.0), (5, 0.75), (1, 0.0)])
def test_usd_bound_known_values(n, expected):
    assert usd_success_lower_bound(n) == pytest.approx(expected, abs=1e-9)


def test_usd_bound_matches_eigensolver_oracle():
    for n in range(1, 21):
        assert usd_success_lower_bound(n) == pytest.approx(eig_oracle(n), abs=1e-9)


def test_usd_bound_monotone_and_limits():
    odd = [usd_success_lower_bound(n) for n in range(3, 41, 2)]
    assert all(b >= a for a, b in zip(odd, odd[1:]))
    assert 1.0 - usd_success_lower_bound(61) < 1e-9


def test_usd_rejects_bad_photon_counts():
    with pytest.raises(ValueError):
        usd_success_lower_bound(0)
    with pytest.raises(ValueError):
        UsdBoundInput(0)


def test_usd_input_validates_block_entries():
    good = UsdBoundInput(4)
    v = (1 / math.sqrt(2)) ** 4
    assert np.allclose(good.C, [[v, v], [v, v]], atol=1e-15)
    with pytest.raises(ValueError):
        UsdBoundInput(4, C=np.ones((2, 2)))


# --- transformed probe state ------------------------------------------------


def test_transformed_state_computational_points():
    q0 = transformed_bob_state(0.0)
    assert q0.alpha == pytest.approx(1.0) and q0.beta == pytest.approx(0.0)
    q1 = transformed_bob_state(math.pi)
    assert q1.alpha == pytest.approx(0.0) and q1.beta == pytest.approx(1.0)


def test_transformed_state_quarter_phase():
    # (|+~> + i|-~>)/sqrt2 expanded in {|0~>, |1~>} is ((1+i)/2, (1-i)/2)
    q = transformed_bob_state(math.pi / 2)
    plus = np.array([1, 1]) / math.sqrt(2)
    minus = np.array([1, -1]) / math.sqrt(2)
    expected = (plus + 1j * minus) / math.sqrt(2)
    assert q.alpha == pytest.approx(expected[0], abs=1e-12)
    assert q.beta == pytest.approx(expected[1], abs=1e-12)


def test_transformed_state_rejects_other_phases():
    with pytest.raises(ValueError):
        transformed_bob_state(1.0)
