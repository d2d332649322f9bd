"""Cascade, verification hashing, Toeplitz extractor, and key-file tests."""

import math

import numpy as np
import pytest

from ddiqkd.finitekey import binary_entropy
from ddiqkd.postproc import (
    HashSpec,
    LengthMismatchError,
    ReconciliationError,
    cascade_reconcile,
    load_key_block,
    privacy_amplify,
    save_key_block,
    toeplitz_hash,
    verification_tag_bits,
    verify_keys,
)
from ddiqkd.protocol import KeyBlock, KeyRole, Party


def keypair(n, qber, rng):
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = a ^ (rng.random(n) < qber).astype(np.uint8)
    return (
        KeyBlock(a, KeyRole.SIFTED, Party.ALICE),
        KeyBlock(b, KeyRole.SIFTED, Party.BOB),
    )


# --- cascade -------------------------------------------------------------------


def test_cascade_identical_keys_only_sweep_parities():
    rng = np.random.default_rng(1)
    a, b = keypair(10_000, 0.0, rng)
    res = cascade_reconcile(a, b, 0.03, rng)
    assert res.corrected_errors == 0
    assert np.array_equal(res.alice.bits, res.bob.bits)
    # no binary searches: m is exactly the sweep parities of the passes run
    n = 10_000
    k1 = 2 ** math.ceil(math.log2(1 / 0.03))
    sizes = [k1, 4 * k1] + [n // 8] * (res.passes - 2)
    assert res.disclosed_bits == sum(math.ceil(n / k) for k in sizes)
    assert res.efficiency == math.inf  # definition breaks down at zero QBER


def test_cascade_three_percent_converges_efficiently():
    rng = np.random.default_rng(2)
    effs = []
    for _ in range(10):
        a, b = keypair(10_000, 0.03, rng)
        res = cascade_reconcile(a, b, 0.03, rng)
        assert np.array_equal(res.alice.bits, res.bob.bits)
        assert res.passes >= 4
        effs.append(res.efficiency)
        assert res.efficiency >= 1.0  # Shannon bound
    assert max(effs) <= 1.30  # small blocks run hotter; acceptance pins 1e5 blocks


def test_cascade_single_error_trace():
    # one flipped bit: pass 1 locates it with one binary search, later passes
    # disclose only their sweep parities
    n = 64
    rng = np.random.default_rng(3)
    a_bits = rng.integers(0, 2, n, dtype=np.uint8)
    b_bits = a_bits.copy()
    b_bits[37] ^= 1
    a = KeyBlock(a_bits, KeyRole.SIFTED, Party.ALICE)
    b = KeyBlock(b_bits, KeyRole.SIFTED, Party.BOB)
    res = cascade_reconcile(a, b, 1 / 16, rng)
    assert res.corrected_errors == 1
    assert np.array_equal(res.alice.bits, res.bob.bits)
    k1 = 16  # 2^ceil(log2(16))
    sizes = [k1, min(n, 4 * k1)] + [n // 8] * (res.passes - 2)
    sweep_parities = sum(math.ceil(n / k) for k in sizes)
    assert res.disclosed_bits == sweep_parities + math.ceil(math.log2(k1))


def test_cascade_counts_disclosures_into_efficiency():
    rng = np.random.default_rng(4)
    a, b = keypair(20_000, 0.05, rng)
    res = cascade_reconcile(a, b, 0.05, rng)
    n = 20_000
    assert res.efficiency == pytest.approx(
        res.disclosed_bits / (n * binary_entropy(res.initial_qber))
    )


def test_cascade_zero_estimate_asserts_identity():
    rng = np.random.default_rng(5)
    a, b = keypair(1000, 0.0, rng)
    res = cascade_reconcile(a, b, 0.0, rng)
    assert res.disclosed_bits == 0 and res.corrected_errors == 0
    a2, b2 = keypair(1000, 0.05, rng)
    with pytest.raises(ReconciliationError):
        cascade_reconcile(a2, b2, 0.0, rng)


def test_cascade_rejects_bad_inputs():
    rng = np.random.default_rng(6)
    a, b = keypair(100, 0.03, rng)
    with pytest.raises(ReconciliationError):
        cascade_reconcile(a, KeyBlock(b.bits[:50], KeyRole.SIFTED, Party.BOB), 0.03, rng)
    with pytest.raises(ReconciliationError):
        cascade_reconcile(a, b, 0.6, rng)


def test_cascade_corrected_blocks_equal_after_verification():
    rng = np.random.default_rng(7)
    for _ in range(5):
        a, b = keypair(30_000, 0.03, rng)
        res = cascade_reconcile(a, b, 0.03, rng)
        ver = verify_keys(res.alice, res.bob, 2e-9, rng)
        if ver.passed:
            assert np.array_equal(res.alice.bits, res.bob.bits)


# --- verification ----------------------------------------------------------------


def test_tag_bits_examples():
    assert verification_tag_bits(2e-9) == 29
    assert verification_tag_bits(0.5) == 1


def test_verify_equal_keys_always_pass():
    rng = np.random.default_rng(8)
    bits = rng.integers(0, 2, 5000, dtype=np.uint8)
    a = KeyBlock(bits, KeyRole.CORRECTED, Party.ALICE)
    b = KeyBlock(bits.copy(), KeyRole.CORRECTED, Party.BOB)
    assert all(verify_keys(a, b, 2e-9, rng).passed for _ in range(50))


def test_verify_detects_single_bit_difference():
    rng = np.random.default_rng(9)
    bits = rng.integers(0, 2, 5000, dtype=np.uint8)
    a = KeyBlock(bits, KeyRole.CORRECTED, Party.ALICE)
    flipped = bits.copy()
    flipped[123] ^= 1
    b = KeyBlock(flipped, KeyRole.CORRECTED, Party.BOB)
    # failure to detect has probability 2^-29 per seed; 200 seeds ~ 4e-7
    assert not any(verify_keys(a, b, 2e-9, rng).passed for _ in range(200))


def test_verify_collision_rate_matches_two_universality():
    # t = 8 tag bits: P[tags collide | keys differ] = 2^-8
    rng = np.random.default_rng(10)
    n, t = 32, 8
    x = rng.integers(0, 2, n, dtype=np.uint8)
    y = x.copy()
    y[3] ^= 1
    y[20] ^= 1
    trials = 100_000
    seeds = rng.integers(0, 2, (trials, n + t - 1), dtype=np.uint8)
    # vectorized tag difference: window matrix applied to x^y
    windows = np.lib.stride_tricks.sliding_window_view(seeds, n, axis=1)
    tag_diff = (windows @ (x ^ y).astype(np.int64)) & 1
    collisions = int(np.all(tag_diff == 0, axis=1).sum())
    p = 2.0**-t
    sigma = math.sqrt(trials * p * (1 - p))
    assert abs(collisions - trials * p) < 3 * sigma
    # tie the vectorized oracle to toeplitz_hash on a sample of seeds
    for i in rng.integers(0, trials, 50):
        hx = toeplitz_hash(x, seeds[i], t)
        hy = toeplitz_hash(y, seeds[i], t)
        assert (np.array_equal(hx, hy)) == bool(np.all(tag_diff[i] == 0))


# --- Toeplitz hashing -------------------------------------------------------------


def test_toeplitz_matches_naive_matrix():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(1, 64))
        m = int(rng.integers(1, 64))
        bits = rng.integers(0, 2, n, dtype=np.uint8)
        seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
        T = np.array([seed[i : i + n] for i in range(m)], dtype=np.int64)
        assert np.array_equal(toeplitz_hash(bits, seed, m), (T @ bits) % 2)


def test_toeplitz_fft_path_agrees_with_direct():
    rng = np.random.default_rng(12)
    n, m = 1 << 21, 1 << 13  # big enough to take the chunked FFT path
    bits = rng.integers(0, 2, n, dtype=np.uint8)
    seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
    h = toeplitz_hash(bits, seed, m)
    for i in rng.integers(0, m, 32):
        direct = int(seed[i : i + n].astype(np.int64) @ bits.astype(np.int64)) & 1
        assert h[i] == direct


def test_toeplitz_gf2_linearity():
    rng = np.random.default_rng(13)
    n, m = 2048, 256
    seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    y = rng.integers(0, 2, n, dtype=np.uint8)
    assert np.array_equal(
        toeplitz_hash(x, seed, m) ^ toeplitz_hash(y, seed, m),
        toeplitz_hash(x ^ y, seed, m),
    )


def test_toeplitz_seed_length_enforced():
    with pytest.raises(LengthMismatchError):
        toeplitz_hash(np.zeros(10, dtype=np.uint8), np.zeros(10, dtype=np.uint8), 4)


# --- privacy amplification -----------------------------------------------------------


def test_privacy_amplify_zero_length_key():
    rng = np.random.default_rng(14)
    key = KeyBlock(rng.integers(0, 2, 100, dtype=np.uint8), KeyRole.CORRECTED, Party.ALICE)
    spec = HashSpec.random(rng, 100, 0)
    out = privacy_amplify(key, spec)
    assert len(out) == 0 and out.role is KeyRole.SECRET


def test_privacy_amplify_linearity_on_zero_key():
    rng = np.random.default_rng(15)
    key = KeyBlock(np.zeros(500, dtype=np.uint8), KeyRole.CORRECTED, Party.ALICE)
    spec = HashSpec.random(rng, 500, 128)
    assert not privacy_amplify(key, spec).bits.any()


def test_privacy_amplify_length_mismatch():
    rng = np.random.default_rng(16)
    key = KeyBlock(np.zeros(100, dtype=np.uint8), KeyRole.CORRECTED, Party.ALICE)
    spec = HashSpec.random(rng, 99, 10)
    with pytest.raises(LengthMismatchError):
        privacy_amplify(key, spec)


def test_hash_spec_validation():
    rng = np.random.default_rng(17)
    with pytest.raises(ValueError):
        HashSpec(np.zeros(10, dtype=np.uint8), input_len=5, output_len=6)
    with pytest.raises(LengthMismatchError):
        HashSpec(np.zeros(10, dtype=np.uint8), input_len=8, output_len=2)
    spec = HashSpec.random(rng, 8, 2)
    assert spec.seed.size == 9


# --- key block files ---------------------------------------------------------------


def test_key_block_file_roundtrip(tmp_path):
    rng = np.random.default_rng(18)
    kb = KeyBlock(rng.integers(0, 2, 1013, dtype=np.uint8), KeyRole.SECRET, Party.BOB, 7)
    path = tmp_path / "block.key"
    save_key_block(kb, path)
    back = load_key_block(path)
    assert np.array_equal(back.bits, kb.bits)
    assert back.role is KeyRole.SECRET and back.party is Party.BOB and back.block_id == 7


def test_key_block_file_rejects_garbage(tmp_path):
    path = tmp_path / "junk.key"
    path.write_bytes(b"not a key\n\x00\x01")
    with pytest.raises(ValueError):
        load_key_block(path)
