"""Classical key distillation: Cascade, error verification, privacy amplification.

Cascade runs the Brassard-Salvail schedule (first block ~0.73/QBER, doubling
each pass, four passes plus shuffled clean-up passes) with full cascading:
every disclosed parity interval stays live as a constraint, so correcting a
bit re-checks all blocks of all passes that contain it.  Every parity bit
Alice discloses is counted into the leakage m; inferable parities (right
halves of binary-search splits) are not disclosed and cost nothing.

Verification and privacy amplification both use Toeplitz (sliding-window)
matrices over GF(2); for a uniformly random seed the collision probability
of distinct inputs is exactly 2^-t for a t-bit output.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .finitekey import binary_entropy
from .protocol import KeyBlock, KeyRole, Party

__all__ = [
    "HashSpec",
    "LengthMismatchError",
    "ReconciliationError",
    "ReconciliationResult",
    "VerificationResult",
    "cascade_reconcile",
    "load_key_block",
    "privacy_amplify",
    "save_key_block",
    "toeplitz_hash",
    "verification_tag_bits",
    "verify_keys",
]


class ReconciliationError(RuntimeError):
    """Cascade was asked to do something inconsistent with its inputs."""


class LengthMismatchError(ValueError):
    """A hash spec does not match the key it is applied to."""


MAX_PASSES = 20
MIN_PASSES = 5
CLEAN_STREAK_STOP = 3


def _pass_sizes(n: int, qber: float) -> list:
    """Optimized-Cascade schedule: k1 = 2^ceil(log2(1/q)), k2 = 4 k1, then n/8.

    The classic doubling schedule leaks noticeably more through its binary
    searches.  Late passes with a handful of big blocks cost a few parities
    each and mostly serve to flag leftover error pairs; the constraint
    cascade then locates them in the small early-pass blocks.
    """
    k1 = 2 ** math.ceil(math.log2(1.0 / qber))
    k1 = max(2, min(n, k1))
    k2 = min(n, 4 * k1)
    late = max(2, n // 8)
    return [k1, k2] + [late] * (MAX_PASSES - 2)


@dataclass
class ReconciliationResult:
    alice: KeyBlock
    bob: KeyBlock
    disclosed_bits: int
    efficiency: float
    passes: int
    corrected_errors: int
    initial_qber: float


class _Pass:
    __slots__ = ("perm", "pos", "k", "alice_prefix")

    def __init__(self, perm: np.ndarray, k: int, alice: np.ndarray):
        self.perm = perm
        self.pos = np.empty_like(perm)
        self.pos[perm] = np.arange(perm.size)
        self.k = k
        # static prefix parities of Alice's permuted key, for O(1) lookups
        pre = np.zeros(perm.size + 1, dtype=np.uint8)
        pre[1:] = (np.cumsum(alice[perm], dtype=np.int64) & 1).astype(np.uint8)
        self.alice_prefix = pre

    def alice_parity(self, s: int, e: int) -> int:
        return int(self.alice_prefix[e] ^ self.alice_prefix[s])


class _CascadeState:
    """Bookkeeping of disclosed parities and live constraints across passes."""

    def __init__(self, alice: np.ndarray, bob: np.ndarray, rng: np.random.Generator):
        self.alice = alice
        self.bob = bob.copy()
        self.rng = rng
        self.n = alice.size
        self.passes: List[_Pass] = []
        self.disclosed = 0
        self.corrected = 0
        # (pass_id, start, end) -> current alice XOR bob parity of the interval
        self.constraints: Dict[Tuple[int, int, int], int] = {}
        # (pass_id, block_idx) -> disclosed sub-intervals inside that block
        self.sub_intervals: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
        self.queue: deque = deque()

    def bob_parity(self, p: int, s: int, e: int) -> int:
        block = self.bob[self.passes[p].perm[s:e]]
        return int(block.sum() & 1)

    def run_pass(self, k: int, shuffle: bool) -> int:
        """Sweep a new pass; returns the number of odd blocks it saw."""
        p = len(self.passes)
        if shuffle:
            perm = self.rng.permutation(self.n)
        else:
            perm = np.arange(self.n)
        info = _Pass(perm, k, self.alice)
        self.passes.append(info)
        odd = 0
        bob_perm = self.bob[perm]
        alice_perm = self.alice[perm]
        n_blocks = math.ceil(self.n / k)
        edges = np.minimum(np.arange(n_blocks + 1) * k, self.n)
        a_par = np.add.reduceat(alice_perm.astype(np.int64), edges[:-1]) & 1
        b_par = np.add.reduceat(bob_perm.astype(np.int64), edges[:-1]) & 1
        self.disclosed += n_blocks  # Alice sends one parity per block
        for i in range(n_blocks):
            s, e = int(edges[i]), int(edges[i + 1])
            diff = int(a_par[i] ^ b_par[i])
            self.constraints[(p, s, e)] = diff
            if diff:
                odd += 1
                self.queue.append((p, s, e))
        self.drain()
        return odd

    def drain(self) -> None:
        while self.queue:
            key = self.queue.popleft()
            if self.constraints.get(key, 0) == 1:
                self.binary_search(*key)

    def binary_search(self, p: int, s: int, e: int) -> None:
        """Locate and fix the error in an odd interval, disclosing left halves."""
        info = self.passes[p]
        while e - s > 1:
            mid = (s + e) // 2
            left = (p, s, mid)
            if left in self.constraints:
                dl = self.constraints[left]
            else:
                # Alice discloses the left-half parity; the right half is inferable.
                self.disclosed += 1
                dl = info.alice_parity(s, mid) ^ self.bob_parity(p, s, mid)
                self._register(p, s, mid, dl)
                self._register(p, mid, e, self.constraints[(p, s, e)] ^ dl)
            if dl == 1:
                s, e = s, mid
            else:
                s, e = mid, e
        self.flip(int(info.perm[s]))

    def _register(self, p: int, s: int, e: int, diff: int) -> None:
        self.constraints[(p, s, e)] = diff
        block = s // self.passes[p].k
        self.sub_intervals.setdefault((p, block), []).append((s, e))

    def flip(self, j: int) -> None:
        """Correct bit j everywhere and re-enqueue constraints that turn odd."""
        self.bob[j] ^= 1
        self.corrected += 1
        for p, info in enumerate(self.passes):
            pos = int(info.pos[j])
            block = pos // info.k
            s0 = block * info.k
            e0 = min(s0 + info.k, self.n)
            for (s, e) in [(s0, e0)] + [
                iv for iv in self.sub_intervals.get((p, block), ()) if iv[0] <= pos < iv[1]
            ]:
                key = (p, s, e)
                if key in self.constraints:
                    self.constraints[key] ^= 1
                    if self.constraints[key] == 1:
                        self.queue.append(key)


def cascade_reconcile(
    alice: KeyBlock,
    bob: KeyBlock,
    qber_estimate: float,
    rng: np.random.Generator,
) -> ReconciliationResult:
    """Interactive parity reconciliation of Bob's key against Alice's.

    qber_estimate sets the first-pass block size ceil(0.73/QBER); passing 0
    asserts the keys are already identical and aborts if they are not.
    Residual errors are possible (verification is a separate step), but the
    clean-up passes make them rare.
    """
    if len(alice) != len(bob):
        raise ReconciliationError("keys must have equal length")
    a = np.asarray(alice.bits, dtype=np.uint8)
    b = np.asarray(bob.bits, dtype=np.uint8)
    n = a.size
    errors0 = int(np.count_nonzero(a != b))
    qber0 = errors0 / n if n else 0.0

    if qber_estimate == 0.0:
        if errors0:
            raise ReconciliationError(
                f"qber_estimate = 0 asserted but {errors0} mismatches exist"
            )
        return ReconciliationResult(
            _as_corrected(alice), _as_corrected(bob), 0, math.inf, 0, 0, 0.0
        )
    if not 0.0 < qber_estimate < 0.5:
        raise ReconciliationError("qber_estimate must be in (0, 0.5)")
    if n == 0:
        raise ReconciliationError("cannot reconcile empty keys")

    state = _CascadeState(a, b, rng)
    passes_run = 0
    clean_streak = 0
    for i, k in enumerate(_pass_sizes(n, qber_estimate)):
        odd = state.run_pass(k, shuffle=i > 0)
        passes_run += 1
        clean_streak = clean_streak + 1 if odd == 0 else 0
        if passes_run >= MIN_PASSES and clean_streak >= CLEAN_STREAK_STOP:
            break

    m = state.disclosed
    if 0.0 < qber0 < 0.5:
        eff = m / (n * binary_entropy(qber0))
    else:
        eff = math.inf
    return ReconciliationResult(
        _as_corrected(alice),
        KeyBlock(state.bob, KeyRole.CORRECTED, bob.party, bob.block_id),
        m,
        eff,
        passes_run,
        state.corrected,
        qber0,
    )


def _as_corrected(kb: KeyBlock) -> KeyBlock:
    return KeyBlock(kb.bits.copy(), KeyRole.CORRECTED, kb.party, kb.block_id)


def toeplitz_hash(bits: np.ndarray, seed: np.ndarray, output_len: int) -> np.ndarray:
    """GF(2) product of a seed-defined Toeplitz matrix with a bit vector.

    Row i of the matrix is seed[i : i + n]; the seed must therefore hold
    n + output_len - 1 bits.  Large inputs go through chunked FFT
    convolution with exact integer rounding.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    seed = np.asarray(seed, dtype=np.uint8)
    n = bits.size
    if output_len < 0:
        raise ValueError("output_len must be >= 0")
    if output_len == 0:
        return np.zeros(0, dtype=np.uint8)
    if seed.size != n + output_len - 1:
        raise LengthMismatchError(
            f"seed length {seed.size} != n + out - 1 = {n + output_len - 1}"
        )
    if n == 0:
        return np.zeros(output_len, dtype=np.uint8)
    if n * output_len <= (1 << 24):
        counts = np.convolve(seed.astype(np.int64), bits[::-1].astype(np.int64), mode="valid")
        return (counts & 1).astype(np.uint8)
    # chunk the input so FFT round-off stays far below 0.5 on integer counts
    chunk = 1 << 20
    counts = np.zeros(output_len, dtype=np.int64)
    for c0 in range(0, n, chunk):
        c1 = min(c0 + chunk, n)
        seg = seed[c0 : c1 + output_len - 1].astype(np.float64)
        part = fftconvolve(seg, bits[c0:c1][::-1].astype(np.float64), mode="valid")
        counts += np.rint(part).astype(np.int64)
    return (counts & 1).astype(np.uint8)


def verification_tag_bits(eps_cor: float) -> int:
    """Tag length guaranteeing collision probability <= eps_cor."""
    if not 0.0 < eps_cor < 1.0:
        raise ValueError("eps_cor must be in (0, 1)")
    return int(math.ceil(math.log2(1.0 / eps_cor)))


@dataclass
class VerificationResult:
    passed: bool
    tag_bits: int


def verify_keys(
    alice: KeyBlock, bob: KeyBlock, eps_cor: float, rng: np.random.Generator
) -> VerificationResult:
    """Compare t-bit universal-hash tags of both keys, t = ceil(log2(1/eps_cor)).

    Differing keys collide with probability exactly 2^-t over the seed; a
    failed comparison rejects the block.
    """
    if len(alice) != len(bob):
        raise LengthMismatchError("corrected keys must have equal length")
    t = verification_tag_bits(eps_cor)
    n = len(alice)
    seed = rng.integers(0, 2, size=n + t - 1, dtype=np.uint8)
    tag_a = toeplitz_hash(alice.bits, seed, t)
    tag_b = toeplitz_hash(bob.bits, seed, t)
    return VerificationResult(bool(np.array_equal(tag_a, tag_b)), t)


@dataclass(frozen=True)
class HashSpec:
    """Seeded Toeplitz extractor mapping input_len bits to output_len bits."""

    seed: np.ndarray
    input_len: int
    output_len: int

    def __post_init__(self):
        object.__setattr__(self, "seed", np.asarray(self.seed, dtype=np.uint8))
        if self.output_len < 0 or self.input_len < 0:
            raise ValueError("lengths must be >= 0")
        if self.output_len > self.input_len:
            raise ValueError("output_len must be <= input_len")
        expected = max(0, self.input_len + self.output_len - 1)
        if self.seed.size != expected:
            raise LengthMismatchError(
                f"seed length {self.seed.size} != n + ell - 1 = {expected}"
            )

    @classmethod
    def random(cls, rng: np.random.Generator, input_len: int, output_len: int) -> "HashSpec":
        seed = rng.integers(0, 2, size=max(0, input_len + output_len - 1), dtype=np.uint8)
        return cls(seed, input_len, output_len)


def privacy_amplify(key: KeyBlock, spec: HashSpec) -> KeyBlock:
    """Compress a corrected key to its secret length with the Toeplitz map."""
    if len(key) != spec.input_len:
        raise LengthMismatchError(
            f"key length {len(key)} != spec input length {spec.input_len}"
        )
    out = toeplitz_hash(key.bits, spec.seed, spec.output_len)
    return KeyBlock(out, KeyRole.SECRET, key.party, key.block_id)


_KEY_MAGIC = b"DDIKEY1"


def save_key_block(kb: KeyBlock, path) -> None:
    """Length-prefixed packed-bit file with a one-line metadata header."""
    header = (
        f"{_KEY_MAGIC.decode()} role={kb.role.value} party={kb.party.value} "
        f"block_id={kb.block_id} bits={len(kb)}\n"
    ).encode()
    Path(path).write_bytes(header + np.packbits(kb.bits).tobytes())


def load_key_block(path) -> KeyBlock:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = raw[:nl].decode()
    fields = header.split()
    if fields[0] != _KEY_MAGIC.decode():
        raise ValueError(f"{path}: not a key block file")
    meta = dict(f.split("=", 1) for f in fields[1:])
    nbits = int(meta["bits"])
    bits = np.unpackbits(np.frombuffer(raw[nl + 1 :], dtype=np.uint8))[:nbits]
    return KeyBlock(
        bits,
        KeyRole(meta["role"]),
        Party(meta["party"]),
        int(meta["block_id"]),
    )
