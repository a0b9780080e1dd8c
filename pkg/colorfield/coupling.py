"""Bit-string algebra over Z_2^n and the exact coupling functions g, g-hat,
Delta and Delta-tilde of the balanced-bipartition purity average.

Qubit labels are 1-based; qubit i is bit (i - 1) of a configuration word.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np

from colorfield.errors import NumericalError, UsageError

MAX_QUBITS = 24
# Largest n for which per-configuration index maps are materialized.
MAX_MAPPED_QUBITS = 14
# Largest n for which the direct row-sum check walks all of Z_2^n.
DIRECT_ROW_CHECK_QUBITS = 12

Subset = Tuple[int, ...]


def popcount(x: int) -> int:
    return bin(x).count("1")


def binom(p: int, q: int) -> int:
    """Binomial coefficient with binom(p, q) = 0 outside 0 <= q <= p."""
    if p < 0 or q < 0 or q > p:
        return 0
    return math.comb(p, q)


@dataclass(frozen=True)
class BitString:
    """An element of Z_2^n."""

    bits: int
    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or not 1 <= self.n <= MAX_QUBITS:
            raise UsageError(f"qubit count must be in [1, {MAX_QUBITS}], got {self.n}")
        if not isinstance(self.bits, (int, np.integer)) or not 0 <= int(self.bits) < (1 << self.n):
            raise UsageError(f"bits {self.bits} do not fit in {self.n} qubits")
        object.__setattr__(self, "bits", int(self.bits))

    @classmethod
    def from_string(cls, text: str) -> "BitString":
        """Parse '0101' (most significant bit first)."""
        text = text.strip()
        if not text or any(c not in "01" for c in text):
            raise UsageError(f"not a bit string: {text!r}")
        return cls(int(text, 2), len(text))

    @property
    def weight(self) -> int:
        return popcount(self.bits)

    def __int__(self) -> int:
        return self.bits

    def __str__(self) -> str:
        return format(self.bits, f"0{self.n}b")


class BitOps(NamedTuple):
    xor: BitString
    or_: BitString
    and_: BitString
    weight_a: int


def bit_ops(a: BitString, b: BitString) -> BitOps:
    """Componentwise XOR, OR, AND and the Hamming weight |a|."""
    if a.n != b.n:
        raise UsageError(f"bit strings have different lengths ({a.n} vs {b.n})")
    return BitOps(
        xor=BitString(a.bits ^ b.bits, a.n),
        or_=BitString(a.bits | b.bits, a.n),
        and_=BitString(a.bits & b.bits, a.n),
        weight_a=a.weight,
    )


def balanced_bipartitions(n: int) -> List[Subset]:
    """All subsets of size floor(n/2) of {1..n}, in lexicographic order."""
    if not isinstance(n, int) or n < 2:
        raise UsageError(f"balanced bipartitions need n >= 2, got {n}")
    if n > MAX_QUBITS:
        raise UsageError(f"n={n} exceeds the {MAX_QUBITS}-qubit guard")
    return list(itertools.combinations(range(1, n + 1), n // 2))


def complement(subset: Subset, n: int) -> Subset:
    chosen = set(subset)
    return tuple(q for q in range(1, n + 1) if q not in chosen)


def _g_hat_exact(n: int, n_a: int, s: int, t: int) -> Fraction:
    norm = binom(n, n_a)
    return Fraction(binom(n - s - t, n_a - s) + binom(n - s - t, n_a - t), 2 * norm)


def _pack(ks: np.ndarray, positions: Subset) -> np.ndarray:
    out = np.zeros_like(ks)
    for j, q in enumerate(positions):
        out |= ((ks >> (q - 1)) & 1) << j
    return out


def subset_index_map(n: int, subset: Subset) -> np.ndarray:
    """perm[a, i] = k for an arbitrary proper subset A (not only balanced)."""
    subset = tuple(sorted(int(q) for q in subset))
    if not subset or len(subset) >= n or subset[0] < 1 or subset[-1] > n or len(set(subset)) != len(subset):
        raise UsageError(f"{subset} is not a proper nonempty subset of 1..{n}")
    ks = np.arange(1 << n, dtype=np.int64)
    perm = np.empty((1 << len(subset), 1 << (n - len(subset))), dtype=np.int64)
    perm[_pack(ks, subset), _pack(ks, complement(subset, n))] = ks
    return perm


@dataclass(frozen=True)
class BipartitionMaps:
    """Index maps between configuration k and (k_A, k_Abar) per bipartition.

    perm[b, a, i] is the configuration whose A-part is a and Abar-part is i.
    """

    subsets: Tuple[Subset, ...]
    perm: np.ndarray
    a_index: np.ndarray
    abar_index: np.ndarray


class CouplingContext:
    """Precomputed coupling data for fixed (n, n_A = floor(n/2))."""

    def __init__(self, n: int, seed: Optional[int] = None):
        if not isinstance(n, int) or n < 2:
            raise UsageError(f"coupling context needs n >= 2, got {n}")
        if n > MAX_QUBITS:
            raise UsageError(f"n={n} exceeds the {MAX_QUBITS}-qubit guard")
        self.n = n
        self.n_a = n // 2
        self.N = 1 << n
        self.N_A = 1 << self.n_a
        self.N_Abar = 1 << (n - self.n_a)
        self.bipartitions = balanced_bipartitions(n)
        self.denominator = 2 * binom(n, self.n_a)
        self.ghat_table = tuple(
            tuple(_g_hat_exact(n, self.n_a, s, t) for t in range(n + 1))
            for s in range(n + 1)
        )
        self.ghat_scaled = np.array(
            [[binom(n - s - t, self.n_a - s) + binom(n - s - t, self.n_a - t)
              for t in range(n + 1)] for s in range(n + 1)],
            dtype=np.int64,
        )
        self.ghat_float = self.ghat_scaled / float(self.denominator)
        self.delta_tilde_row_sum = self.N_A + self.N_Abar - 1
        self._check_row_sum(seed)

    def __repr__(self) -> str:
        return f"CouplingContext(n={self.n}, n_A={self.n_a})"

    def _check_row_sum(self, seed: Optional[int]):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(self.N))
        if self.n <= DIRECT_ROW_CHECK_QUBITS:
            total = sum((delta_tilde(k, l, k, l, self) for l in range(self.N)), Fraction(0))
        else:
            # Delta-tilde(k,l;k,l) = 2 g-hat(0,|k^l|) - delta_{kl}, grouped by weight
            total = 2 * sum((binom(self.n, w) * self.ghat_table[0][w] for w in range(self.n + 1)),
                            Fraction(0)) - 1
        if total != self.delta_tilde_row_sum:
            raise NumericalError(
                f"row sum of Delta-tilde at k={k} is {total}, expected {self.delta_tilde_row_sum}")
        logging.debug(f"row-sum identity verified at k={k} for n={self.n}")

    @cached_property
    def popcounts(self) -> np.ndarray:
        self._require_mapped()
        ks = np.arange(self.N, dtype=np.int64)
        counts = np.zeros(self.N, dtype=np.int64)
        for q in range(self.n):
            counts += (ks >> q) & 1
        return counts

    @cached_property
    def maps(self) -> BipartitionMaps:
        self._require_mapped()
        ks = np.arange(self.N, dtype=np.int64)
        n_bip = len(self.bipartitions)
        perm = np.empty((n_bip, self.N_A, self.N_Abar), dtype=np.int64)
        a_index = np.empty((n_bip, self.N), dtype=np.int64)
        abar_index = np.empty((n_bip, self.N), dtype=np.int64)
        for b, subset in enumerate(self.bipartitions):
            a = _pack(ks, subset)
            i = _pack(ks, complement(subset, self.n))
            perm[b, a, i] = ks
            a_index[b] = a
            abar_index[b] = i
        return BipartitionMaps(tuple(self.bipartitions), perm, a_index, abar_index)

    def bipartition_index(self, subset) -> int:
        key = tuple(sorted(int(q) for q in subset))
        if len(key) != self.n_a:
            raise UsageError(f"subset {tuple(subset)} has size {len(key)}, expected n_A={self.n_a}")
        try:
            return self.bipartitions.index(key)
        except ValueError:
            raise UsageError(f"subset {tuple(subset)} is not a subset of 1..{self.n}")

    def _require_mapped(self):
        if self.n > MAX_MAPPED_QUBITS:
            raise UsageError(
                f"index maps for n={self.n} exceed the {MAX_MAPPED_QUBITS}-qubit working limit")

    def delta_array(self, k, kp, l, lp, scaled: bool = False) -> np.ndarray:
        """Vectorized Delta over broadcastable integer arrays.

        With scaled=True the result is the exact integer Delta * denominator.
        """
        k, kp, l, lp = (np.asarray(x, dtype=np.int64) for x in (k, kp, l, lp))
        a = (k ^ l) | (kp ^ lp)
        b = (k ^ lp) | (kp ^ l)
        pc = self.popcounts
        table = self.ghat_scaled if scaled else self.ghat_float
        return np.where((a & b) == 0, table[pc[a], pc[b]], 0)

    def delta_tensor(self) -> np.ndarray:
        """Full integer tensor D[k,k',l,l'] = Delta * denominator (n <= 4)."""
        if self.n > 4:
            raise UsageError(f"the full Delta tensor is limited to n <= 4, got n={self.n}")
        ks = np.arange(self.N, dtype=np.int64)
        return self.delta_array(ks[:, None, None, None], ks[None, :, None, None],
                                ks[None, None, :, None], ks[None, None, None, :], scaled=True)

    def delta_tilde_diagonal(self) -> np.ndarray:
        """W[k, l] = Delta-tilde(k, l; k, l) as floats."""
        ks = np.arange(self.N, dtype=np.int64)
        return (2.0 * self.delta_array(ks[:, None], ks[None, :], ks[:, None], ks[None, :])
                - self.delta_array(ks[:, None], ks[:, None], ks[None, :], ks[None, :]))


@lru_cache(maxsize=32)
def get_context(n: int) -> CouplingContext:
    """Shared immutable context per n."""
    return CouplingContext(n, seed=n)


BitLike = Union[BitString, int]


def _word(x: BitLike, n: int) -> int:
    if isinstance(x, BitString):
        if x.n != n:
            raise UsageError(f"bit string has n={x.n}, context has n={n}")
        return x.bits
    value = int(x)
    if not 0 <= value < (1 << n):
        raise UsageError(f"configuration {value} does not fit in {n} qubits")
    return value


def g_hat(s: int, t: int, ctx: CouplingContext) -> Fraction:
    if not (0 <= s <= ctx.n and 0 <= t <= ctx.n):
        raise UsageError(f"g_hat arguments must lie in [0, {ctx.n}], got ({s}, {t})")
    return ctx.ghat_table[s][t]


def g(a: BitLike, b: BitLike, ctx: CouplingContext) -> Fraction:
    a, b = _word(a, ctx.n), _word(b, ctx.n)
    if a & b:
        return Fraction(0)
    return ctx.ghat_table[popcount(a)][popcount(b)]


def delta(k: BitLike, kp: BitLike, l: BitLike, lp: BitLike, ctx: CouplingContext) -> Fraction:
    k, kp, l, lp = (_word(x, ctx.n) for x in (k, kp, l, lp))
    a = (k ^ l) | (kp ^ lp)
    b = (k ^ lp) | (kp ^ l)
    if a & b:
        return Fraction(0)
    return ctx.ghat_table[popcount(a)][popcount(b)]


def delta_tilde(k: BitLike, kp: BitLike, l: BitLike, lp: BitLike, ctx: CouplingContext) -> Fraction:
    return 2 * delta(k, kp, l, lp, ctx) - delta(k, l, kp, lp, ctx)


def coupling_row(ctx: CouplingContext, k: BitLike = 0) -> List[Tuple[int, Fraction, Fraction]]:
    """(l, Delta(k,l;k,l), Delta-tilde(k,l;k,l)) for every l."""
    k = _word(k, ctx.n)
    return [(l, delta(k, l, k, l, ctx), delta_tilde(k, l, k, l, ctx)) for l in range(ctx.N)]
