"""Moments and cumulants of H over the uniform sphere (beta = 0).

Three routes: exact Wick enumeration over permutations with integer
arithmetic, the analytic cactus formulas, and Monte Carlo k-statistics.
"""

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from colorfield.config import derive_seed, worker_count
from colorfield.coupling import get_context
from colorfield.errors import UsageError
from colorfield.field import energy_batch, random_phis
from colorfield.stats import MAX_KSTAT_ORDER, block_jackknife, k_statistic

MAX_MOMENT_ORDER = 64
# (max order) -> largest n for which Wick enumeration is attempted
EXACT_LIMITS = {1: 6, 2: 4, 3: 3}
MC_SHARD = 1 << 15


@dataclass(frozen=True)
class MomentSpec:
    """Exponents m_j of prod_j |z_j|^(2 m_j) on the unit sphere of C^N."""

    exponents: Dict[int, int]
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise UsageError(f"dimension N must be >= 1, got {self.N}")
        for j, m in self.exponents.items():
            if not 0 <= j < self.N:
                raise UsageError(f"index {j} outside 0..{self.N - 1}")
            if m < 0:
                raise UsageError(f"exponent for index {j} is negative ({m})")

    @property
    def total(self) -> int:
        return sum(self.exponents.values())


@dataclass
class CumulantReport:
    order: int
    N: int
    N_A: int
    N_Abar: int
    exact: Optional[float] = None
    cactus: Optional[float] = None
    mc_mean: Optional[float] = None
    mc_stderr: Optional[float] = None

    def consistent(self, sigmas: float = 3.0) -> bool:
        if self.exact is None or self.mc_mean is None:
            return True
        return abs(self.exact - self.mc_mean) <= sigmas * self.mc_stderr


@dataclass
class ScalingFit:
    amplitude: float
    exponent: float
    covariance: np.ndarray
    points: List[Tuple[float, float, float]]
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def exponent_stderr(self) -> float:
        return float(np.sqrt(self.covariance[1, 1]))


@dataclass(frozen=True)
class ReferenceConstants:
    alpha: float = math.log2(3)
    gamma: float = 1.8417
    c: float = 1.05385
    kappa3_asymptote_coefficient: float = 67.4
    kappa3_asymptote_exponent: float = 4.158
    # order -> ((amplitude, err), (exponent, err)) from numerical fits
    numerical_fits: Dict[int, Tuple[Tuple[float, float], Tuple[float, float]]] = field(
        default_factory=lambda: {
            3: ((43.0, 12.0), (4.18, 0.06)),
            4: ((27.0, 20.0), (5.2, 0.5)),
            5: ((148.0, 90.0), (6.5, 1.5)),
        })

    @staticmethod
    def proposed_exponent(order: int) -> float:
        """Exponent of kappa^(m) ~ N^(-0.25 - 1.4 m)."""
        return -0.25 - 1.4 * order

    @staticmethod
    def large_nc_exponent(order: int) -> float:
        """Exponent of the cactus law kappa^(m) ~ N^(1 - 1.5 m)."""
        return 1.0 - 1.5 * order


def reference_constants() -> ReferenceConstants:
    return ReferenceConstants()


def wick_weight(total: int, N: int) -> Fraction:
    """(N-1)! / (N-1+total)!"""
    return Fraction(math.factorial(N - 1), math.factorial(N - 1 + total))


def sphere_moment(spec: MomentSpec) -> Fraction:
    total = spec.total
    if total > MAX_MOMENT_ORDER:
        raise UsageError(f"moment of total degree {total} exceeds the guard {MAX_MOMENT_ORDER}")
    numerator = 1
    for m in spec.exponents.values():
        numerator *= math.factorial(m)
    return numerator * wick_weight(total, spec.N)


def _check_exact(n: int, order: int):
    if order not in EXACT_LIMITS:
        raise UsageError(f"exact enumeration supports orders 1..{max(EXACT_LIMITS)}, got {order}")
    if n > EXACT_LIMITS[order]:
        raise UsageError(
            f"exact order-{order} enumeration is limited to n <= {EXACT_LIMITS[order]}, got n={n}")


def _letters(count: int) -> List[str]:
    return [chr(ord("a") + i) if i < 26 else chr(ord("A") + i - 26) for i in range(count)]


def raw_moment_exact(n: int, order: int) -> Fraction:
    """<H^m>_0 for complex states by summing over S_{2m} contractions."""
    _check_exact(n, order)
    ctx = get_context(n)
    size = 2 * order
    if order == 1:
        ks = np.arange(ctx.N, dtype=np.int64)
        k, kp = ks[:, None], ks[None, :]
        total = int(ctx.delta_array(k, kp, k, kp, scaled=True).sum()
                    + ctx.delta_array(k, kp, kp, k, scaled=True).sum())
        return Fraction(total, ctx.denominator) * wick_weight(size, ctx.N)
    D = ctx.delta_tensor()
    letters = _letters(size)
    total = 0
    for perm in itertools.permutations(range(size)):
        # z-bar index t is contracted with z index perm^-1(t)
        bar = [""] * size
        for s, t in enumerate(perm):
            bar[t] = letters[s]
        terms = [letters[2 * i] + letters[2 * i + 1] + bar[2 * i] + bar[2 * i + 1]
                 for i in range(order)]
        subscripts = ",".join(terms) + "->"
        total += int(np.einsum(subscripts, *([D] * order), optimize=True))
    return Fraction(total, ctx.denominator ** order) * wick_weight(size, ctx.N)


def raw_moments_exact(n: int, order: int) -> List[Fraction]:
    """[<H>_0, ..., <H^order>_0] as exact rationals."""
    _check_exact(n, order)
    return [raw_moment_exact(n, m) for m in range(1, order + 1)]


def cumulants_from_moments(raw: Sequence[Fraction]) -> List[Fraction]:
    out = []
    if len(raw) >= 1:
        out.append(raw[0])
    if len(raw) >= 2:
        out.append(raw[1] - raw[0] ** 2)
    if len(raw) >= 3:
        out.append(raw[2] - 3 * raw[1] * raw[0] + 2 * raw[0] ** 3)
    return out


def _sizes(n: int) -> Tuple[int, int, int]:
    if n < 2:
        raise UsageError(f"n must be >= 2, got {n}")
    n_a = n // 2
    return 1 << n, 1 << n_a, 1 << (n - n_a)


def cactus_cumulant_exact(n: int, order: int) -> Fraction:
    N, N_A, N_Abar = _sizes(n)
    S = N_A + N_Abar
    if order == 1:
        return Fraction(S, N + 1)
    if order == 2:
        return Fraction(4 * S ** 2, (N + 1) * (N + 2) * (N + 3))
    if order == 3:
        return Fraction(40 * S ** 3, (N + 1) * (N + 2) * (N + 3) * (N + 4) * (N + 5))
    raise UsageError(f"cactus formulas exist for orders 1..3, got {order}")


def cactus_cumulants(n: int, order: int) -> float:
    return float(cactus_cumulant_exact(n, order))


def exact_cumulants(n: int, max_order: int) -> List[CumulantReport]:
    _check_exact(n, max_order)
    N, N_A, N_Abar = _sizes(n)
    kappas = cumulants_from_moments(raw_moments_exact(n, max_order))
    return [CumulantReport(order=m, N=N, N_A=N_A, N_Abar=N_Abar, exact=float(kappa),
                           cactus=cactus_cumulants(n, m))
            for m, kappa in enumerate(kappas, start=1)]


def _energy_shard(args) -> np.ndarray:
    n, n_colors, count, seed = args
    rng = np.random.default_rng(seed)
    return energy_batch(random_phis(n, n_colors, count, rng), n)


def sample_energies(n: int, n_colors: int, samples: int, seed: int) -> np.ndarray:
    """H of `samples` uniform states; shard s is seeded by derive_seed(seed, s)."""
    shards = []
    remaining, s = samples, 0
    while remaining > 0:
        count = min(MC_SHARD, remaining)
        shards.append((n, n_colors, count, derive_seed(seed, s)))
        remaining -= count
        s += 1
    workers = min(worker_count(), len(shards))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(_energy_shard, shards))
    else:
        parts = [_energy_shard(shard) for shard in shards]
    return np.concatenate(parts)


def mc_cumulants(n: int, n_colors: int, order: int, samples: int, seed: int) -> List[CumulantReport]:
    if not 1 <= order <= MAX_KSTAT_ORDER:
        raise UsageError(f"Monte Carlo cumulants support orders 1..{MAX_KSTAT_ORDER}, got {order}")
    if samples < 10 * order:
        raise UsageError(f"order {order} needs at least {10 * order} samples, got {samples}")
    N, N_A, N_Abar = _sizes(n)
    H = sample_energies(n, n_colors, samples, seed)
    n_blocks = min(50, samples // 2)
    reports = []
    for m in range(1, order + 1):
        mean, err = block_jackknife(H, lambda x, m=m: k_statistic(x, m), n_blocks=n_blocks)
        cactus = cactus_cumulants(n, m) if n_colors == 2 and m <= 3 else None
        reports.append(CumulantReport(order=m, N=N, N_A=N_A, N_Abar=N_Abar, cactus=cactus,
                                      mc_mean=mean, mc_stderr=err))
    logging.info(f"mc cumulants n={n} N_c={n_colors} samples={samples}: "
                 + ", ".join(f"k{r.order}={r.mc_mean:.6g}" for r in reports))
    return reports


def sphere_first_moment(n: int, n_colors: int) -> Fraction:
    """<H>_0 on the sphere of dimension N * N_c from the three Wick pairings of Delta-tilde."""
    ctx = get_context(n)
    ks = np.arange(ctx.N, dtype=np.int64)
    k, l = ks[:, None], ks[None, :]
    pairs = 2 * ctx.delta_array(k, l, k, l, scaled=True) - ctx.delta_array(k, k, l, l, scaled=True)
    kkll = 2 * ctx.delta_array(k, k, l, l, scaled=True) - ctx.delta_array(k, l, k, l, scaled=True)
    swapped = 2 * ctx.delta_array(k, l, l, k, scaled=True) - ctx.delta_array(k, l, l, k, scaled=True)
    a, b, c = (int(x.sum()) for x in (pairs, kkll, swapped))
    D = ctx.N * n_colors
    contraction = Fraction(n_colors ** 2 * a + n_colors * (b + c), ctx.denominator)
    return Fraction(n_colors, 2) * contraction / (D * (D + 2))


def fit_scaling(points: Sequence[Tuple[float, float, float]]) -> ScalingFit:
    """Weighted fit of value = A * N^(-b) in log-log space."""
    pts = [(float(N), float(v), float(e)) for N, v, e in points]
    if len(pts) < 3:
        raise UsageError(f"scaling fit needs at least 3 points, got {len(pts)}")
    Ns = np.array([p[0] for p in pts])
    values = np.array([p[1] for p in pts])
    errs = np.array([p[2] for p in pts])
    if np.any(values <= 0) or np.any(Ns <= 0):
        raise UsageError("scaling fit needs positive N and positive values")
    y = np.log(values)
    design = np.column_stack([np.ones_like(Ns), -np.log(Ns)])
    weighted = bool(np.all(errs > 0))
    w = (values / errs) ** 2 if weighted else np.ones_like(values)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    residuals = y - design @ coef
    covariance = np.linalg.inv(design.T @ (design * w[:, None]))
    if not weighted and len(pts) > 2:
        covariance = covariance * float(residuals @ residuals) / (len(pts) - 2)
    return ScalingFit(amplitude=float(np.exp(coef[0])), exponent=float(coef[1]),
                      covariance=covariance, points=pts, residuals=residuals)
