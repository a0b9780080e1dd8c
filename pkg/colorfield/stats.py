"""Estimators for cumulants and autocorrelated Monte Carlo series."""

from typing import Callable, List, Tuple

import numpy as np
from scipy import stats

from colorfield.errors import UsageError

MAX_KSTAT_ORDER = 5


def _as_series(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise UsageError("empty sample series")
    return x


def k_statistic(samples, order: int) -> float:
    """Unbiased estimator of the `order`-th cumulant."""
    x = _as_series(samples)
    if not 1 <= order <= MAX_KSTAT_ORDER:
        raise UsageError(f"k-statistics are available for orders 1..{MAX_KSTAT_ORDER}, got {order}")
    if x.size <= order:
        raise UsageError(f"order-{order} k-statistic needs more than {order} samples")
    if order <= 4:
        return float(stats.kstat(x, order))
    n = float(x.size)
    d = x - x.mean()
    m2, m3, m5 = np.mean(d ** 2), np.mean(d ** 3), np.mean(d ** 5)
    return float(n ** 3 * ((n + 5) * m5 - 10 * (n - 1) * m2 * m3)
                 / ((n - 1) * (n - 2) * (n - 3) * (n - 4)))


def k_statistics(samples, max_order: int) -> List[float]:
    return [k_statistic(samples, m) for m in range(1, max_order + 1)]


def block_jackknife(samples, estimator: Callable[[np.ndarray], float],
                    n_blocks: int = 50) -> Tuple[float, float]:
    """Delete-one-block jackknife: (estimate on all data, stderr)."""
    x = _as_series(samples)
    if n_blocks < 2 or x.size < 2 * n_blocks:
        raise UsageError(f"need at least {2 * n_blocks} samples for {n_blocks} jackknife blocks")
    usable = (x.size // n_blocks) * n_blocks
    blocks = np.split(x[:usable], n_blocks)
    leave_out = np.array([
        estimator(np.concatenate(blocks[:b] + blocks[b + 1:])) for b in range(n_blocks)
    ])
    variance = np.sum((leave_out - leave_out.mean()) ** 2) * ((n_blocks - 1) / n_blocks)
    return float(estimator(x)), float(np.sqrt(variance))


def blocking_error(series, min_blocks: int = 16) -> Tuple[float, float, List[float]]:
    """Mean and stderr of a correlated series by repeated block doubling.

    Returns (mean, stderr, per-level stderr). The reported stderr is the
    largest per-level estimate over levels that keep >= min_blocks blocks.
    """
    x = _as_series(series)
    mean = float(x.mean())
    if x.size < 2:
        return mean, 0.0, [0.0]
    levels = []
    blocked = x.copy()
    while blocked.size >= max(min_blocks, 2):
        levels.append(float(np.std(blocked, ddof=1) / np.sqrt(blocked.size)))
        if blocked.size % 2:
            blocked = blocked[:-1]
        blocked = 0.5 * (blocked[0::2] + blocked[1::2])
    if not levels:
        levels = [float(np.std(x, ddof=1) / np.sqrt(x.size))]
    return mean, max(levels), levels
