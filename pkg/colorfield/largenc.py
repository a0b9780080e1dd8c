"""Leading order in 1/N_c: beta rescaling, the Dyson fixed point for the
propagator G_k, the lambda(beta-tilde) relation and energy predictions."""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from colorfield.coupling import get_context
from colorfield.errors import ConvergenceError, CriticalityError, UsageError


class LambdaValue(NamedTuple):
    value: float
    critical: bool


@dataclass
class DysonSolution:
    beta_tilde: float
    lam: float
    G: np.ndarray
    residual: float
    symmetric: bool
    iterations: int = 0


def _dims(n: int):
    if not isinstance(n, int) or n < 2:
        raise UsageError(f"n must be an integer >= 2, got {n}")
    n_a = n // 2
    return 1 << n, 1 << n_a, 1 << (n - n_a)


def beta0(n: int) -> float:
    N, N_A, N_Abar = _dims(n)
    return 2.0 * N * N / (N_A + N_Abar - 1)


def beta_from_tilde(beta_tilde: float, n: int) -> float:
    return beta_tilde * beta0(n)


def tilde_from_beta(beta: float, n: int) -> float:
    return beta / beta0(n)


def lambda_of_beta(beta_tilde: float) -> LambdaValue:
    """lambda = 1 - beta-tilde; flagged critical once fluctuations become massless."""
    return LambdaValue(1.0 - beta_tilde, beta_tilde >= 1.0)


def energy_prediction(n: int, n_colors: int) -> float:
    """Leading-order <H>_beta, independent of beta-tilde; also the rescaler H_Nc."""
    N, N_A, N_Abar = _dims(n)
    return n_colors * (N_A + N_Abar - 1) / (2.0 * N)


def lower_bound(n: int, n_colors: int) -> float:
    _, N_A, _ = _dims(n)
    return n_colors / (2.0 * N_A)


def rescale_energy(value: float, n: int, n_colors: int) -> float:
    return value / energy_prediction(n, n_colors)


def _solve_lambda(s: np.ndarray) -> float:
    N = s.size
    floor = float(np.min(s))

    def excess(lam):
        return float(np.sum(1.0 / (N * (lam + s)))) - 1.0

    return brentq(excess, -floor + 0.5 / N, -floor + 2.0, xtol=1e-15, maxiter=500)


def dyson_solve(n: int, beta_tilde: float, tol: float = 1e-12, max_iter: int = 10000,
                damping: float = 0.5, initial: Optional[np.ndarray] = None) -> DysonSolution:
    """Damped fixed-point iteration of G_k = 1 / (N (lambda + c sum_l W_kl G_l)).

    W_kl = Delta-tilde(k,l;k,l), c = beta-tilde * beta0 / (2N), and lambda is
    fixed at every step by sum_k G_k = 1.
    """
    if beta_tilde >= 1.0:
        raise CriticalityError(
            f"symmetric branch unstable at beta_tilde={beta_tilde}: lambda = 1 - beta_tilde <= 0")
    if not 0.0 < damping <= 1.0:
        raise UsageError(f"damping must lie in (0, 1], got {damping}")
    ctx = get_context(n)
    N = ctx.N
    W = ctx.delta_tilde_diagonal()
    coupling = beta_tilde * beta0(n) / (2.0 * N)
    if initial is None:
        G = np.full(N, 1.0 / N)
    else:
        G = np.asarray(initial, dtype=np.float64).copy()
        if G.shape != (N,) or np.any(G <= 0):
            raise UsageError(f"initial propagator must be {N} positive numbers")
        G /= G.sum()

    residual = np.inf
    lam = 1.0 - beta_tilde
    for iteration in range(1, max_iter + 1):
        s = coupling * (W @ G)
        lam = _solve_lambda(s)
        target = 1.0 / (N * (lam + s))
        residual = float(np.max(np.abs(G - target)))
        if residual < tol:
            break
        G = (1.0 - damping) * G + damping * target
        G /= G.sum()
    else:
        raise ConvergenceError(
            f"Dyson iteration did not converge in {max_iter} steps (residual {residual:.3e})",
            residual=residual, iterations=max_iter)

    symmetric = bool(np.max(np.abs(G - 1.0 / N)) <= 1e-10)
    logging.info(f"dyson n={n} beta_tilde={beta_tilde}: lambda={lam:.12g} "
                 f"residual={residual:.3e} after {iteration} iterations")
    return DysonSolution(beta_tilde=beta_tilde, lam=lam, G=G, residual=residual,
                         symmetric=symmetric, iterations=iteration)
