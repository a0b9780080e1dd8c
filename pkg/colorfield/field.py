"""Colored states, the purity potential H and its gradient.

A colored state stores Phi as an (N, N_c) float array, one row per
configuration k. Per-bipartition purity goes through the X-matrix form,
symmetrized over the two orientations of the bipartition (contract A, keep
Abar and the reverse); this average equals the Delta-tilde quartic for any
n and N_c, and the reduced-state purity at N_c = 2.
"""

import csv
import json
import logging
import os
from dataclasses import InitVar, dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from colorfield.coupling import (
    CouplingContext,
    Subset,
    get_context,
    subset_index_map,
)
from colorfield.errors import InvalidStateError, UsageError

MAX_FIELD_QUBITS = 12
MAX_BRUTEFORCE_QUBITS = 6
CONSTRUCTION_TOL = 1e-12
ACCEPT_TOL = 1e-9
BATCH_CHUNK = 2048


def _check_sizes(n: int, n_colors: int):
    if not isinstance(n, (int, np.integer)) or not 2 <= n <= MAX_FIELD_QUBITS:
        raise UsageError(f"n must be in [2, {MAX_FIELD_QUBITS}] for field evaluation, got {n}")
    if not isinstance(n_colors, (int, np.integer)) or n_colors < 1:
        raise UsageError(f"n_colors must be >= 1, got {n_colors}")


@dataclass
class ColoredState:
    """Real field Phi_k^mu with unit global norm.

    The norm is checked to CONSTRUCTION_TOL unless built with check=False;
    chains rotate phi in place, so later checks go through check_norm.
    """

    n: int
    n_colors: int
    phi: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        _check_sizes(self.n, self.n_colors)
        self.phi = np.array(self.phi, dtype=np.float64)
        expected = (1 << self.n, self.n_colors)
        if self.phi.shape != expected:
            raise UsageError(f"phi has shape {self.phi.shape}, expected {expected}")
        if not np.all(np.isfinite(self.phi)):
            raise InvalidStateError("state contains non-finite entries")
        if check:
            self.check_norm(CONSTRUCTION_TOL)

    @property
    def N(self) -> int:
        return 1 << self.n

    def norm_error(self) -> float:
        return abs(float(np.sum(self.phi * self.phi)) - 1.0)

    def check_norm(self, tol: float = ACCEPT_TOL):
        err = self.norm_error()
        if err > tol:
            raise InvalidStateError(f"state norm deviates from 1 by {err:.3e} (tolerance {tol:.0e})")

    def copy(self) -> "ColoredState":
        return ColoredState(self.n, self.n_colors, self.phi.copy(), check=False)


@dataclass
class ComplexState:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_sizes(self.n, 2)
        self.amplitudes = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if self.amplitudes.shape != (1 << self.n,):
            raise UsageError(f"expected {1 << self.n} amplitudes, got {self.amplitudes.shape[0]}")
        err = abs(float(np.vdot(self.amplitudes, self.amplitudes).real) - 1.0)
        if err > CONSTRUCTION_TOL:
            raise InvalidStateError(f"complex state norm deviates from 1 by {err:.3e}")


@dataclass
class PurityReport:
    per_bipartition: Dict[Subset, float]
    total: float
    lower_bound: float
    upper_bound: float = field(default=0.0)


def random_state(n: int, n_colors: int, seed=None) -> ColoredState:
    """Uniform point on the unit sphere of dimension N * N_c."""
    _check_sizes(n, n_colors)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = rng.standard_normal((1 << n, n_colors))
    x /= np.linalg.norm(x)
    return ColoredState(n, n_colors, x)


def random_phis(n: int, n_colors: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """`count` independent uniform sphere points as a (count, N, N_c) array."""
    x = rng.standard_normal((count, 1 << n, n_colors))
    x /= np.linalg.norm(x.reshape(count, -1), axis=1)[:, None, None]
    return x


def _orientation_f(T: np.ndarray) -> np.ndarray:
    """2 sum X^2 - sum X.Y for T[..., p, i, mu] contracted over p."""
    X = np.einsum("...pim,...pjn->...imjn", T, T)
    s1 = np.einsum("...imjn,...imjn->...", X, X)
    s2 = np.einsum("...imjn,...injm->...", X, X)
    return 2.0 * s1 - s2


def _symmetrized_f(T: np.ndarray) -> np.ndarray:
    return 0.5 * (_orientation_f(T) + _orientation_f(np.swapaxes(T, -3, -2)))


def _bipartition_values(phi: np.ndarray, ctx: CouplingContext) -> np.ndarray:
    """Per-bipartition purity for phi of shape (..., N, N_c)."""
    n_colors = phi.shape[-1]
    T = phi[..., ctx.maps.perm, :]
    return 0.5 * n_colors * _symmetrized_f(T)


def quartic_energy(phi: np.ndarray, ctx: CouplingContext) -> float:
    """H of an arbitrary (not necessarily normalized) (N, N_c) array."""
    return float(np.mean(_bipartition_values(phi, ctx)))


def _orientation_grad(T: np.ndarray) -> np.ndarray:
    # half of d(_orientation_f)/dT
    X = np.einsum("bpim,bpjn->bimjn", T, T)
    XT = np.einsum("bkrjn,bajn->bakr", X, T)
    YT = np.einsum("bknjr,bajn->bakr", X, T)
    return 4.0 * XT - 2.0 * YT


def quartic_gradient(phi: np.ndarray, ctx: CouplingContext) -> np.ndarray:
    """dH/dPhi of the unconstrained quartic form."""
    n_colors = phi.shape[-1]
    maps = ctx.maps
    T = phi[maps.perm]
    g0 = _orientation_grad(T)
    g1 = np.swapaxes(_orientation_grad(np.swapaxes(T, 1, 2)), 1, 2)
    gT = 0.5 * n_colors * (g0 + g1)
    b_idx = np.arange(len(maps.subsets))[:, None]
    per_b = gT[b_idx, maps.a_index, maps.abar_index]
    return per_b.mean(axis=0)


def tangent_project(phi: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return grad - np.sum(grad * phi) * phi


def purity_bipartition(state: ColoredState, subset: Sequence[int]) -> float:
    ctx = get_context(state.n)
    b = ctx.bipartition_index(subset)
    T = state.phi[ctx.maps.perm[b]]
    return float(0.5 * state.n_colors * _symmetrized_f(T))


def lower_bound_for(n: int, n_colors: int) -> float:
    return n_colors / (2.0 * (1 << (n // 2)))


def energy(state: ColoredState) -> PurityReport:
    state.check_norm(ACCEPT_TOL)
    ctx = get_context(state.n)
    values = _bipartition_values(state.phi, ctx)
    return PurityReport(
        per_bipartition={A: float(v) for A, v in zip(ctx.bipartitions, values)},
        total=float(np.mean(values)),
        lower_bound=lower_bound_for(state.n, state.n_colors),
        upper_bound=state.n_colors / 2.0,
    )


def energy_batch(phis: np.ndarray, n: int) -> np.ndarray:
    """H for a stack of states of shape (S, N, N_c), evaluated in chunks."""
    ctx = get_context(n)
    out = np.empty(phis.shape[0])
    for start in range(0, phis.shape[0], BATCH_CHUNK):
        chunk = phis[start:start + BATCH_CHUNK]
        out[start:start + BATCH_CHUNK] = _bipartition_values(chunk, ctx).mean(axis=-1)
    return out


def energy_bruteforce(state: ColoredState) -> float:
    """Direct quadruple sum of Delta-tilde over Z_2^n."""
    if state.n > MAX_BRUTEFORCE_QUBITS:
        raise UsageError(
            f"brute-force energy is O(N^4) and limited to n <= {MAX_BRUTEFORCE_QUBITS}; "
            f"use energy() for n={state.n}")
    ctx = get_context(state.n)
    ks = np.arange(ctx.N, dtype=np.int64)
    G = state.phi @ state.phi.T
    kp = ks[:, None, None]
    l = ks[None, :, None]
    lp = ks[None, None, :]
    total = 0.0
    for k in range(ctx.N):
        dt = 2.0 * ctx.delta_array(k, kp, l, lp) - ctx.delta_array(k, l, kp, lp)
        total += float(np.einsum("alb,l,ab->", dt, G[k], G))
    return 0.5 * state.n_colors * total


def gradient(state: ColoredState) -> np.ndarray:
    state.check_norm(ACCEPT_TOL)
    return quartic_gradient(state.phi, get_context(state.n))


def complex_to_colored(z: ComplexState) -> ColoredState:
    return ColoredState(z.n, 2, np.stack([z.amplitudes.real, z.amplitudes.imag], axis=1))


def colored_to_complex(state: ColoredState) -> ComplexState:
    if state.n_colors != 2:
        raise UsageError(f"only N_c = 2 states map to complex amplitudes, got N_c={state.n_colors}")
    return ComplexState(state.n, state.phi[:, 0] + 1j * state.phi[:, 1])


def purity_complex(z: ComplexState, subset: Sequence[int]) -> float:
    """Tr rho_A^2 from the N_A x N_Abar amplitude matrix."""
    M = z.amplitudes[subset_index_map(z.n, tuple(subset))]
    rho = M @ M.conj().T
    return float(np.real(np.sum(rho * rho.T)))


def single_configuration_state(n: int, n_colors: int, k: int = 0,
                               color_vector: Optional[Sequence[float]] = None) -> ColoredState:
    _check_sizes(n, n_colors)
    if not 0 <= k < (1 << n):
        raise UsageError(f"configuration {k} does not fit in {n} qubits")
    vec = _unit_color(n_colors, color_vector)
    phi = np.zeros((1 << n, n_colors))
    phi[k] = vec
    return ColoredState(n, n_colors, phi)


def ghz_state(n: int, n_colors: int = 2) -> ColoredState:
    """(|0...0> + |1...1>)/sqrt(2) in the first color."""
    _check_sizes(n, n_colors)
    phi = np.zeros((1 << n, n_colors))
    phi[0, 0] = phi[-1, 0] = np.sqrt(0.5)
    return ColoredState(n, n_colors, phi)


def canonical_minimizer(n: int, n_colors: int, subset: Sequence[int],
                        color_vector: Optional[Sequence[float]] = None) -> ColoredState:
    """Phi_k = phi delta(k_Abar, (k_A, 0...0)) / sqrt(N_A), saturating the bound on A."""
    _check_sizes(n, n_colors)
    ctx = get_context(n)
    perm = ctx.maps.perm[ctx.bipartition_index(subset)]
    vec = _unit_color(n_colors, color_vector)
    phi = np.zeros((ctx.N, n_colors))
    diag = np.arange(ctx.N_A)
    phi[perm[diag, diag]] = vec / np.sqrt(ctx.N_A)
    return ColoredState(n, n_colors, phi)


def _unit_color(n_colors: int, color_vector) -> np.ndarray:
    if color_vector is None:
        vec = np.zeros(n_colors)
        vec[0] = 1.0
        return vec
    vec = np.asarray(color_vector, dtype=np.float64)
    if vec.shape != (n_colors,):
        raise UsageError(f"color vector must have {n_colors} entries")
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise UsageError("color vector must be nonzero")
    return vec / norm


def write_state(state: ColoredState, path: str) -> str:
    """JSON ({n, n_colors, phi}) or, for a .csv path, one row per k."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if path.endswith(".csv"):
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["k"] + [f"phi_{mu}" for mu in range(state.n_colors)])
            for k, row in enumerate(state.phi):
                writer.writerow([k] + [f"{v:.17g}" for v in row])
    else:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"n": state.n, "n_colors": state.n_colors, "phi": state.phi.tolist()}, f)
    return path


def read_state(path: str) -> ColoredState:
    if not os.path.exists(path):
        raise UsageError(f"state file not found: {path}")
    try:
        if path.endswith(".csv"):
            with open(path, "r", encoding="utf-8") as f:
                rows = list(csv.reader(f))
            header, body = rows[0], rows[1:]
            n_colors = len(header) - 1
            body.sort(key=lambda r: int(r[0]))
            phi = np.array([[float(v) for v in r[1:]] for r in body])
            n = int(round(np.log2(len(body))))
        else:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
            n, n_colors, phi = int(data["n"]), int(data["n_colors"]), np.array(data["phi"])
    except (ValueError, KeyError, IndexError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot parse state file {path}: {e}")
    state = ColoredState(n, n_colors, phi, check=False)
    err = state.norm_error()
    if err > ACCEPT_TOL:
        raise InvalidStateError(f"state in {path} has norm error {err:.3e}")
    if err > CONSTRUCTION_TOL:
        logging.warning(f"state in {path} accepted with norm error {err:.3e}")
    return state
