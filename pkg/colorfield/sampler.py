"""Metropolis sampling on the unit sphere, temperature schedules, replica
overlaps and ground-state search."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError, field_validator, model_validator

from colorfield.config import derive_seed, worker_count
from colorfield.coupling import get_context
from colorfield.errors import UsageError
from colorfield.field import (
    MAX_FIELD_QUBITS,
    ColoredState,
    quartic_energy,
    quartic_gradient,
    random_state,
    tangent_project,
)
from colorfield.largenc import beta0, energy_prediction
from colorfield.stats import blocking_error

SCHEDULE_KINDS = ("fixed", "anneal-up", "anneal-down", "hysteresis-loop", "quench")
ADAPT_FACTOR = 1.05
MAX_SCAN_COLORS = 32
# beta-tilde ladder used by the anneal stage of find_minimum
MINIMIZE_ANNEAL_LADDER = (0.5, 1.0, 2.0, 4.0, 8.0)


class MCConfig(BaseModel):
    n: int
    n_colors: int
    seed: int
    steps_per_measurement: int = 1
    theta_max: float = 0.5
    target_acceptance: Tuple[float, float] = (0.3, 0.6)
    adapt: bool = True

    @field_validator("n")
    @classmethod
    def _check_n(cls, v):
        if not 2 <= v <= MAX_FIELD_QUBITS:
            raise ValueError(f"n must be in [2, {MAX_FIELD_QUBITS}]")
        return v

    @field_validator("n_colors")
    @classmethod
    def _check_colors(cls, v):
        if v < 1:
            raise ValueError("n_colors must be >= 1")
        return v

    @field_validator("steps_per_measurement")
    @classmethod
    def _check_cadence(cls, v):
        if v < 1:
            raise ValueError("steps_per_measurement must be >= 1")
        return v

    @field_validator("theta_max")
    @classmethod
    def _check_theta(cls, v):
        if not 0.0 < v <= math.pi:
            raise ValueError("theta_max must lie in (0, pi]")
        return v

    @model_validator(mode="after")
    def _check_window(self):
        lo, hi = self.target_acceptance
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("target_acceptance must be an interval inside [0, 1]")
        return self


def make_config(**kwargs) -> MCConfig:
    """MCConfig with validation failures reported as UsageError."""
    try:
        return MCConfig(**kwargs)
    except ValidationError as e:
        raise UsageError(f"invalid Monte Carlo configuration: {e}")


@dataclass
class Schedule:
    legs: List[Tuple[float, int]]
    kind: str = "fixed"

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise UsageError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if not self.legs:
            raise UsageError("a schedule needs at least one leg")
        self.legs = [(float(b), int(s)) for b, s in self.legs]
        for beta, steps in self.legs:
            if steps < 1:
                raise UsageError(f"leg at beta={beta} has {steps} steps; need >= 1")
        if self.kind == "hysteresis-loop":
            betas = [b for b, _ in self.legs]
            if betas != betas[::-1]:
                raise UsageError("hysteresis-loop legs must be palindromic in beta")

    @property
    def betas(self) -> List[float]:
        return [b for b, _ in self.legs]

    @classmethod
    def fixed(cls, beta: float, steps: int) -> "Schedule":
        return cls([(beta, steps)], "fixed")

    @classmethod
    def anneal_up(cls, betas: Sequence[float], steps: int) -> "Schedule":
        """Cooling: beta increases leg by leg."""
        return cls([(b, steps) for b in sorted(betas)], "anneal-up")

    @classmethod
    def anneal_down(cls, betas: Sequence[float], steps: int) -> "Schedule":
        """Heating: beta decreases leg by leg."""
        return cls([(b, steps) for b in sorted(betas, reverse=True)], "anneal-down")

    @classmethod
    def quench(cls, beta_from: float, beta_to: float, steps: int) -> "Schedule":
        return cls([(beta_from, steps), (beta_to, steps)], "quench")

    @classmethod
    def hysteresis_loop(cls, beta_max: float, delta_beta: float, steps: int) -> "Schedule":
        """beta_max down to 0 in steps of delta_beta, then back up."""
        if beta_max <= 0 or delta_beta <= 0:
            raise UsageError("hysteresis needs beta_max > 0 and delta_beta > 0")
        down = [beta_max - i * delta_beta for i in range(int(math.floor(beta_max / delta_beta + 1e-9)) + 1)]
        down = [max(b, 0.0) for b in down]
        if down[-1] > 1e-12:
            down.append(0.0)
        return cls([(b, steps) for b in down + down[::-1]], "hysteresis-loop")


def default_beta_tilde_grid() -> List[float]:
    """beta-tilde in steps of 0.1 up to 3, then steps of 1 up to 10."""
    fine = [round(0.1 * i, 10) for i in range(31)]
    return fine + [float(b) for b in range(4, 11)]


@dataclass
class LegRecord:
    beta: float
    beta_tilde: float
    mean_H: float
    stderr_H: float
    acceptance_rate: float
    theta_max: float
    n_measurements: int
    energies: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


@dataclass
class ChainRecord:
    n: int
    n_colors: int
    seed: int
    legs: List[LegRecord] = field(default_factory=list)
    snapshots: List[ColoredState] = field(default_factory=list)
    final_state: Optional[ColoredState] = None

    def rescaled(self) -> List[float]:
        scale = energy_prediction(self.n, self.n_colors)
        return [leg.mean_H / scale for leg in self.legs]


class MetropolisKernel:
    """Givens-rotation Metropolis moves on a state owned by one chain.

    The kernel edits `state.phi` in place and keeps a per-bipartition
    gather T[b, a, i] = phi[perm[b, a, i]] in sync, so a move only
    recomputes the X-matrix blocks in the two rows it touches.
    """

    def __init__(self, state: ColoredState, rng: np.random.Generator):
        self.state = state
        self.rng = rng
        self.ctx = get_context(state.n)
        maps = self.ctx.maps
        self.a_index = maps.a_index
        self.abar_index = maps.abar_index
        self.T = state.phi[maps.perm]
        self.br = np.arange(len(maps.subsets))
        self.n_coords = self.ctx.N * state.n_colors
        self.energy = quartic_energy(state.phi, self.ctx)

    def resync(self) -> float:
        """Recompute H from scratch; returns the accumulated drift."""
        fresh = quartic_energy(self.state.phi, self.ctx)
        drift = fresh - self.energy
        self.energy = fresh
        return drift

    @staticmethod
    def _f(blocks: np.ndarray) -> np.ndarray:
        return 2.0 * np.sum(blocks * blocks, axis=(-2, -1)) - np.einsum("...mn,...nm->...", blocks, blocks)

    def _rows(self, T: np.ndarray, i: np.ndarray) -> np.ndarray:
        return np.einsum("bpm,bpjn->bjmn", T[self.br, :, i, :], T)

    def _row_f(self, orientation: int, i1: np.ndarray, i2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        T = self.T if orientation == 0 else np.swapaxes(self.T, 1, 2)
        return self._f(self._rows(T, i1)), self._f(self._rows(T, i2))

    def _delta_f(self, old, new, i1, i2) -> np.ndarray:
        d1 = new[0] - old[0]
        d2 = new[1] - old[1]
        rs1, rs2 = d1.sum(axis=1), d2.sum(axis=1)
        diag1 = d1[self.br, i1]
        diag2 = d2[self.br, i2]
        cross = d1[self.br, i2]
        return np.where(i1 == i2, 2.0 * rs1 - diag1, 2.0 * (rs1 + rs2) - diag1 - diag2 - 2.0 * cross)

    def propose(self, beta: float, theta_max: float) -> bool:
        n_colors = self.state.n_colors
        c1 = int(self.rng.integers(self.n_coords))
        c2 = int(self.rng.integers(self.n_coords - 1))
        if c2 >= c1:
            c2 += 1
        k, mu = divmod(c1, n_colors)
        l, nu = divmod(c2, n_colors)
        theta = self.rng.uniform(-theta_max, theta_max)
        u = self.rng.random()

        phi = self.state.phi
        x, y = phi[k, mu], phi[l, nu]
        c, s = math.cos(theta), math.sin(theta)
        x_new, y_new = c * x - s * y, s * x + c * y

        ak, ik = self.a_index[:, k], self.abar_index[:, k]
        al, il = self.a_index[:, l], self.abar_index[:, l]
        old0 = self._row_f(0, ik, il)
        old1 = self._row_f(1, ak, al)
        self.T[self.br, ak, ik, mu] = x_new
        self.T[self.br, al, il, nu] = y_new
        new0 = self._row_f(0, ik, il)
        new1 = self._row_f(1, ak, al)
        dF = 0.5 * (self._delta_f(old0, new0, ik, il) + self._delta_f(old1, new1, ak, al))
        dH = 0.5 * n_colors * float(np.mean(dF))

        # dH == 0 is always accepted; keeps beta = +-inf from producing nan
        log_weight = 0.0 if dH == 0.0 else -beta * dH
        if log_weight >= 0.0 or u < math.exp(log_weight):
            phi[k, mu], phi[l, nu] = x_new, y_new
            self.energy += dH
            return True
        self.T[self.br, ak, ik, mu] = x
        self.T[self.br, al, il, nu] = y
        return False

    def sweep(self, beta: float, theta_max: float) -> int:
        """N * N_c proposals; returns the number accepted."""
        return sum(self.propose(beta, theta_max) for _ in range(self.n_coords))


def metropolis_step(state: ColoredState, beta: float, theta_max: float,
                    rng: np.random.Generator) -> bool:
    """One proposal applied in place to `state`."""
    state.check_norm()
    return MetropolisKernel(state, rng).propose(beta, theta_max)


def _adapt(theta: float, rate: float, window: Tuple[float, float]) -> float:
    lo, hi = window
    if rate > hi:
        if theta < math.pi and theta * ADAPT_FACTOR >= math.pi:
            logging.warning(f"theta_max clamped to pi (acceptance {rate:.3f} above window)")
        return min(theta * ADAPT_FACTOR, math.pi)
    if rate < lo:
        return theta / ADAPT_FACTOR
    return theta


def _run_leg(kernel: MetropolisKernel, config: MCConfig, beta: float, steps: int,
             theta: float) -> Tuple[LegRecord, float]:
    burn = steps // 2
    for _ in range(burn):
        accepted = kernel.sweep(beta, theta)
        if config.adapt:
            theta = _adapt(theta, accepted / kernel.n_coords, config.target_acceptance)
    measured_steps = steps - burn
    energies, accepted_total = [], 0
    for step in range(1, measured_steps + 1):
        accepted_total += kernel.sweep(beta, theta)
        if step % config.steps_per_measurement == 0:
            energies.append(kernel.energy)
    if not energies:
        energies.append(kernel.energy)
    drift = kernel.resync()
    if abs(drift) > 1e-9:
        logging.warning(f"incremental energy drifted by {drift:.3e} over a leg at beta={beta}")
    series = np.array(energies)
    mean, err, _ = blocking_error(series)
    record = LegRecord(beta=beta, beta_tilde=beta / beta0(config.n), mean_H=mean, stderr_H=err,
                       acceptance_rate=accepted_total / (measured_steps * kernel.n_coords),
                       theta_max=theta, n_measurements=len(series), energies=series)
    return record, theta


def run_chain(config: MCConfig, schedule: Schedule,
              initial: Union[ColoredState, str] = "random",
              keep_snapshots: bool = False,
              on_leg: Optional[Callable[[int, LegRecord], None]] = None) -> ChainRecord:
    """Run the legs of `schedule` in order on one chain."""
    rng = np.random.default_rng(config.seed)
    if isinstance(initial, str):
        if initial != "random":
            raise UsageError(f"initial state must be a ColoredState or 'random', got {initial!r}")
        state = random_state(config.n, config.n_colors, rng)
    else:
        if (initial.n, initial.n_colors) != (config.n, config.n_colors):
            raise UsageError(
                f"initial state has (n, N_c) = ({initial.n}, {initial.n_colors}), "
                f"config has ({config.n}, {config.n_colors})")
        initial.check_norm()
        state = initial.copy()

    kernel = MetropolisKernel(state, rng)
    record = ChainRecord(n=config.n, n_colors=config.n_colors, seed=config.seed)
    theta = config.theta_max
    for index, (beta, steps) in enumerate(schedule.legs):
        leg, theta = _run_leg(kernel, config, beta, steps, theta)
        record.legs.append(leg)
        if keep_snapshots:
            record.snapshots.append(state.copy())
        logging.info(f"leg {index} beta={beta:.6g}: <H>={leg.mean_H:.6g} +- {leg.stderr_H:.2g} "
                     f"acc={leg.acceptance_rate:.3f} theta={theta:.4g}")
        if on_leg is not None:
            on_leg(index, leg)
    state.check_norm()
    record.final_state = state
    return record


def anneal(config: MCConfig, beta_tilde_grid: Sequence[float], steps: int,
           initial: Union[ColoredState, str] = "random", **kwargs) -> ChainRecord:
    """Cool through the grid on one chain, without restarting between points."""
    b0 = beta0(config.n)
    return run_chain(config, Schedule.anneal_up([bt * b0 for bt in beta_tilde_grid], steps),
                     initial, **kwargs)


def hysteresis(config: MCConfig, beta_max: float, delta_beta: float,
               steps_per_beta: int, **kwargs) -> Tuple[ChainRecord, ChainRecord]:
    """Equilibrate at beta_max, heat stepwise to 0, cool back.

    Returns (cooling, heating) branches; each lists its legs in the order run.
    """
    if beta_max <= 0:
        raise UsageError(f"beta_max must be positive, got {beta_max}")
    loop = Schedule.hysteresis_loop(beta_max, delta_beta, steps_per_beta)
    warm = run_chain(config, Schedule.fixed(beta_max, steps_per_beta))
    loop_config = config.model_copy(update={"seed": derive_seed(config.seed, 1),
                                            "theta_max": warm.legs[-1].theta_max})
    full = run_chain(loop_config, loop, initial=warm.final_state, **kwargs)
    half = len(loop.legs) // 2
    heating = ChainRecord(n=config.n, n_colors=config.n_colors, seed=loop_config.seed,
                          legs=full.legs[:half], snapshots=full.snapshots[:half])
    cooling = ChainRecord(n=config.n, n_colors=config.n_colors, seed=loop_config.seed,
                          legs=full.legs[half:], snapshots=full.snapshots[half:],
                          final_state=full.final_state)
    return cooling, heating


def _sweep_point(args) -> LegRecord:
    config, beta, steps = args
    return run_chain(config, Schedule.fixed(beta, steps)).legs[0]


def beta_sweep(config: MCConfig, betas: Sequence[float], steps: int) -> List[LegRecord]:
    """Independent fixed-beta chains from fresh random starts, one per grid point."""
    tasks = [(config.model_copy(update={"seed": derive_seed(config.seed, i)}), float(b), steps)
             for i, b in enumerate(betas)]
    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


@dataclass
class ReplicaPair:
    """Two chains at equal (n, N_c, beta) that differ in seed."""

    n: int
    n_colors: int
    beta: float
    seeds: Tuple[int, int]
    states: Optional[Tuple[ColoredState, ColoredState]] = None
    q_series: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.seeds[0] == self.seeds[1]:
            logging.warning("replica pair built with identical seeds; the chains will coincide")

    @classmethod
    def create(cls, n: int, n_colors: int, beta: float, master_seed: int) -> "ReplicaPair":
        return cls(n, n_colors, beta, (derive_seed(master_seed, 0), derive_seed(master_seed, 1)))


def overlap(pair: ReplicaPair, beta: float, n_measurements: int, interval: int = 10,
            burn_in: Optional[int] = None, theta_max: float = 0.5,
            target_acceptance: Tuple[float, float] = (0.3, 0.6)) -> Tuple[float, float]:
    """<q^2> * N * N_c between the two replicas, sampled every `interval` sweeps.

    burn_in defaults to ten sampling intervals; theta_max adapts only there.
    """
    if n_measurements < 1:
        raise UsageError("n_measurements must be >= 1")
    if beta != pair.beta:
        logging.warning(f"overlap requested at beta={beta}, pair was built for beta={pair.beta}")
    burn_in = 10 * interval if burn_in is None else burn_in
    kernels, thetas = [], []
    for r, seed in enumerate(pair.seeds):
        rng = np.random.default_rng(seed)
        if pair.states is not None:
            state = pair.states[r].copy()
        else:
            state = random_state(pair.n, pair.n_colors, rng)
        kernels.append(MetropolisKernel(state, rng))
        thetas.append(theta_max)

    for _ in range(burn_in):
        for r, kernel in enumerate(kernels):
            rate = kernel.sweep(beta, thetas[r]) / kernel.n_coords
            thetas[r] = _adapt(thetas[r], rate, target_acceptance)

    scale = kernels[0].n_coords
    q2 = []
    for _ in range(n_measurements):
        for _ in range(interval):
            for r, kernel in enumerate(kernels):
                kernel.sweep(beta, thetas[r])
        q = float(np.sum(kernels[0].state.phi * kernels[1].state.phi))
        pair.q_series.append(q)
        q2.append(q * q * scale)
    pair.states = (kernels[0].state, kernels[1].state)
    mean, err, _ = blocking_error(np.array(q2))
    return mean, err


def annealed_overlap(n: int, n_colors: int, betas: Sequence[float], n_measurements: int,
                     master_seed: int, interval: int = 10, steps_between: int = 500,
                     burn_in: Optional[int] = None, theta_max: float = 0.5,
                     on_point: Optional[Callable[[int, float, float, float], None]] = None,
                     ) -> List[Tuple[float, float, float]]:
    """Cool two replicas together through `betas`, measuring the overlap at each one.

    The replicas start from random states and run `burn_in` sweeps before the first
    point; each later point starts from where the previous one ended and runs
    `steps_between` sweeps first. Returns (beta, mean, stderr) in increasing beta.
    """
    if steps_between < 0:
        raise UsageError(f"steps_between must be >= 0, got {steps_between}")
    states = None
    results = []
    for i, beta in enumerate(sorted(float(b) for b in betas)):
        pair = ReplicaPair.create(n, n_colors, beta, derive_seed(master_seed, i))
        pair.states = states
        mean, err = overlap(pair, beta, n_measurements, interval=interval,
                            burn_in=burn_in if states is None else steps_between,
                            theta_max=theta_max)
        states = pair.states
        results.append((beta, mean, err))
        if on_point is not None:
            on_point(i, beta, mean, err)
    return results


def _sphere_descent(phi: np.ndarray, ctx, tol: float, max_iter: int) -> Tuple[float, np.ndarray, bool]:
    """Projected gradient descent with Barzilai-Borwein steps and Armijo backtracking."""
    x = phi / np.linalg.norm(phi)
    E = quartic_energy(x, ctx)
    g = tangent_project(x, quartic_gradient(x, ctx))
    step = 0.1
    for _ in range(max_iter):
        gnorm2 = float(np.sum(g * g))
        slack = 4.0 * np.finfo(float).eps * abs(E)
        if math.sqrt(gnorm2) < tol:
            return E, x, True
        alpha = step
        while True:
            trial = x - alpha * g
            trial /= np.linalg.norm(trial)
            E_trial = quartic_energy(trial, ctx)
            if E_trial <= E - 1e-4 * alpha * gnorm2 + slack or alpha < 1e-16:
                break
            alpha *= 0.5
        g_trial = tangent_project(trial, quartic_gradient(trial, ctx))
        s, yv = trial - x, g_trial - g
        sy = float(np.sum(s * yv))
        step = float(np.sum(s * s)) / sy if sy > 1e-300 else 0.1
        step = min(max(step, 1e-8), 10.0)
        if alpha < 1e-16 and E_trial > E:
            return E, x, False
        x, E, g = trial, E_trial, g_trial
    return E, x, math.sqrt(float(np.sum(g * g))) < tol


def _minimize_restart(args) -> Tuple[float, np.ndarray]:
    n, n_colors, seed, anneal_sweeps, tol, max_iter = args
    rng = np.random.default_rng(seed)
    state = random_state(n, n_colors, rng)
    if anneal_sweeps > 0:
        kernel = MetropolisKernel(state, rng)
        b0 = beta0(n)
        per_rung = max(1, anneal_sweeps // len(MINIMIZE_ANNEAL_LADDER))
        theta = 0.5
        for bt in MINIMIZE_ANNEAL_LADDER:
            for _ in range(per_rung):
                rate = kernel.sweep(bt * b0, theta) / kernel.n_coords
                theta = _adapt(theta, rate, (0.3, 0.6))
    E, x, converged = _sphere_descent(state.phi, get_context(n), tol, max_iter)
    if not converged:
        logging.warning(f"descent for restart seed {seed} stopped at max_iter={max_iter} "
                        f"without reaching gradient norm {tol:.0e}")
    return E, x


def find_minimum(n: int, n_colors: int, restarts: int, seed: int, anneal_sweeps: int = 40,
                 tol: float = 1e-8, max_iter: int = 20000) -> Tuple[float, ColoredState]:
    """Best of `restarts` anneal-then-descend runs; restart i uses derive_seed(seed, i)."""
    if restarts < 1:
        raise UsageError(f"restarts must be >= 1, got {restarts}")
    make_config(n=n, n_colors=n_colors, seed=seed)
    tasks = [(n, n_colors, derive_seed(seed, i), anneal_sweeps, tol, max_iter) for i in range(restarts)]
    workers = min(worker_count(), restarts)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_minimize_restart, tasks))
    else:
        results = [_minimize_restart(t) for t in tasks]
    best = min(range(restarts), key=lambda i: results[i][0])
    E0, phi = results[best]
    logging.info(f"minimum n={n} N_c={n_colors}: E0={E0:.12g} (restart {best} of {restarts})")
    return E0, ColoredState(n, n_colors, phi)


def frustration_scan(n: int, nc_range: Sequence[int], restarts: int, seed: int,
                     **kwargs) -> List[Tuple[int, float]]:
    """(N_c, 2 E0 / N_c) for each N_c; N_c uses derive_seed(seed, N_c)."""
    colors = [int(c) for c in nc_range]
    if not colors or min(colors) < 1 or max(colors) > MAX_SCAN_COLORS:
        raise UsageError(f"N_c range must lie within [1, {MAX_SCAN_COLORS}]")
    table = []
    for nc in colors:
        E0, _ = find_minimum(n, nc, restarts, derive_seed(seed, nc), **kwargs)
        table.append((nc, 2.0 * E0 / nc))
    return table


def law_rescaled_minimum(n_colors: int) -> float:
    """Rescaled n=4 minimum: (N_c + 2) / (6 N_c), flat at 1/4 once N_c >= 4."""
    return max((n_colors + 2) / (6.0 * n_colors), 0.25)


def rescaled_lower_bound(n: int) -> float:
    return 1.0 / (1 << (n // 2))
