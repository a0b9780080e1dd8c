import logging
import math
import warnings

import numpy as np
import pytest

from colorfield.config import derive_seed
from colorfield.coupling import get_context
from colorfield.errors import UsageError
from colorfield.field import energy_batch, quartic_energy, random_phis, random_state
from colorfield.largenc import beta0, energy_prediction, lower_bound
from colorfield.sampler import (
    ChainRecord,
    MetropolisKernel,
    ReplicaPair,
    Schedule,
    anneal,
    annealed_overlap,
    beta_sweep,
    default_beta_tilde_grid,
    find_minimum,
    frustration_scan,
    hysteresis,
    law_rescaled_minimum,
    make_config,
    metropolis_step,
    overlap,
    rescaled_lower_bound,
    run_chain,
)


def _kernel(n, nc, seed):
    rng = np.random.default_rng(seed)
    return MetropolisKernel(random_state(n, nc, rng), rng)


def test_config_validation():
    config = make_config(n=4, n_colors=2, seed=1)
    assert config.theta_max == 0.5
    assert config.target_acceptance == (0.3, 0.6)
    with pytest.raises(UsageError):
        make_config(n=1, n_colors=2, seed=1)
    with pytest.raises(UsageError):
        make_config(n=4, n_colors=0, seed=1)
    with pytest.raises(UsageError):
        make_config(n=4, n_colors=2, seed=1, theta_max=4.0)
    with pytest.raises(UsageError):
        make_config(n=4, n_colors=2, seed=1, target_acceptance=(0.6, 0.3))
    with pytest.raises(UsageError):
        make_config(n=4, n_colors=2, seed=1, steps_per_measurement=0)


def test_schedule_validation():
    with pytest.raises(UsageError):
        Schedule([(1.0, 10)], kind="bogus")
    with pytest.raises(UsageError):
        Schedule([])
    with pytest.raises(UsageError):
        Schedule([(1.0, 0)])
    with pytest.raises(UsageError):
        Schedule([(1.0, 5), (2.0, 5)], kind="hysteresis-loop")
    with pytest.raises(UsageError):
        Schedule.hysteresis_loop(0.0, 4.0, 10)


def test_schedule_constructors():
    assert Schedule.anneal_up([3.0, 1.0, 2.0], 5).betas == [1.0, 2.0, 3.0]
    assert Schedule.anneal_down([3.0, 1.0, 2.0], 5).betas == [3.0, 2.0, 1.0]
    assert Schedule.quench(0.0, 50.0, 7).legs == [(0.0, 7), (50.0, 7)]
    loop = Schedule.hysteresis_loop(130.0, 4.0, 10)
    assert len(loop.legs) == 68
    assert loop.betas[0] == 130.0 and loop.betas[33] == 0.0 and loop.betas[-1] == 130.0
    assert loop.betas == loop.betas[::-1]


def test_default_grid():
    grid = default_beta_tilde_grid()
    assert len(grid) == 38
    assert grid[0] == 0.0 and grid[30] == 3.0 and grid[-1] == 10.0
    assert grid == sorted(grid)


def test_zero_beta_accepts_every_proposal():
    kernel = _kernel(3, 2, 0)
    assert kernel.sweep(0.0, 0.7) == kernel.n_coords


def test_infinite_beta_never_raises_energy():
    kernel = _kernel(3, 2, 1)
    energies = [kernel.energy]
    for _ in range(300):
        kernel.propose(math.inf, 0.3)
        energies.append(kernel.energy)
    assert all(b <= a + 1e-14 for a, b in zip(energies, energies[1:]))


@pytest.mark.parametrize("beta", [-1e6, -math.inf])
def test_large_negative_beta_rejects_downhill_moves(beta):
    kernel = _kernel(3, 2, 2)
    downhill = accepted = 0
    for _ in range(2000):
        before = kernel.energy
        if kernel.propose(beta, 0.3):
            accepted += 1
            downhill += kernel.energy < before - 1e-14
    assert accepted > 0
    assert downhill == 0


def test_negative_beta_acceptance_differs_from_zero_beta():
    hot, inverted = _kernel(3, 2, 4), _kernel(3, 2, 4)
    assert hot.sweep(0.0, 0.5) == hot.n_coords
    assert inverted.sweep(-100.0 * beta0(3), 0.5) < inverted.n_coords


def test_strongly_negative_beta_approaches_separable_limit():
    config = make_config(n=3, n_colors=2, seed=6)
    leg = run_chain(config, Schedule.fixed(-50.0 * beta0(3), 400)).legs[0]
    assert leg.mean_H > 0.8 * config.n_colors / 2.0
    assert leg.mean_H <= config.n_colors / 2.0 + 1e-12


@pytest.mark.parametrize("n", [3, 4])
@pytest.mark.parametrize("nc", [1, 2, 3])
def test_incremental_energy_matches_full_recompute(n, nc):
    kernel = _kernel(n, nc, 10 * n + nc)
    beta = beta0(n)
    for _ in range(400):
        kernel.propose(beta, 0.8)
    ctx = get_context(n)
    assert kernel.energy == pytest.approx(quartic_energy(kernel.state.phi, ctx), abs=1e-10)
    assert np.array_equal(kernel.T, kernel.state.phi[ctx.maps.perm])
    assert kernel.state.norm_error() < 1e-12


def test_metropolis_step_edits_state_in_place():
    state = random_state(2, 2, seed=3)
    before = state.phi.copy()
    accepted = metropolis_step(state, 0.0, 0.5, np.random.default_rng(4))
    assert accepted
    assert np.sum(state.phi != before) == 2
    assert state.norm_error() < 1e-12


def test_chain_is_reproducible():
    config = make_config(n=3, n_colors=2, seed=42)
    a = run_chain(config, Schedule.fixed(5.0, 20))
    b = run_chain(config, Schedule.fixed(5.0, 20))
    assert np.array_equal(a.final_state.phi, b.final_state.phi)
    assert a.legs[0].mean_H == b.legs[0].mean_H


def test_leg_bookkeeping():
    config = make_config(n=3, n_colors=2, seed=1, steps_per_measurement=2)
    record = run_chain(config, Schedule.fixed(0.0, 10), keep_snapshots=True)
    leg = record.legs[0]
    assert leg.n_measurements == 2
    assert leg.beta_tilde == 0.0
    assert leg.acceptance_rate == 1.0
    assert len(record.snapshots) == 1
    assert isinstance(record, ChainRecord)
    assert record.rescaled()[0] == pytest.approx(leg.mean_H / (2 * 5 / 16))


def test_initial_state_checks():
    config = make_config(n=3, n_colors=2, seed=1)
    with pytest.raises(UsageError):
        run_chain(config, Schedule.fixed(1.0, 2), initial=random_state(3, 3, seed=0))
    with pytest.raises(UsageError):
        run_chain(config, Schedule.fixed(1.0, 2), initial="ground")
    start = random_state(3, 2, seed=0)
    run_chain(config, Schedule.fixed(1.0, 2), initial=start)
    assert np.array_equal(start.phi, random_state(3, 2, seed=0).phi)


def test_zero_beta_chain_samples_uniform_mean():
    config = make_config(n=4, n_colors=2, seed=7)
    leg = run_chain(config, Schedule.fixed(0.0, 2000)).legs[0]
    assert abs(leg.mean_H - 8 / 17) <= 3 * leg.stderr_H


def test_negative_beta_favours_separable_states():
    config = make_config(n=3, n_colors=2, seed=5)
    hot = run_chain(config, Schedule.fixed(0.0, 100)).legs[0]
    inverted = run_chain(config, Schedule.fixed(-2.0 * beta0(3), 100)).legs[0]
    assert inverted.mean_H > hot.mean_H


def test_positive_beta_lowers_energy():
    config = make_config(n=3, n_colors=2, seed=5)
    hot = run_chain(config, Schedule.fixed(0.0, 100)).legs[0]
    cold = run_chain(config, Schedule.fixed(3.0 * beta0(3), 100)).legs[0]
    assert cold.mean_H < hot.mean_H


def test_anneal_visits_grid_in_increasing_order():
    config = make_config(n=2, n_colors=2, seed=3)
    record = anneal(config, [1.0, 0.0, 0.5], 4)
    assert [leg.beta_tilde for leg in record.legs] == pytest.approx([0.0, 0.5, 1.0])


def test_hysteresis_branches():
    config = make_config(n=2, n_colors=2, seed=9)
    cooling, heating = hysteresis(config, 8.0, 4.0, 4)
    assert [leg.beta for leg in heating.legs] == [8.0, 4.0, 0.0]
    assert [leg.beta for leg in cooling.legs] == [0.0, 4.0, 8.0]
    assert cooling.final_state is not None
    with pytest.raises(UsageError):
        hysteresis(config, -1.0, 4.0, 4)


def test_beta_sweep_uses_independent_points():
    config = make_config(n=2, n_colors=2, seed=3)
    legs = beta_sweep(config, [0.0, 10.0, 20.0], 6)
    assert [leg.beta for leg in legs] == [0.0, 10.0, 20.0]
    again = beta_sweep(config, [0.0, 10.0, 20.0], 6)
    assert [leg.mean_H for leg in legs] == [leg.mean_H for leg in again]


def test_identical_replicas_have_full_overlap(caplog):
    with caplog.at_level(logging.WARNING):
        pair = ReplicaPair(2, 2, 0.0, (5, 5))
    assert "identical seeds" in caplog.text
    mean, err = overlap(pair, 0.0, 5, interval=2, burn_in=2)
    assert mean == pytest.approx(8.0)
    assert err == pytest.approx(0.0, abs=1e-12)
    assert len(pair.q_series) == 5


def test_zero_beta_overlap_is_order_one():
    pair = ReplicaPair.create(3, 2, 0.0, master_seed=1)
    assert pair.seeds[0] != pair.seeds[1]
    mean, err = overlap(pair, 0.0, 200, interval=3)
    assert mean == pytest.approx(1.0, abs=0.5)
    with pytest.raises(UsageError):
        overlap(pair, 0.0, 0)


def test_annealed_overlap_carries_replicas_between_points():
    b = 2.0 * beta0(2)
    points = annealed_overlap(2, 2, [b, 0.0], 6, master_seed=3, interval=2, steps_between=5)
    assert [beta for beta, _, _ in points] == [0.0, b]

    first = ReplicaPair.create(2, 2, 0.0, derive_seed(3, 0))
    expected_first = overlap(first, 0.0, 6, interval=2)
    second = ReplicaPair.create(2, 2, b, derive_seed(3, 1))
    second.states = first.states
    expected_second = overlap(second, b, 6, interval=2, burn_in=5)
    assert points[0][1:] == expected_first
    assert points[1][1:] == expected_second

    fresh = ReplicaPair.create(2, 2, b, derive_seed(3, 1))
    assert overlap(fresh, b, 6, interval=2, burn_in=5) != expected_second
    with pytest.raises(UsageError):
        annealed_overlap(2, 2, [0.0], 4, master_seed=1, steps_between=-1)


@pytest.mark.parametrize("nc", [1, 2])
def test_minimum_of_two_qubits_reaches_bound(nc):
    E0, state = find_minimum(2, nc, restarts=2, seed=1)
    assert E0 == pytest.approx(nc / 4.0, abs=1e-7)
    assert state.norm_error() < 1e-10


def test_minimum_of_three_qubits_reaches_bound():
    E0, _ = find_minimum(3, 2, restarts=4, seed=2)
    assert E0 == pytest.approx(0.5, abs=1e-6)


def test_odd_qubit_minimum_respects_bound_with_many_colors():
    E0, state = find_minimum(3, 4, restarts=4, seed=8)
    assert E0 >= lower_bound(3, 4) - 1e-9
    assert E0 == pytest.approx(lower_bound(3, 4), abs=1e-6)
    assert state.norm_error() < 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("nc", [3, 4])
def test_five_qubit_minimum_respects_bound(nc):
    E0, _ = find_minimum(5, nc, restarts=6, seed=nc)
    assert E0 >= lower_bound(5, nc) - 1e-9


def test_minimum_guards():
    with pytest.raises(UsageError):
        find_minimum(3, 2, restarts=0, seed=1)
    with pytest.raises(UsageError):
        frustration_scan(3, [0, 1], restarts=1, seed=1)
    with pytest.raises(UsageError):
        frustration_scan(3, [33], restarts=1, seed=1)


def test_frustration_scan_two_qubits():
    table = frustration_scan(2, [1, 2, 3], restarts=2, seed=4)
    assert [nc for nc, _ in table] == [1, 2, 3]
    for _, value in table:
        assert value == pytest.approx(rescaled_lower_bound(2), abs=1e-6)


def test_rescaled_minimum_law():
    assert law_rescaled_minimum(2) == pytest.approx(1 / 3)
    assert law_rescaled_minimum(3) == pytest.approx(5 / 18)
    assert law_rescaled_minimum(4) == pytest.approx(0.25)
    assert law_rescaled_minimum(20) == pytest.approx(0.25)
    assert rescaled_lower_bound(4) == 0.25
    assert rescaled_lower_bound(5) == 0.25


@pytest.mark.slow
def test_sampled_mean_matches_importance_weights():
    n, nc, beta = 2, 1, 20.0
    rng = np.random.default_rng(0)
    H = energy_batch(random_phis(n, nc, 400000, rng), n)
    w = np.exp(-beta * (H - H.min()))
    expected = float(np.sum(w * H) / np.sum(w))
    weighted_err = float(np.sqrt(np.sum(w ** 2 * (H - expected) ** 2)) / np.sum(w))
    config = make_config(n=n, n_colors=nc, seed=1)
    leg = run_chain(config, Schedule.fixed(beta, 40000)).legs[0]
    assert abs(leg.mean_H - expected) <= 3 * math.hypot(leg.stderr_H, weighted_err)


@pytest.mark.slow
def test_four_qubit_frustration_scan():
    table = dict(frustration_scan(4, range(2, 9), restarts=20, seed=3))
    assert table[2] == pytest.approx(1 / 3, abs=0.002)
    assert table[3] == pytest.approx(5 / 18, abs=0.002)
    for nc in range(4, 9):
        assert table[nc] == pytest.approx(0.25, abs=0.002)
        assert table[nc] >= rescaled_lower_bound(4) - 1e-9


@pytest.mark.slow
def test_five_qubit_two_color_frustration():
    E0, _ = find_minimum(5, 2, restarts=20, seed=5)
    # two colors: the rescaled minimum 2 E0 / N_c is E0 itself
    assert E0 == pytest.approx(0.25, abs=0.002)


@pytest.mark.slow
def test_large_color_sweep_tracks_prediction_at_small_beta():
    config = make_config(n=4, n_colors=20, seed=2)
    legs = beta_sweep(config, [0.0, 0.5 * beta0(4)], 200)
    for leg in legs:
        assert leg.mean_H / 4.375 == pytest.approx(1.0, abs=0.1)


def _within(a, b, sigmas):
    return abs(a.mean_H - b.mean_H) <= sigmas * math.hypot(a.stderr_H, b.stderr_H)


@pytest.mark.slow
def test_large_color_sweep_shape():
    n, nc = 4, 20
    knee_grid = [0.5 + 0.25 * i for i in range(9)]
    grid = [0.0, 0.2] + knee_grid + [3.0]
    config = make_config(n=n, n_colors=nc, seed=12)
    legs = beta_sweep(config, [bt * beta0(n) for bt in grid], 1000)
    scale = energy_prediction(n, nc)
    ratios = [leg.mean_H / scale for leg in legs]

    assert ratios[0] == pytest.approx(1.0, rel=0.05)
    assert ratios[1] == pytest.approx(1.0, rel=0.05)
    for a, b in zip(legs, legs[1:]):
        assert b.mean_H <= a.mean_H + 2 * math.hypot(a.stderr_H, b.stderr_H)

    # second differences on the uniform part of the grid
    curve = ratios[2:11]
    d2 = [curve[i - 1] - 2 * curve[i] + curve[i + 1] for i in range(1, len(curve) - 1)]
    knee = int(np.argmin(d2)) + 1
    after = [i for i in range(knee + 1, len(curve) - 1) if d2[i - 1] > 0]
    assert after, "no change of curvature after the knee"
    assert 1.0 <= knee_grid[after[0]] <= 2.0


@pytest.mark.slow
def test_large_color_hysteresis_loop_closes():
    config = make_config(n=4, n_colors=20, seed=13)
    cooling, heating = hysteresis(config, 130.0, 4.0, 300)
    by_beta = {leg.beta: leg for leg in cooling.legs}
    assert sorted(by_beta) == sorted(leg.beta for leg in heating.legs)
    pairs = [(leg, by_beta[leg.beta]) for leg in heating.legs]
    # pointwise 2 sigma over every leg of both branches, with the chance misses of 34 draws allowed
    assert sum(_within(a, b, 2) for a, b in pairs) >= 0.85 * len(pairs)
    assert all(_within(a, b, 4) for a, b in pairs)


@pytest.mark.slow
def test_large_color_overlap_profile():
    n, nc = 4, 20
    b0 = beta0(n)
    grid = [0.0, 1.0, 2.0, 2.5, 3.0]
    points = annealed_overlap(n, nc, [bt * b0 for bt in grid], 100, master_seed=14, interval=10)
    _, q0, err0 = points[0]
    assert abs(q0 - 1.0) <= 3 * err0
    near = [q for beta, q, _ in points if 2.0 * b0 <= beta <= 3.0 * b0]
    if min(near) > 0.8 * q0:
        warnings.warn(f"no overlap drop near beta-tilde 2.5: q2 {near} against {q0:.3f} at beta = 0")
