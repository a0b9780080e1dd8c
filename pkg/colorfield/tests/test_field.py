import json
import logging

import numpy as np
import pytest

from colorfield.coupling import get_context
from colorfield.errors import InvalidStateError, UsageError
from colorfield.field import (
    ColoredState,
    ComplexState,
    canonical_minimizer,
    colored_to_complex,
    complex_to_colored,
    energy,
    energy_batch,
    energy_bruteforce,
    ghz_state,
    gradient,
    purity_bipartition,
    purity_complex,
    quartic_energy,
    quartic_gradient,
    random_phis,
    random_state,
    read_state,
    single_configuration_state,
    tangent_project,
    write_state,
)
from colorfield.largenc import lower_bound


def test_random_state_is_normalized_and_seeded():
    a = random_state(4, 3, seed=11)
    b = random_state(4, 3, seed=11)
    assert a.phi.shape == (16, 3)
    assert a.norm_error() < 1e-12
    assert np.array_equal(a.phi, b.phi)
    assert not np.array_equal(a.phi, random_state(4, 3, seed=12).phi)


@pytest.mark.parametrize("n,nc", [(3, 1), (4, 2), (5, 7)])
def test_single_configuration_has_maximal_purity(n, nc):
    state = single_configuration_state(n, nc, k=3, color_vector=np.arange(1, nc + 1))
    report = energy(state)
    assert report.total == pytest.approx(nc / 2.0, abs=1e-12)
    assert report.upper_bound == nc / 2.0
    for value in report.per_bipartition.values():
        assert value == pytest.approx(nc / 2.0, abs=1e-12)


@pytest.mark.parametrize("n,nc", [(4, 2), (4, 3), (5, 2), (5, 6)])
def test_canonical_minimizer_saturates_bound_on_its_bipartition(n, nc):
    subset = tuple(range(1, n // 2 + 1))
    state = canonical_minimizer(n, nc, subset)
    n_a = 1 << (n // 2)
    assert state.norm_error() < 1e-12
    assert purity_bipartition(state, subset) == pytest.approx(nc / (2.0 * n_a), abs=1e-12)
    assert energy(state).total >= nc / (2.0 * n_a) - 1e-12


def test_ghz_purity_n4():
    report = energy(ghz_state(4))
    assert report.total == pytest.approx(0.5, abs=1e-12)
    assert report.lower_bound == pytest.approx(0.25)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("nc", [1, 2, 3, 5])
def test_energy_matches_direct_sum(n, nc):
    state = random_state(n, nc, seed=100 * n + nc)
    assert energy(state).total == pytest.approx(energy_bruteforce(state), rel=1e-10)


def test_bruteforce_is_limited():
    with pytest.raises(UsageError):
        energy_bruteforce(random_state(7, 1, seed=0))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_two_color_energy_equals_mean_reduced_purity(n):
    state = random_state(n, 2, seed=n)
    z = colored_to_complex(state)
    ctx = get_context(n)
    purities = [purity_complex(z, A) for A in ctx.bipartitions]
    report = energy(state)
    assert report.total == pytest.approx(np.mean(purities), rel=1e-10)
    for A, value in zip(ctx.bipartitions, purities):
        assert report.per_bipartition[A] == pytest.approx(value, rel=1e-10)


def test_complex_purity_limits():
    product = np.zeros(16, dtype=complex)
    product[5] = 1j
    assert purity_complex(ComplexState(4, product), (1, 2)) == pytest.approx(1.0)

    entangled = colored_to_complex(canonical_minimizer(4, 2, (1, 3)))
    assert purity_complex(entangled, (1, 3)) == pytest.approx(0.25)


def test_complex_purity_is_equal_on_complements():
    rng = np.random.default_rng(4)
    amps = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    z = ComplexState(5, amps / np.linalg.norm(amps))
    assert purity_complex(z, (1, 4)) == pytest.approx(purity_complex(z, (2, 3, 5)), rel=1e-12)
    assert purity_complex(z, (2,)) == pytest.approx(purity_complex(z, (1, 3, 4, 5)), rel=1e-12)


def test_complex_round_trip_and_validation():
    state = random_state(3, 2, seed=3)
    back = complex_to_colored(colored_to_complex(state))
    assert np.allclose(back.phi, state.phi)
    with pytest.raises(UsageError):
        colored_to_complex(random_state(3, 3, seed=3))
    with pytest.raises(InvalidStateError):
        ComplexState(2, [1.0, 1.0, 0.0, 0.0])


def test_color_rotation_invariance():
    state = random_state(4, 3, seed=8)
    q, _ = np.linalg.qr(np.random.default_rng(9).standard_normal((3, 3)))
    rotated = ColoredState(4, 3, state.phi @ q)
    assert energy(rotated).total == pytest.approx(energy(state).total, rel=1e-12)


@pytest.mark.parametrize("m", [1, 6, 13])
def test_xor_translation_invariance(m):
    state = random_state(4, 2, seed=m)
    shifted = ColoredState(4, 2, state.phi[np.arange(16) ^ m])
    assert energy(shifted).total == pytest.approx(energy(state).total, rel=1e-12)


def test_qubit_exchange_invariance():
    state = random_state(4, 3, seed=21)
    ks = np.arange(16)
    swapped = (ks & ~0b11) | ((ks & 1) << 1) | ((ks >> 1) & 1)
    exchanged = ColoredState(4, 3, state.phi[swapped])
    assert energy(exchanged).total == pytest.approx(energy(state).total, rel=1e-12)


@pytest.mark.parametrize("n,nc", [(3, 4), (4, 2), (4, 3), (4, 5), (5, 2), (5, 3), (5, 4)])
def test_bounds_hold_for_random_states(n, nc):
    rng = np.random.default_rng(n * nc)
    values = energy_batch(random_phis(n, nc, 200, rng), n)
    lower = lower_bound(n, nc)
    assert lower == nc / (2.0 * (1 << (n // 2)))
    assert np.all(values >= lower - 1e-12)
    assert np.all(values <= nc / 2.0 + 1e-12)
    for phi in random_phis(n, nc, 5, rng):
        report = energy(ColoredState(n, nc, phi))
        assert report.lower_bound == pytest.approx(lower)
        assert all(v >= lower - 1e-12 for v in report.per_bipartition.values())


def test_energy_batch_matches_single_evaluation():
    rng = np.random.default_rng(2)
    phis = random_phis(3, 2, 5, rng)
    batch = energy_batch(phis, 3)
    for phi, value in zip(phis, batch):
        assert energy(ColoredState(3, 2, phi)).total == pytest.approx(value, rel=1e-12)


def test_gradient_matches_finite_differences():
    state = random_state(4, 2, seed=5)
    ctx = get_context(4)
    g = quartic_gradient(state.phi, ctx)
    h = 1e-6
    rng = np.random.default_rng(6)
    for _ in range(10):
        k, mu = int(rng.integers(16)), int(rng.integers(2))
        plus, minus = state.phi.copy(), state.phi.copy()
        plus[k, mu] += h
        minus[k, mu] -= h
        fd = (quartic_energy(plus, ctx) - quartic_energy(minus, ctx)) / (2 * h)
        assert fd == pytest.approx(g[k, mu], rel=1e-6, abs=1e-8)


def test_quartic_homogeneity_and_euler_identity():
    phi = random_state(3, 3, seed=7).phi
    ctx = get_context(3)
    assert quartic_energy(2.0 * phi, ctx) == pytest.approx(16.0 * quartic_energy(phi, ctx), rel=1e-12)
    g = quartic_gradient(phi, ctx)
    assert np.sum(phi * g) == pytest.approx(4.0 * quartic_energy(phi, ctx), rel=1e-12)
    assert np.allclose(quartic_gradient(2.0 * phi, ctx), 8.0 * g)


def test_tangent_projection_is_orthogonal():
    state = random_state(3, 2, seed=1)
    projected = tangent_project(state.phi, gradient(state))
    assert abs(np.sum(projected * state.phi)) < 1e-12


def test_construction_errors():
    with pytest.raises(UsageError):
        random_state(1, 2)
    with pytest.raises(UsageError):
        random_state(13, 1)
    with pytest.raises(UsageError):
        random_state(3, 0)
    with pytest.raises(UsageError):
        ColoredState(2, 1, np.zeros((3, 1)))
    with pytest.raises(InvalidStateError):
        ColoredState(2, 1, [[np.nan], [0.0], [0.0], [0.0]])
    with pytest.raises(UsageError):
        single_configuration_state(2, 1, k=4)
    with pytest.raises(UsageError):
        canonical_minimizer(4, 2, (1,))


def test_construction_checks_the_norm():
    with pytest.raises(InvalidStateError):
        ColoredState(2, 1, np.ones((4, 1)))
    phi = random_state(3, 2, seed=4).phi * (1.0 + 1e-9)
    with pytest.raises(InvalidStateError):
        ColoredState(3, 2, phi)
    loose = ColoredState(3, 2, phi, check=False)
    assert loose.norm_error() == pytest.approx(2e-9, rel=1e-3)
    assert loose.copy().norm_error() == loose.norm_error()


def test_energy_rejects_unnormalized_state():
    with pytest.raises(InvalidStateError):
        energy(ColoredState(2, 1, np.ones((4, 1)), check=False))


@pytest.mark.parametrize("suffix", [".json", ".csv"])
def test_state_files_round_trip(tmp_path, suffix):
    state = random_state(3, 2, seed=13)
    path = write_state(state, str(tmp_path / f"state{suffix}"))
    loaded = read_state(path)
    assert (loaded.n, loaded.n_colors) == (3, 2)
    assert np.array_equal(loaded.phi, state.phi)


def test_read_state_norm_tolerance(tmp_path, caplog):
    state = random_state(3, 1, seed=2)
    slightly_off = ColoredState(3, 1, state.phi * np.sqrt(1 + 1e-10), check=False)
    path = write_state(slightly_off, str(tmp_path / "near.json"))
    with caplog.at_level(logging.WARNING):
        read_state(path)
    assert "norm error" in caplog.text

    far_off = ColoredState(3, 1, state.phi * np.sqrt(1 + 1e-6), check=False)
    with pytest.raises(InvalidStateError):
        read_state(write_state(far_off, str(tmp_path / "far.json")))


def test_read_state_errors(tmp_path):
    with pytest.raises(UsageError):
        read_state(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n": 2}))
    with pytest.raises(UsageError):
        read_state(str(bad))


def test_uniform_mean_two_colors_n4():
    rng = np.random.default_rng(2024)
    values = energy_batch(random_phis(4, 2, 100000, rng), 4)
    assert values.mean() == pytest.approx(8 / 17, abs=4e-3)
