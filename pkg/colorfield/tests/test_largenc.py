import numpy as np
import pytest

from colorfield.errors import ConvergenceError, CriticalityError, UsageError
from colorfield.largenc import (
    beta0,
    beta_from_tilde,
    dyson_solve,
    energy_prediction,
    lambda_of_beta,
    lower_bound,
    rescale_energy,
    tilde_from_beta,
)
from colorfield.moments import cactus_cumulants


def test_beta0_examples():
    assert beta0(4) == pytest.approx(512 / 7)
    assert tilde_from_beta(130.0, 4) == pytest.approx(1.777, abs=1e-3)
    assert beta_from_tilde(tilde_from_beta(42.0, 6), 6) == pytest.approx(42.0)
    assert beta0(20) / (1 << 20) ** 1.5 == pytest.approx(1.0, abs=1e-3)


def test_lambda_relation():
    assert lambda_of_beta(0.0) == (1.0, False)
    value, critical = lambda_of_beta(1.0)
    assert value == 0.0 and critical
    assert lambda_of_beta(0.5).value == pytest.approx(0.5)


def test_energy_prediction_examples():
    assert energy_prediction(4, 20) == pytest.approx(4.375)
    assert energy_prediction(4, 2) == pytest.approx(0.4375)
    assert rescale_energy(4.375, 4, 20) == pytest.approx(1.0)
    for n in (12, 16, 20):
        N = 1 << n
        assert energy_prediction(n, 3) * np.sqrt(N) / 3 == pytest.approx(1.0, abs=2.0 / np.sqrt(N) ** 0.5)


def test_lower_bound_examples():
    assert lower_bound(4, 2) == pytest.approx(0.25)
    assert lower_bound(5, 2) == pytest.approx(0.25)
    assert lower_bound(4, 8) == pytest.approx(1.0)


@pytest.mark.parametrize("n", range(4, 11))
def test_prediction_tracks_exact_first_moment(n):
    ratio = energy_prediction(n, 2) / cactus_cumulants(n, 1)
    assert abs(ratio - 1.0) <= 4.0 / np.sqrt(1 << n)


@pytest.mark.parametrize("n", range(2, 8))
@pytest.mark.parametrize("beta_tilde", [0.0, 0.5, 0.9])
def test_dyson_symmetric_solution(n, beta_tilde):
    solution = dyson_solve(n, beta_tilde)
    N = 1 << n
    assert solution.symmetric
    assert np.allclose(solution.G, 1.0 / N, atol=1e-12)
    assert solution.lam == pytest.approx(1.0 - beta_tilde, abs=1e-10)
    assert solution.residual < 1e-12


def test_dyson_cli_example_values():
    solution = dyson_solve(4, 0.5)
    assert solution.G[0] == pytest.approx(0.0625)
    assert solution.lam == pytest.approx(0.5)


def test_dyson_rejects_critical_region():
    with pytest.raises(CriticalityError, match="unstable"):
        dyson_solve(4, 1.0)
    with pytest.raises(CriticalityError):
        dyson_solve(4, 2.5)


def test_dyson_reports_residual_on_non_convergence():
    initial = np.linspace(1.0, 2.0, 16)
    with pytest.raises(ConvergenceError) as excinfo:
        dyson_solve(4, 0.5, max_iter=1, initial=initial)
    assert excinfo.value.residual > 1e-12
    assert excinfo.value.iterations == 1


def test_dyson_relaxes_from_perturbed_start():
    rng = np.random.default_rng(0)
    initial = 1.0 / 16 * (1.0 + 0.2 * rng.random(16))
    solution = dyson_solve(4, 0.5, initial=initial)
    assert solution.symmetric
    assert solution.lam == pytest.approx(0.5, abs=1e-10)


def test_dyson_argument_validation():
    with pytest.raises(UsageError):
        dyson_solve(4, 0.5, damping=0.0)
    with pytest.raises(UsageError):
        dyson_solve(4, 0.5, initial=np.ones(3))
    with pytest.raises(UsageError):
        beta0(1)
