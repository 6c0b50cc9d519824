# third party imports
import numpy as np
import pytest

# local imports
from hebblab.config import NetworkConfig
from hebblab.errors import ConfigurationError, DomainError
from hebblab.model import (
    RetrievalSystem,
    StimulusSchedule,
    SystemState,
    TrainingSet,
    WeightMatrix,
    activation,
    activation_deriv,
    activation_second_deriv,
    energy,
    jacobian_eigenvalues,
    learning_rhs,
    retrieval_jacobian,
    retrieval_rhs,
)

# set variables
RNG = np.random.default_rng(1234)


def random_weights(n, scale=1.0, rng=RNG):
    return WeightMatrix(n, rng.uniform(-scale, scale, size=n * (n - 1) // 2))


def finite_difference_jacobian(x, w, cfg, h=1e-6):
    jac = np.zeros((cfg.N, cfg.N))
    for j in range(cfg.N):
        step = np.zeros(cfg.N)
        step[j] = h
        jac[:, j] = (retrieval_rhs(x + step, w, cfg) - retrieval_rhs(x - step, w, cfg)) / (2 * h)
    return jac


def test_weight_matrix_is_symmetric_with_zero_diagonal():
    w = random_weights(5)
    for i in range(5):
        assert w[i, i] == 0.0
        for j in range(5):
            assert w[i, j] == w[j, i]
    w[3, 1] = 0.25
    assert w[1, 3] == 0.25
    assert np.array_equal(w.to_dense(), w.to_dense().T)


def test_weight_count_for_81_neurons():
    assert WeightMatrix.zeros(81).M == 3240
    assert NetworkConfig().M == 3240


def test_from_dense_rejects_asymmetric_matrix():
    dense = np.array([[0.0, 0.1], [0.2, 0.0]])
    with pytest.raises(ConfigurationError):
        WeightMatrix.from_dense(dense)
    with pytest.raises(ConfigurationError):
        WeightMatrix.from_dense(np.eye(2))


def test_network_config_rejects_invalid_values():
    with pytest.raises(ConfigurationError):
        NetworkConfig(N=1)
    with pytest.raises(ConfigurationError):
        NetworkConfig(g=0.0)
    assert NetworkConfig().to_dict()["lambda"] == 1.4


def test_activation_and_derivatives():
    lam = 1.4
    x = np.linspace(-3, 3, 61)
    assert np.allclose(activation(-x, lam), -activation(x, lam))
    assert np.all(np.abs(activation(x, lam)) < 1)
    h = 1e-6
    fd = (activation(x + h, lam) - activation(x - h, lam)) / (2 * h)
    assert np.allclose(activation_deriv(x, lam), fd, atol=1e-8)
    fd2 = (activation_deriv(x + h, lam) - activation_deriv(x - h, lam)) / (2 * h)
    assert np.allclose(activation_second_deriv(x, lam), fd2, atol=1e-7)


def test_training_set_is_reproducible_from_seed(tmp_path):
    first = TrainingSet.generate(81, 6, seed=7)
    second = TrainingSet.generate(81, 6, seed=7)
    assert np.array_equal(first.vectors, second.vectors)
    assert set(np.unique(first.vectors)) <= {-1, 1}

    path = tmp_path / "set.csv"
    first.to_csv(str(path))
    loaded = TrainingSet.from_csv(str(path))
    assert np.array_equal(loaded.vectors, first.vectors)
    assert loaded.seed == 7


def test_training_set_rejects_non_binary_entries():
    with pytest.raises(ConfigurationError):
        TrainingSet(vectors=np.array([[1, 0, -1]]))


def test_stimulus_schedule_cycles_through_patterns():
    schedule = StimulusSchedule(TrainingSet.generate(4, 6, seed=1), t_s=12.0)
    assert schedule.period == 72.0
    assert schedule.index_at(0.0) == 0
    assert schedule.index_at(11.999) == 0
    assert schedule.index_at(12.0) == 1
    assert schedule.index_at(71.9) == 5
    assert schedule.index_at(72.0) == 0
    assert schedule.index_at(75.0) == 0
    assert np.array_equal(schedule.switch_times(0.0, 36.0), [12.0, 24.0])
    with pytest.raises(DomainError):
        schedule.index_at(-0.1)


def test_learning_rhs_vanishes_at_unforced_equilibrium():
    cfg = NetworkConfig(N=4, A=0.0)
    schedule = StimulusSchedule(TrainingSet.generate(4, 2, seed=3), cfg.t_s)
    dx, dw = learning_rhs(SystemState(np.zeros(4), WeightMatrix.zeros(4), 5.0), schedule, cfg)
    assert np.all(dx == 0)
    assert np.all(dw.values == 0)


def test_learning_rhs_rejects_dimension_mismatch():
    cfg = NetworkConfig(N=4)
    schedule = StimulusSchedule(TrainingSet.generate(5, 2, seed=3), cfg.t_s)
    with pytest.raises(ConfigurationError):
        learning_rhs(SystemState(np.zeros(4), WeightMatrix.zeros(4)), schedule, cfg)


def test_retrieval_field_is_odd():
    cfg = NetworkConfig(N=8)
    w = random_weights(8)
    x = RNG.uniform(-2, 2, size=8)
    assert np.allclose(retrieval_rhs(-x, w, cfg), -retrieval_rhs(x, w, cfg), atol=1e-14)


def test_zero_weights_give_linear_decay():
    cfg = NetworkConfig(N=3)
    x = np.array([0.5, -1.0, 2.0])
    assert np.allclose(retrieval_rhs(x, WeightMatrix.zeros(3), cfg), -x)
    assert np.allclose(jacobian_eigenvalues(np.zeros(3), WeightMatrix.zeros(3), cfg), -1.0)


@pytest.mark.parametrize("n", [3, 8, 16])
def test_jacobian_matches_finite_differences(n):
    cfg = NetworkConfig(N=n, g=1.0)
    worst = 0.0
    for _ in range(100 // 3 + 1):
        w = random_weights(n)
        x = RNG.uniform(-2, 2, size=n)
        analytic = retrieval_jacobian(x, w, cfg)
        numeric = finite_difference_jacobian(x, w, cfg)
        worst = max(worst, np.max(np.abs(analytic - numeric)) / np.max(np.abs(analytic)))
    assert worst < 1e-6


def test_spectrum_is_real_and_matches_symmetric_solver():
    for n in (3, 8, 16):
        cfg = NetworkConfig(N=n, g=2.0)
        for _ in range(34):
            w = random_weights(n)
            x = RNG.uniform(-2, 2, size=n)
            general = np.linalg.eigvals(retrieval_jacobian(x, w, cfg))
            assert np.max(np.abs(general.imag)) < 1e-8
            symmetric = jacobian_eigenvalues(x, w, cfg)
            assert np.all(np.diff(symmetric) <= 0)
            assert np.allclose(np.sort(general.real)[::-1], symmetric, atol=1e-8)


def test_leading_eigenpair_is_a_right_eigenvector():
    cfg = NetworkConfig(N=6, g=2.0)
    system = RetrievalSystem(random_weights(6), cfg)
    x = RNG.uniform(-1, 1, size=6)
    value, v = system.leading_eigenpair(x)
    assert np.isclose(np.linalg.norm(v), 1.0)
    assert np.allclose(system.jacobian(x) @ v, value * v, atol=1e-10)


def test_energy_is_zero_at_rest_without_input():
    cfg = NetworkConfig(N=5)
    assert energy(np.zeros(5), random_weights(5), np.zeros(5), cfg) == 0.0
    with pytest.raises(ConfigurationError):
        energy(np.zeros(5), random_weights(5), np.zeros(4), cfg)
