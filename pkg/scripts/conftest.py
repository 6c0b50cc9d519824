# third party imports
import pytest

# local imports
from hebblab.config import ExperimentConfig
from hebblab.fixedpoints import detect_bifurcations, track_along_trajectory
from hebblab.model import StimulusSchedule, TrainingSet
from hebblab.simulate import integrate_learning, make_initial_conditions


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size acceptance runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size acceptance run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def fold_run():
    """
    Sixteen-neuron learning run with saddle-node events, built the way the
    train and scan commands build it. Yields (config, trajectory, events).
    """
    config = ExperimentConfig.from_dict({"network": {"N": 16, "g": 1.5, "T_train": 72.0}})
    cfg = config.network_config()
    training_set = TrainingSet.generate(cfg.N, config.training.K, config.seed_for("training"))
    ics = make_initial_conditions(cfg, config.seed_for("initial_conditions"))
    traj = integrate_learning(cfg, StimulusSchedule(training_set, cfg.t_s), ics, settings=config.integrator)
    branches = track_along_trajectory(
        traj, cfg, settings=config.fixed_points, seed=config.seed_for("seed_battery"), stride=2
    )
    events = detect_bifurcations(branches, traj, cfg, config.fixed_points)
    return config, traj, events
