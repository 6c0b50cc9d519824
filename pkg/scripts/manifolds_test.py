# third party imports
import numpy as np
import pytest

# local imports
from hebblab.config import ManifoldSettings, NetworkConfig
from hebblab.errors import ConfigurationError
from hebblab.fixedpoints import BifurcationKind, StabilityClass
from hebblab.manifolds import (
    FoldSystem,
    SubspaceAxes,
    crossing_detect,
    pitchfork_gradient,
    pitchfork_surface_N3,
    pitchfork_test,
    project_trajectory,
    section_distance,
    write_section_mesh,
)
from hebblab.model import WeightMatrix
from hebblab.simulate import WeightTrajectory

# set variables
PAIR = NetworkConfig(N=2, g=5.0)
TRIPLE = NetworkConfig(N=3, g=5.0)
A_STAR = 2.0 / (PAIR.lam * np.pi) * np.tan(np.pi / (2.0 * PAIR.g * PAIR.lam))
AXES = SubspaceAxes(((0, 1), (0, 2), (1, 2)))
SLICES = [-0.05, 0.0, 0.05]


def surface():
    return pitchfork_surface_N3(TRIPLE, SLICES, ManifoldSettings(max_step=0.02))


def test_pitchfork_test_vanishes_at_threshold():
    assert abs(pitchfork_test(WeightMatrix(2, [A_STAR]), PAIR)) < 1e-10
    assert pitchfork_test(WeightMatrix(2, [0.05]), PAIR) < 0
    assert pitchfork_test(WeightMatrix(2, [0.2]), PAIR) > 0


def test_pitchfork_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    cfg = NetworkConfig(N=4, g=2.0)
    w = WeightMatrix(4, rng.uniform(-0.5, 0.5, size=6))
    h = 1e-6
    numeric = []
    for k in range(w.M):
        up, down = w.copy(), w.copy()
        up.values[k] += h
        down.values[k] -= h
        numeric.append((pitchfork_test(up, cfg) - pitchfork_test(down, cfg)) / (2 * h))
    assert np.allclose(pitchfork_gradient(w, cfg), numeric, atol=1e-7)


def test_subspace_axes_validation():
    assert SubspaceAxes(((1, 0), (2, 0), (2, 1))).pairs == AXES.pairs
    assert AXES.label(2) == "w_23"
    with pytest.raises(ConfigurationError):
        SubspaceAxes(((0, 1), (1, 0), (1, 2)))
    with pytest.raises(ConfigurationError):
        SubspaceAxes(((0, 1), (0, 5), (1, 2))).indices(3)


def test_pitchfork_surface_needs_three_neurons():
    with pytest.raises(ConfigurationError):
        pitchfork_surface_N3(NetworkConfig(N=4, g=5.0), [0.0])


def test_pitchfork_surface_curves_lie_on_the_manifold():
    section = surface()
    assert section.slice_values() == SLICES
    assert section.max_residual < 1e-8
    for curve in section.curves:
        assert curve.closed
        for a, b in curve.points:
            w = WeightMatrix(3, [a, b, curve.slice_value])
            mirrored = WeightMatrix(3, [-a, -b, curve.slice_value])
            assert abs(pitchfork_test(w, TRIPLE)) < 1e-8
            assert abs(pitchfork_test(mirrored, TRIPLE)) < 1e-8


def test_pitchfork_surface_distance_and_mesh(tmp_path):
    section = surface()
    curve = section.curves[0]
    a, b = curve.points[len(curve.points) // 2]
    assert section_distance(section, [a, b, curve.slice_value]) < 1e-12
    assert section_distance(section, [0.0, 0.0, curve.slice_value]) > 0.05

    path = tmp_path / "pitchfork.obj"
    write_section_mesh(section, str(path), samples=16)
    lines = path.read_text().splitlines()
    assert sum(1 for line in lines if line.startswith("v ")) == 3 * 16
    assert sum(1 for line in lines if line.startswith("f ")) == 2 * 2 * 15


def test_weak_coupling_has_an_empty_surface():
    section = pitchfork_surface_N3(NetworkConfig(N=3), [0.0])
    assert not section.curves
    assert section.notes


def test_fold_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    cfg = NetworkConfig(N=4, g=2.0)
    frozen = WeightMatrix(4, rng.uniform(-1, 1, size=6))
    fold = FoldSystem(frozen, cfg, AXES, 0.3)
    z = rng.uniform(-1, 1, size=fold.size)
    h = 1e-6
    numeric = np.column_stack(
        [
            (fold.residual(z + h * e) - fold.residual(z - h * e)) / (2 * h)
            for e in np.eye(fold.size)
        ]
    )
    assert np.allclose(fold.jacobian(z), numeric, atol=1e-6)


def test_ramp_leaves_the_stable_region_once():
    times = np.arange(101) * 0.01
    traj = WeightTrajectory(times, (0.2 * times)[:, None], PAIR)
    records = crossing_detect(traj, lambda w: pitchfork_test(w, PAIR))
    assert len(records) == 1
    assert records[0].direction == "leaving"
    assert abs(records[0].t_cross - A_STAR / 0.2) < 1e-3


def test_tiny_weights_never_cross():
    times = np.arange(11) * 0.1
    traj = WeightTrajectory(times, np.full((11, 3), 1e-3), TRIPLE)
    assert crossing_detect(traj, lambda w: pitchfork_test(w, TRIPLE)) == []


def test_projection_columns():
    times = np.arange(5) * 0.1
    weights = np.arange(15, dtype=float).reshape(5, 3)
    projection = project_trajectory(WeightTrajectory(times, weights, TRIPLE), AXES)
    assert projection.shape == (5, 4)
    assert np.array_equal(projection[:, 0], times)
    assert np.array_equal(projection[:, 1:], weights)


@pytest.mark.slow
def test_saddle_node_section_passes_through_the_trajectory(fold_run):
    config, traj, events = fold_run
    cfg = traj.cfg
    birth = next(
        e for e in events
        if e.kind is BifurcationKind.SADDLE_NODE_BIRTH and StabilityClass.STABLE in e.stabilities
    )
    idx = AXES.indices(cfg.N)
    frozen = traj.weights_at(birth.t_star)
    point = [float(frozen.values[k]) for k in idx]
    section = saddle_node_section(
        traj,
        birth.t_star,
        AXES,
        cfg,
        third_samples=[point[2]],
        fold_point=np.mean(birth.participants, axis=0),
        settings=config.manifolds,
        fp_settings=config.fixed_points,
    )
    assert section.curves
    assert section.max_residual < 1e-8
    for curve in section.curves:
        fold = FoldSystem(frozen, cfg, AXES, curve.slice_value)
        for z in curve.states:
            assert np.max(np.abs(fold.residual(z))) < 1e-8
    assert section_distance(section, point) < 1e-4
