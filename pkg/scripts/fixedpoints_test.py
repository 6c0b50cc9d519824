# python imports
import csv

# third party imports
import numpy as np
import pytest

# local imports
from hebblab.config import FixedPointSettings, NetworkConfig
from hebblab.errors import DomainError, NotAFixedPointError
from hebblab.fixedpoints import (
    BifurcationKind,
    FixedPoint,
    StabilityClass,
    _localize,
    _pair_by_index,
    attractor_census,
    classify,
    detect_bifurcations,
    find_fixed_points,
    seed_battery,
    track_along_trajectory,
    write_branches_csv,
    write_events_csv,
)
from hebblab.model import TrainingSet, WeightMatrix
from hebblab.simulate import WeightTrajectory, converge_many

# set variables
PAIR = NetworkConfig(N=2, g=5.0)
FAST = FixedPointSettings(random_seeds=40)
A_STAR = 2.0 / (PAIR.lam * np.pi) * np.tan(np.pi / (2.0 * PAIR.g * PAIR.lam))


def ramp_trajectory(a_end=0.2, t_end=1.0, dt=0.01):
    times = np.arange(int(round(t_end / dt)) + 1) * dt
    weights = (a_end * times / t_end)[:, None]
    return WeightTrajectory(times, weights, PAIR)


def stable_set(points):
    return [p.location for p in points if p.stability is StabilityClass.STABLE]


def same_sets(first, second, tol=1e-6):
    if len(first) != len(second):
        return False
    return all(any(np.max(np.abs(p - q)) < tol for q in second) for p in first)


def brute_force_attractors(w, resolution):
    # offsets keep grid nodes off the invariant diagonals through the origin
    xs = np.linspace(-5, 5, resolution) + 0.013
    ys = np.linspace(-5, 5, resolution) - 0.029
    starts = np.array([[x, y] for y in ys for x in xs])
    found = []
    for result in converge_many(starts, w, PAIR):
        assert result.converged
        if not any(np.max(np.abs(result.location - q)) < 1e-6 for q in found):
            found.append(result.location)
    return found


def test_closed_form_threshold():
    assert A_STAR == pytest.approx(0.1038, abs=1e-4)


def test_zero_weights_have_only_the_origin():
    points = find_fixed_points(WeightMatrix.zeros(4), NetworkConfig(N=4), seed_battery(NetworkConfig(N=4), 1))
    assert len(points) == 1
    assert points[0].is_origin
    assert points[0].stability is StabilityClass.STABLE
    assert np.allclose(points[0].eigenvalues, -1.0)


def test_two_neurons_above_threshold_have_three_fixed_points():
    points = find_fixed_points(WeightMatrix(2, [1.0]), PAIR, seed_battery(PAIR, 3, settings=FAST), FAST)
    assert len(points) == 3
    origin = [p for p in points if p.is_origin]
    assert len(origin) == 1
    assert origin[0].stability is StabilityClass.USEFUL_SADDLE
    stable = stable_set(points)
    assert len(stable) == 2
    assert np.allclose(stable[0], -stable[1])
    assert np.isclose(stable[0][0], stable[0][1])


def test_fixed_points_are_closed_under_negation():
    rng = np.random.default_rng(5)
    cfg = NetworkConfig(N=5, g=4.0)
    w = WeightMatrix(5, rng.uniform(-1, 1, size=10))
    points = find_fixed_points(w, cfg, seed_battery(cfg, 2, settings=FAST), FAST)
    for p in points:
        assert p.residual < 1e-10
        mirrored = [q for q in points if np.max(np.abs(q.location + p.location)) < 1e-6]
        assert len(mirrored) == 1
        assert mirrored[0].stability is p.stability


def test_classify_rejects_points_that_move():
    with pytest.raises(NotAFixedPointError):
        classify(np.array([0.5, 0.5]), WeightMatrix(2, [1.0]), PAIR)


def test_search_needs_seeds():
    with pytest.raises(DomainError):
        find_fixed_points(WeightMatrix(2, [1.0]), PAIR, np.empty((0, 2)))


def test_seed_battery_layout():
    training_set = TrainingSet.generate(2, 3, seed=1)
    previous = [np.array([0.1, 0.2])]
    seeds = seed_battery(PAIR, 7, training_set, previous, FAST)
    assert seeds.shape == (1 + 1 + 3 + 3 * 2 + 40, 2)
    assert np.array_equal(seeds[0], previous[0])
    assert np.array_equal(seeds[1], np.zeros(2))
    assert np.array_equal(seeds[2:5], training_set.vectors)
    assert np.array_equal(seeds, seed_battery(PAIR, 7, training_set, previous, FAST))


def test_census_counts_by_stability():
    census = attractor_census(WeightMatrix(2, [-1.0]), PAIR, FAST, seed=4)
    assert census.counts() == {"Stable": 2, "UsefulSaddle": 1, "OtherUnstable": 0}
    assert len(census.all_points()) == 3


@pytest.mark.parametrize("a", [-0.8, -0.3, 0.05, 0.5, 0.9])
def test_newton_census_matches_brute_force_convergence(a):
    w = WeightMatrix(2, [a])
    newton = stable_set(attractor_census(w, PAIR, FAST, seed=6).all_points())
    assert same_sets(newton, brute_force_attractors(w, 21))


@pytest.mark.slow
def test_newton_census_matches_fine_grid_for_random_weights():
    rng = np.random.default_rng(20)
    for a in rng.uniform(-1, 1, size=20):
        if abs(abs(a) - A_STAR) < 0.02:
            continue
        w = WeightMatrix(2, [a])
        newton = stable_set(attractor_census(w, PAIR, seed=6).all_points())
        assert same_sets(newton, brute_force_attractors(w, 201))


def test_weight_ramp_produces_a_pitchfork_at_threshold():
    traj = ramp_trajectory()
    branches = track_along_trajectory(traj, PAIR, settings=FAST, seed=9)
    events = detect_bifurcations(branches, traj, PAIR, FAST)
    pitchforks = [e for e in events if e.kind is BifurcationKind.PITCHFORK]
    assert len(pitchforks) == 1
    event = pitchforks[0]
    assert abs(0.2 * event.t_star - A_STAR) < 1e-6
    assert np.allclose(event.participants[0], 0.0)
    assert not event.kind.destroys_attractors

    origin = [b for b in branches if b.is_origin]
    assert len(origin) == 1
    assert origin[0].points[0].stability is StabilityClass.STABLE
    assert origin[0].last.stability is StabilityClass.USEFUL_SADDLE


def test_falling_ramp_produces_a_reverse_pitchfork():
    times = np.arange(101) * 0.01
    traj = WeightTrajectory(times, (0.2 - 0.2 * times)[:, None], PAIR)
    branches = track_along_trajectory(traj, PAIR, settings=FAST, seed=9)
    events = detect_bifurcations(branches, traj, PAIR, FAST)
    reverse = [e for e in events if e.kind is BifurcationKind.PITCHFORK_REVERSE]
    assert len(reverse) == 1
    assert abs(0.2 - 0.2 * reverse[0].t_star - A_STAR) < 1e-6
    assert reverse[0].kind.destroys_attractors


def test_tracking_rejects_range_outside_trajectory():
    with pytest.raises(DomainError):
        track_along_trajectory(ramp_trajectory(), PAIR, t_range=(0.5, 2.0))


def test_branch_export(tmp_path):
    traj = ramp_trajectory(t_end=0.1)
    branches = track_along_trajectory(traj, PAIR, settings=FAST)
    path = tmp_path / "branches.csv"
    write_branches_csv(branches, str(path))
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == sum(len(b.times) for b in branches)
    assert {row["stability"] for row in rows} == {"Stable"}


def test_reverse_pitchfork_records_the_dying_attractors(tmp_path):
    times = np.arange(101) * 0.01
    traj = WeightTrajectory(times, (0.2 - 0.2 * times)[:, None], PAIR)
    events = detect_bifurcations(track_along_trajectory(traj, PAIR, settings=FAST, seed=9), traj, PAIR, FAST)
    event = next(e for e in events if e.kind is BifurcationKind.PITCHFORK_REVERSE)
    assert event.stabilities == [StabilityClass.USEFUL_SADDLE, StabilityClass.STABLE, StabilityClass.STABLE]
    assert len(event.stable_participants()) == 2
    assert event.observed_at < event.t_star

    path = tmp_path / "events.csv"
    write_events_csv([event], str(path))
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [row["stability"] for row in rows] == ["UsefulSaddle", "Stable", "Stable"]


def fake_point(unstable_count, location):
    stability = [StabilityClass.STABLE, StabilityClass.USEFUL_SADDLE][min(unstable_count, 1)]
    if unstable_count > 1:
        stability = StabilityClass.OTHER_UNSTABLE
    return FixedPoint(np.array(location, dtype=float), np.zeros(2), stability, unstable_count, 0.0)


def test_fold_pairing_by_adjacent_index():
    candidates = [
        (0, 10, fake_point(2, [0.1, 0.0])),
        (0, 11, fake_point(3, [0.12, 0.0])),
        (1, 12, fake_point(1, [1.0, 1.0])),
        (2, 13, fake_point(0, [1.05, 1.0])),
        (5, 14, fake_point(0, [3.0, 3.0])),
        (5, 15, fake_point(2, [3.0, 3.0])),
    ]
    pairs, single = _pair_by_index(candidates)
    assert sorted((a[1], b[1]) for a, b in pairs) == [(10, 11), (12, 13)]
    assert sorted(c[1] for c in single) == [14, 15]


def test_fold_pairing_prefers_the_same_interval():
    candidates = [
        (3, 20, fake_point(0, [0.5, 0.5])),
        (4, 21, fake_point(1, [0.5, 0.5])),
        (3, 22, fake_point(1, [0.9, 0.9])),
    ]
    pairs, single = _pair_by_index(candidates)
    assert [(a[1], b[1]) for a, b in pairs] == [(20, 22)]
    assert [c[1] for c in single] == [21]


def test_single_point_changes_are_bisected():
    traj = ramp_trajectory()
    w = traj.weights_at(0.6)
    saddle = classify(np.zeros(2), w, PAIR)
    assert saddle.stability is StabilityClass.USEFUL_SADDLE
    t_star, points, seen = _localize(traj, PAIR, [saddle], 0.4, 0.6, FAST)
    assert abs(t_star - A_STAR / 0.2) < FAST.bisection_width
    assert points[0].unstable_count == 1
    assert t_star < seen <= t_star + FAST.bisection_width


@pytest.mark.slow
def test_saddle_nodes_come_in_mirrored_pairs(fold_run):
    config, traj, events = fold_run
    width = config.fixed_points.bisection_width
    folds = (BifurcationKind.SADDLE_NODE_BIRTH, BifurcationKind.SADDLE_NODE_DEATH)
    assert any(e.kind is BifurcationKind.SADDLE_NODE_BIRTH for e in events)
    for i, event in enumerate(events):
        if event.kind is BifurcationKind.UNKNOWN:
            assert abs(event.observed_at - event.t_star) <= width
        if event.kind not in folds:
            continue
        assert abs(event.observed_at - event.t_star) <= width
        w = traj.weights_at(event.observed_at)
        counts = sorted(classify(x, w, traj.cfg).unstable_count for x in event.participants)
        assert len(counts) == 2
        assert counts[1] - counts[0] == 1

        assert event.symmetry_partner is not None
        partner = events[event.symmetry_partner]
        assert partner.kind is event.kind
        assert partner.symmetry_partner == i
        assert abs(partner.t_star - event.t_star) < 1e-4
        centre = np.mean(event.participants, axis=0)
        assert np.max(np.abs(np.mean(partner.participants, axis=0) + centre)) < 1e-3
