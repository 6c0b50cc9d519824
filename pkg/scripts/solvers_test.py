# third party imports
import numpy as np

# local imports
from hebblab.parallel import map_ordered
from hebblab.solvers import gauss_newton_project, newton_solve, trace_both_ways


def circle(z):
    return np.array([z[0] ** 2 + z[1] ** 2 - 1.0])


def circle_jacobian(z):
    return np.array([[2.0 * z[0], 2.0 * z[1]]])


def test_newton_solves_square_system():
    residual = lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 4.0, x[0] - x[1]])
    jacobian = lambda x: np.array([[2 * x[0], 2 * x[1]], [1.0, -1.0]])
    result = newton_solve(residual, jacobian, np.array([3.0, 0.5]))
    assert result.converged
    assert np.allclose(result.x, [np.sqrt(2.0), np.sqrt(2.0)], atol=1e-12)
    assert result.residual < 1e-12


def test_newton_reports_singular_jacobian():
    residual = lambda x: np.array([x[0] ** 2 + 1.0])
    jacobian = lambda x: np.array([[2 * x[0]]])
    result = newton_solve(residual, jacobian, np.array([0.0]))
    assert result.singular
    assert not result.converged


def test_gauss_newton_projects_onto_curve():
    result = gauss_newton_project(circle, circle_jacobian, np.array([0.9, 0.9]))
    assert result.converged
    assert np.isclose(np.linalg.norm(result.x), 1.0)
    assert np.isclose(result.x[0], result.x[1])


def test_continuation_closes_a_circle():
    result = trace_both_ways(circle, circle_jacobian, np.array([1.0, 0.0]), max_points=2000)
    assert result.closed
    assert not result.stalled
    assert np.max(result.residuals) < 1e-10
    angles = np.arctan2(result.points[:, 1], result.points[:, 0])
    assert angles.min() < -3.0 and angles.max() > 3.0


def test_continuation_stops_at_region_boundary():
    result = trace_both_ways(
        circle, circle_jacobian, np.array([1.0, 0.0]), inside=lambda z: z[0] > 0.5
    )
    assert result.left_bounds
    assert not result.closed
    assert np.all(result.points[1:-1, 0] > 0.5)


def test_map_ordered_keeps_input_order():
    items = [-3, 1, -4, 1, -5, 9, -2, 6]
    assert map_ordered(abs, items, workers=1) == [abs(v) for v in items]
    assert map_ordered(abs, items, workers=2) == [abs(v) for v in items]
