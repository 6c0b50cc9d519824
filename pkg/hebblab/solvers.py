# python imports
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

# third party imports
import numpy as np

logger = logging.getLogger(__name__)

Residual = Callable[[np.ndarray], np.ndarray]
Jacobian = Callable[[np.ndarray], np.ndarray]


@dataclass
class NewtonResult:
    """
    Outcome of a Newton solve.

    Attributes:
        x (np.ndarray): Final iterate.
        residual (float): Infinity norm of the residual at ``x``.
        iterations (int): Iterations performed.
        converged (bool): Whether the residual fell below the acceptance tolerance.
        singular (bool): Whether the solve was abandoned on a singular Jacobian.
    """

    x: np.ndarray
    residual: float
    iterations: int
    converged: bool
    singular: bool = False


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def newton_solve(
    residual: Residual,
    jacobian: Jacobian,
    x0: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-12,
    accept_tol: float = 1e-10,
    min_damping: float = 2.0 ** -12,
) -> NewtonResult:
    """
    Damped Newton iteration for a square system r(x) = 0.

    The full step is halved until the residual decreases; iteration stops
    once ||r||_inf < tol. A run that stalls is still reported as converged
    when its residual is below ``accept_tol``.

    Args:
        residual (Residual): r(x).
        jacobian (Jacobian): dr/dx.
        x0 (np.ndarray): Starting point (copied).
        max_iter (int): Iteration cap.
        tol (float): Convergence threshold on ||r||_inf.
        accept_tol (float): Residual still accepted after a stall.
        min_damping (float): Smallest step fraction tried before giving up.

    Returns:
        NewtonResult: The final iterate and diagnostics.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    r_norm = _inf_norm(r)
    iterations = 0

    while iterations < max_iter and r_norm >= tol:
        if not np.isfinite(r_norm):
            break
        try:
            dx = np.linalg.solve(jacobian(x), -r)
        except np.linalg.LinAlgError:
            logger.debug(f"Singular Jacobian after {iterations} Newton iterations")
            return NewtonResult(x, r_norm, iterations, r_norm < accept_tol, singular=True)
        if not np.all(np.isfinite(dx)):
            return NewtonResult(x, r_norm, iterations, r_norm < accept_tol, singular=True)

        damping = 1.0
        while True:
            x_trial = x + damping * dx
            r_trial = residual(x_trial)
            trial_norm = _inf_norm(r_trial)
            if trial_norm < r_norm or damping <= min_damping:
                break
            damping /= 2.0
        iterations += 1
        if not trial_norm < r_norm:
            # no descent even with the smallest step
            break
        x, r, r_norm = x_trial, r_trial, trial_norm
        logger.debug(f"Newton iteration {iterations}: residual {r_norm:.3e}")

    return NewtonResult(x, r_norm, iterations, bool(r_norm < accept_tol))


def gauss_newton_project(
    residual: Residual,
    jacobian: Jacobian,
    z0: np.ndarray,
    max_iter: int = 50,
    tol: float = 1e-10,
) -> NewtonResult:
    """
    Project a point onto the solution curve of an underdetermined system.

    Each step is the minimum-norm correction from least squares, so the
    result is close to ``z0`` along the normal direction of the curve.
    """
    z = np.array(z0, dtype=float)
    r = residual(z)
    r_norm = _inf_norm(r)
    iterations = 0
    while iterations < max_iter and r_norm >= tol and np.isfinite(r_norm):
        dz, *_ = np.linalg.lstsq(jacobian(z), -r, rcond=None)
        z = z + dz
        r = residual(z)
        r_norm = _inf_norm(r)
        iterations += 1
    return NewtonResult(z, r_norm, iterations, bool(r_norm < tol))


def curve_tangent(jac: np.ndarray, previous: Optional[np.ndarray] = None) -> np.ndarray:
    """Unit null vector of an n x (n+1) Jacobian, oriented along ``previous``."""
    _, _, vt = np.linalg.svd(jac)
    tangent = vt[-1]
    if previous is not None and np.dot(tangent, previous) < 0:
        tangent = -tangent
    return tangent / np.linalg.norm(tangent)


@dataclass
class ContinuationResult:
    """
    A traced solution curve.

    Attributes:
        points (np.ndarray): Vertices in traversal order, one per row.
        residuals (np.ndarray): ||G||_inf at each vertex.
        stalled (bool): Whether the step fell below the minimum size.
        closed (bool): Whether the curve returned to its starting vertex.
        left_bounds (bool): Whether tracing stopped at the bounding box.
    """

    points: np.ndarray
    residuals: np.ndarray
    stalled: bool = False
    closed: bool = False
    left_bounds: bool = False
    notes: List[str] = field(default_factory=list)


def _corrector(
    residual: Residual,
    jacobian: Jacobian,
    z_pred: np.ndarray,
    tangent: np.ndarray,
    tol: float,
    max_iter: int,
) -> Tuple[Optional[np.ndarray], float, int]:
    """Newton on {G(z) = 0, tangent . (z - z_pred) = 0}."""
    z = z_pred.copy()
    for iteration in range(1, max_iter + 1):
        g = residual(z)
        aug = np.concatenate([g, [np.dot(tangent, z - z_pred)]])
        mat = np.vstack([jacobian(z), tangent])
        try:
            dz = np.linalg.solve(mat, -aug)
        except np.linalg.LinAlgError:
            return None, np.inf, iteration
        z = z + dz
        g_norm = _inf_norm(residual(z))
        if not np.isfinite(g_norm):
            return None, np.inf, iteration
        if g_norm < tol and _inf_norm(dz) < 1e3 * tol + 1e-8:
            return z, g_norm, iteration
    g_norm = _inf_norm(residual(z))
    return (z, g_norm, max_iter) if g_norm < tol else (None, g_norm, max_iter)


def pseudo_arclength(
    residual: Residual,
    jacobian: Jacobian,
    z0: np.ndarray,
    direction: np.ndarray,
    step: float = 1e-2,
    min_step: float = 1e-5,
    max_step: float = 1e-1,
    tol: float = 1e-10,
    max_points: int = 4000,
    inside: Optional[Callable[[np.ndarray], bool]] = None,
    max_corrector_iter: int = 8,
) -> ContinuationResult:
    """
    Trace the curve G(z) = 0 (G: R^{n+1} -> R^n) from a point on it.

    Predictor along the tangent, corrector by Newton on the pseudo-arclength
    augmented system. The step grows by 1.5 after quick corrections and
    halves after failures; tracing ends when the step drops below
    ``min_step`` (stall), the curve closes on its start, ``inside`` reports
    the point left the region of interest, or ``max_points`` is reached.

    Args:
        residual (Residual): G(z), returning n values.
        jacobian (Jacobian): dG/dz, shape n x (n+1).
        z0 (np.ndarray): Starting vertex, assumed to satisfy G(z0) ~ 0.
        direction (np.ndarray): Initial orientation of the tangent.
        step (float): Initial step length.
        min_step (float): Smallest step before declaring a stall.
        max_step (float): Largest step.
        tol (float): Corrector tolerance on ||G||_inf.
        max_points (int): Vertex cap.
        inside (Optional[Callable]): Region test; tracing stops when it turns False.
        max_corrector_iter (int): Newton iterations per corrector.

    Returns:
        ContinuationResult: The traced vertices.
    """
    z = np.array(z0, dtype=float)
    tangent = curve_tangent(jacobian(z), direction)
    points = [z.copy()]
    residuals = [_inf_norm(residual(z))]
    h = step
    result = ContinuationResult(np.empty((0, z.size)), np.empty(0))
    travelled = 0.0

    while len(points) < max_points:
        z_pred = z + h * tangent
        z_new, g_norm, iterations = _corrector(
            residual, jacobian, z_pred, tangent, tol, max_corrector_iter
        )
        if z_new is None or np.linalg.norm(z_new - z) > 2.0 * h:
            h /= 2.0
            if h < min_step:
                result.stalled = True
                logger.warning(
                    f"Continuation stalled after {len(points)} points at residual {g_norm:.2e}"
                )
                break
            continue

        if inside is not None and not inside(z_new):
            result.left_bounds = True
            points.append(z_new)
            residuals.append(g_norm)
            break

        travelled += np.linalg.norm(z_new - z)
        tangent = curve_tangent(jacobian(z_new), tangent)
        z = z_new
        points.append(z.copy())
        residuals.append(g_norm)
        logger.debug(f"Continuation vertex {len(points)}: step {h:.2e}, residual {g_norm:.2e}")

        if travelled > 3.0 * h and np.linalg.norm(z - points[0]) < h:
            result.closed = True
            points.append(points[0].copy())
            residuals.append(residuals[0])
            break
        if iterations <= 3:
            h = min(1.5 * h, max_step)

    result.points = np.array(points)
    result.residuals = np.array(residuals)
    return result


def trace_both_ways(
    residual: Residual,
    jacobian: Jacobian,
    z0: np.ndarray,
    **kwargs,
) -> ContinuationResult:
    """
    Trace a curve in both directions from ``z0`` and join the halves.

    A closed curve found in the first direction is returned as-is.
    """
    tangent = curve_tangent(jacobian(np.asarray(z0, dtype=float)))
    forward = pseudo_arclength(residual, jacobian, z0, tangent, **kwargs)
    if forward.closed:
        return forward
    backward = pseudo_arclength(residual, jacobian, z0, -tangent, **kwargs)
    points = np.vstack([backward.points[::-1], forward.points[1:]])
    residuals = np.concatenate([backward.residuals[::-1], forward.residuals[1:]])
    return ContinuationResult(
        points=points,
        residuals=residuals,
        stalled=forward.stalled or backward.stalled,
        closed=False,
        left_bounds=forward.left_bounds or backward.left_bounds,
        notes=forward.notes + backward.notes,
    )
