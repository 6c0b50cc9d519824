# python imports
import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

# third party imports
import numpy as np
from scipy import linalg
from scipy.optimize import brentq

# local imports
from .config import FixedPointSettings, ManifoldSettings, NetworkConfig
from .errors import ConfigurationError, DomainError
from .fixedpoints import attractor_census
from .model import (
    RetrievalSystem,
    WeightMatrix,
    activation,
    activation_deriv,
    activation_second_deriv,
)
from .parallel import map_ordered
from .simulate import WeightTrajectory
from .solvers import ContinuationResult, gauss_newton_project, trace_both_ways

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


@dataclass(frozen=True)
class SubspaceAxes:
    """Three distinct weights (i1 j1, i2 j2, i3 j3) spanning a weight subspace."""

    pairs: Tuple[Pair, Pair, Pair]

    def __post_init__(self):
        normalized = tuple((min(i, j), max(i, j)) for i, j in self.pairs)
        if len(normalized) != 3 or len(set(normalized)) != 3:
            raise ConfigurationError(f"Subspace axes must be three distinct pairs, got {self.pairs}")
        if any(i == j for i, j in normalized):
            raise ConfigurationError("Subspace axes cannot lie on the diagonal")
        object.__setattr__(self, "pairs", normalized)

    def validate(self, n: int) -> None:
        for i, j in self.pairs:
            if not (0 <= i < j < n):
                raise ConfigurationError(f"Pair ({i}, {j}) invalid for N={n}")

    def indices(self, n: int) -> Tuple[int, int, int]:
        self.validate(n)
        template = WeightMatrix(n)
        return tuple(template.pair_index(i, j) for i, j in self.pairs)

    def label(self, k: int) -> str:
        i, j = self.pairs[k]
        return f"w_{i + 1}{j + 1}" if max(i, j) < 9 else f"w_{i + 1}_{j + 1}"


@dataclass
class SectionCurve:
    """
    One slice of a manifold section.

    Attributes:
        slice_value (float): Fixed value of the third weight.
        points (np.ndarray): (first weight, second weight) per vertex.
        residuals (np.ndarray): Defining-equation residual per vertex.
        stalled (bool): Continuation stopped on a step below the minimum.
        closed (bool): The curve returned to its start.
        states (Optional[np.ndarray]): Fixed point and null vector per vertex (fold sections).
    """

    slice_value: float
    points: np.ndarray
    residuals: np.ndarray
    stalled: bool = False
    closed: bool = False
    states: Optional[np.ndarray] = None


@dataclass
class ManifoldSection:
    """Curve family of a bifurcation manifold cut by planes of constant third weight."""

    axes: SubspaceAxes
    kind: str
    curves: List[SectionCurve] = field(default_factory=list)
    frozen: Optional[WeightMatrix] = None
    t_n: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        values = [float(np.max(c.residuals)) for c in self.curves if c.residuals.size]
        return max(values) if values else 0.0

    def slice_values(self) -> List[float]:
        return sorted({c.slice_value for c in self.curves})


@dataclass
class CrossingRecord:
    t_cross: float
    direction: str
    test_value_before: float
    test_value_after: float


def _leading_eig(w: WeightMatrix, cfg: NetworkConfig) -> Tuple[float, np.ndarray]:
    scaled = cfg.g * cfg.lam * w.activated(cfg.lam)
    values, vectors = linalg.eigh(scaled, subset_by_index=[cfg.N - 1, cfg.N - 1])
    return float(values[0]), vectors[:, 0]


def pitchfork_test(w: WeightMatrix, cfg: NetworkConfig) -> float:
    """
    h(w) = largest eigenvalue of g * lam * F(W), minus one.

    h < 0 when the origin is stable, h = 0 on the pitchfork manifold and
    h > 0 once the origin has lost stability.
    """
    return _leading_eig(w, cfg)[0] - 1.0


def pitchfork_gradient(w: WeightMatrix, cfg: NetworkConfig) -> np.ndarray:
    """dh/dw for every stored weight, assuming a simple leading eigenvalue."""
    _, v = _leading_eig(w, cfg)
    rows, cols = np.triu_indices(cfg.N, 1)
    return 2.0 * v[rows] * v[cols] * cfg.g * cfg.lam * activation_deriv(w.values, cfg.lam)


def _with_axes(frozen: WeightMatrix, indices: Sequence[int], values: Sequence[float]) -> WeightMatrix:
    w = frozen.copy()
    w.values[list(indices)] = values
    return w


def _pitchfork_slice(
    job: Tuple[NetworkConfig, float, ManifoldSettings, int]
) -> Tuple[List[SectionCurve], List[str]]:
    cfg, c, settings, rays = job
    frozen = WeightMatrix.zeros(cfg.N)
    idx = SubspaceAxes(((0, 1), (0, 2), (1, 2))).indices(cfg.N)

    def weights(z: np.ndarray) -> WeightMatrix:
        return _with_axes(frozen, idx, [z[0], z[1], c])

    def residual(z: np.ndarray) -> np.ndarray:
        return np.array([pitchfork_test(weights(z), cfg)])

    def jacobian(z: np.ndarray) -> np.ndarray:
        grad = pitchfork_gradient(weights(z), cfg)
        return grad[[idx[0], idx[1]]][None, :]

    box = settings.plane_box

    def inside(z: np.ndarray) -> bool:
        return bool(np.max(np.abs(z)) <= box)

    seeds = []
    for theta in np.linspace(0.0, 2.0 * np.pi, rays, endpoint=False):
        direction = np.array([np.cos(theta), np.sin(theta)])

        def along(r: float) -> float:
            return residual(r * direction)[0]

        edge = box / max(abs(direction[0]), abs(direction[1]))
        if along(0.0) * along(edge) < 0:
            seeds.append(brentq(along, 0.0, edge, xtol=1e-14) * direction)

    curves: List[SectionCurve] = []
    notes: List[str] = []
    for seed in seeds:
        if any(np.min(np.max(np.abs(curve.points - seed), axis=1)) < settings.max_step for curve in curves):
            continue
        traced = trace_both_ways(
            residual,
            jacobian,
            seed,
            step=settings.initial_step,
            min_step=settings.min_step,
            max_step=settings.max_step,
            tol=settings.corrector_tol,
            max_points=settings.max_points,
            inside=inside,
        )
        curves.append(_curve(c, traced))
    if not curves:
        notes.append(f"slice {c:.6g}: empty level set inside the box")
    return curves, notes


def _curve(c: float, traced: ContinuationResult, plane: Optional[slice] = None) -> SectionCurve:
    points = traced.points if plane is None else traced.points[:, plane]
    states = None if plane is None else traced.points
    return SectionCurve(
        slice_value=float(c),
        points=np.array(points),
        residuals=np.array(traced.residuals),
        stalled=traced.stalled,
        closed=traced.closed,
        states=states,
    )


def _range(spec: Tuple[float, float, float]) -> np.ndarray:
    lo, hi, step = spec
    count = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(count), 12)


def pitchfork_surface_N3(
    cfg: NetworkConfig,
    w23_samples: Optional[Sequence[float]] = None,
    settings: Optional[ManifoldSettings] = None,
    rays: int = 8,
    workers: int = 1,
) -> ManifoldSection:
    """
    Level curves h(w12, w13, w23) = 0 of the three-neuron pitchfork manifold.

    For each sampled w23 the curve is seeded by root finding along rays from
    the origin of the (w12, w13) plane and traced by pseudo-arclength
    continuation inside the box |w| <= ``plane_box``.

    Args:
        cfg (NetworkConfig): Network parameters; N must be 3.
        w23_samples (Optional[Sequence[float]]): Slice values; ``slice_range`` by default.
        settings (Optional[ManifoldSettings]): Continuation settings.
        rays (int): Number of seeding rays per slice.
        workers (int): Processes, one slice per task.

    Returns:
        ManifoldSection: Curves per slice; empty slices are noted.

    Raises:
        ConfigurationError: If N != 3.
    """
    settings = settings or ManifoldSettings()
    if cfg.N != 3:
        raise ConfigurationError(f"The full pitchfork surface needs N=3, got N={cfg.N}")
    samples = _range(settings.slice_range) if w23_samples is None else np.asarray(w23_samples, dtype=float)
    section = ManifoldSection(SubspaceAxes(((0, 1), (0, 2), (1, 2))), "Pitchfork")
    results = map_ordered(
        _pitchfork_slice, [(cfg, float(c), settings, rays) for c in samples], workers=workers
    )
    for curves, notes in results:
        section.curves.extend(curves)
        section.notes.extend(notes)
    for note in section.notes:
        logger.warning(note)
    logger.info(f"Pitchfork surface: {len(section.curves)} curves over {len(samples)} slices")
    return section


class FoldSystem:
    """
    Saddle-node condition in a three-weight subspace with the third weight fixed.

    Unknowns z = (x, v, a, b): fixed point x, null vector v of J(x) and the
    first two subspace weights. Equations: u(x) = 0, J(x) v = 0, |v|^2 = 1.
    """

    def __init__(self, frozen: WeightMatrix, cfg: NetworkConfig, axes: SubspaceAxes, c: float):
        self.frozen = frozen
        self.cfg = cfg
        self.axes = axes
        self.idx = axes.indices(cfg.N)
        self.c = float(c)

    @property
    def size(self) -> int:
        return 2 * self.cfg.N + 2

    def split(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float, float]:
        n = self.cfg.N
        return z[:n], z[n : 2 * n], float(z[2 * n]), float(z[2 * n + 1])

    def weights(self, a: float, b: float) -> WeightMatrix:
        return _with_axes(self.frozen, self.idx, [a, b, self.c])

    def residual(self, z: np.ndarray) -> np.ndarray:
        x, v, a, b = self.split(z)
        system = RetrievalSystem(self.weights(a, b), self.cfg)
        return np.concatenate([system.velocity(x), system.jacobian(x) @ v, [v @ v - 1.0]])

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        n, lam, g = self.cfg.N, self.cfg.lam, self.cfg.g
        x, v, a, b = self.split(z)
        w = self.weights(a, b)
        system = RetrievalSystem(w, self.cfg)
        jac = system.jacobian(x)
        fx, dfx = activation(x, lam), activation_deriv(x, lam)
        out = np.zeros((2 * n + 1, 2 * n + 2))
        out[:n, :n] = jac
        out[n : 2 * n, :n] = system.coupling * (activation_second_deriv(x, lam) * v)[None, :]
        out[n : 2 * n, n : 2 * n] = jac
        out[2 * n, n : 2 * n] = 2.0 * v
        for col, (i, j) in zip((2 * n, 2 * n + 1), self.axes.pairs[:2]):
            slope = g * activation_deriv(w[i, j], lam)
            out[i, col] = slope * fx[j]
            out[j, col] = slope * fx[i]
            out[n + i, col] = slope * dfx[j] * v[j]
            out[n + j, col] = slope * dfx[i] * v[i]
        return out


def _nearest_fold_point(w: WeightMatrix, cfg: NetworkConfig, fp_settings: Optional[FixedPointSettings]) -> np.ndarray:
    census = attractor_census(w, cfg, fp_settings)
    system = RetrievalSystem(w, cfg)
    best, best_value = None, np.inf
    for p in census.all_points():
        if p.is_origin:
            continue
        value, _ = system.leading_eigenpair(p.location)
        if abs(value) < best_value:
            best, best_value = p.location, abs(value)
    if best is None:
        raise DomainError("No non-trivial fixed point to seed the fold section from")
    return best


def saddle_node_section(
    traj: WeightTrajectory,
    t_n: float,
    axes: SubspaceAxes,
    cfg: NetworkConfig,
    third_samples: Optional[Sequence[float]] = None,
    fold_point: Optional[np.ndarray] = None,
    settings: Optional[ManifoldSettings] = None,
    fp_settings: Optional[FixedPointSettings] = None,
) -> ManifoldSection:
    """
    Cross-section of the saddle-node manifold through the frozen weights W(t_n).

    All weights except the three axes are frozen at W(t_n). The fold curve
    through the bifurcating fixed point is found in the slice of the
    trajectory's own third weight, then carried to each sampled third-weight
    value in steps of 0.01 and traced there by pseudo-arclength continuation.

    Args:
        traj (WeightTrajectory): The learning run.
        t_n (float): Learning time supplying the frozen weights.
        axes (SubspaceAxes): The three weights spanning the section.
        cfg (NetworkConfig): Network parameters.
        third_samples (Optional[Sequence[float]]): Slice values; ``third_axis_range`` by default.
        fold_point (Optional[np.ndarray]): Fixed point at the fold; the point
            with the eigenvalue nearest zero at W(t_n) when omitted.
        settings (Optional[ManifoldSettings]): Continuation settings.
        fp_settings (Optional[FixedPointSettings]): Settings of the fold-point search.

    Returns:
        ManifoldSection: Curves per slice; stalls are flagged on the curve.

    Raises:
        DomainError: If t_n is outside the trajectory or no fold can be seeded.
    """
    settings = settings or ManifoldSettings()
    frozen = traj.weights_at(t_n)
    idx = axes.indices(cfg.N)
    a0, b0, c0 = (float(frozen.values[k]) for k in idx)
    samples = _range(settings.third_axis_range) if third_samples is None else np.asarray(third_samples, dtype=float)
    if fold_point is None:
        fold_point = _nearest_fold_point(frozen, cfg, fp_settings)
    _, v0 = RetrievalSystem(frozen, cfg).leading_eigenpair(fold_point)

    section = ManifoldSection(axes, "SaddleNode", frozen=frozen, t_n=float(t_n))
    plane = slice(2 * cfg.N, 2 * cfg.N + 2)
    box = settings.plane_box

    def inside(z: np.ndarray) -> bool:
        return bool(np.max(np.abs(z[plane])) <= box)

    start = FoldSystem(frozen, cfg, axes, c0)
    seeded = gauss_newton_project(
        start.residual, start.jacobian, np.concatenate([fold_point, v0, [a0, b0]]), tol=settings.corrector_tol
    )
    if not seeded.converged:
        raise DomainError(f"Fold system did not converge at t_n={t_n} (residual {seeded.residual:.2e})")
    logger.info(
        f"Fold seeded at t_n={t_n:.6g}: in-plane offset {np.max(np.abs(seeded.x[plane] - [a0, b0])):.2e}"
    )

    def walk(targets: Sequence[float]) -> None:
        z, c = seeded.x, c0
        for target in targets:
            steps = max(1, int(np.ceil(abs(target - c) / 0.01 - 1e-9)))
            ok = True
            for value in np.linspace(c, target, steps + 1)[1:]:
                fold = FoldSystem(frozen, cfg, axes, value)
                moved = gauss_newton_project(fold.residual, fold.jacobian, z, tol=settings.corrector_tol)
                if not moved.converged:
                    ok = False
                    break
                z = moved.x
            if not ok:
                section.notes.append(f"slice {target:.6g}: fold curve lost while moving between slices")
                return
            c = target
            fold = FoldSystem(frozen, cfg, axes, target)
            traced = trace_both_ways(
                fold.residual,
                fold.jacobian,
                z,
                step=settings.initial_step,
                min_step=settings.min_step,
                max_step=settings.max_step,
                tol=settings.corrector_tol,
                max_points=settings.max_points,
                inside=inside,
            )
            section.curves.append(_curve(target, traced, plane))
            if traced.stalled:
                logger.warning(f"Fold continuation stalled on slice {target:.6g}")

    walk(sorted(s for s in samples if s >= c0))
    walk(sorted((s for s in samples if s < c0), reverse=True))
    section.curves.sort(key=lambda curve: curve.slice_value)
    for note in section.notes:
        logger.warning(note)
    return section


def crossing_detect(
    traj: WeightTrajectory,
    test: Callable[[WeightMatrix], float],
    width: float = 1e-3,
) -> List[CrossingRecord]:
    """
    Sign changes of a scalar test along the trajectory, bisected in t.

    Between samples the weights come from re-integrating the learning run
    when the trajectory carries its state and stimulus, otherwise from
    linear interpolation. A change from negative to positive is "leaving",
    the reverse "entering".
    """
    can_reintegrate = traj.x_samples is not None and traj.schedule() is not None

    def value_at(t: float) -> float:
        w = traj.state_at(t).w if can_reintegrate else traj.weights_at(t)
        return float(test(w))

    values = [float(test(traj.snapshot(k))) for k in range(len(traj))]
    records = []
    for k in range(len(traj) - 1):
        before, after = values[k], values[k + 1]
        if (before > 0) == (after > 0):
            continue
        lo, hi = float(traj.sample_times[k]), float(traj.sample_times[k + 1])
        lo_positive = before > 0
        while hi - lo > width:
            mid = 0.5 * (lo + hi)
            if (value_at(mid) > 0) == lo_positive:
                lo = mid
            else:
                hi = mid
        record = CrossingRecord(0.5 * (lo + hi), "leaving" if after > 0 else "entering", before, after)
        logger.info(f"Crossing ({record.direction}) at t={record.t_cross:.6f}")
        records.append(record)
    return records


def project_trajectory(traj: WeightTrajectory, axes: SubspaceAxes) -> np.ndarray:
    """Rows of (t, w_a, w_b, w_c) for the three subspace weights."""
    idx = list(axes.indices(traj.cfg.N))
    return np.column_stack([traj.sample_times, traj.weights[:, idx]])


def _segment_distance(points: np.ndarray, p: np.ndarray) -> float:
    if len(points) == 1:
        return float(np.linalg.norm(points[0] - p))
    a, b = points[:-1], points[1:]
    ab = b - a
    length = np.einsum("ij,ij->i", ab, ab)
    theta = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(length > 0, length, 1.0), 0.0, 1.0)
    nearest = a + theta[:, None] * ab
    return float(np.min(np.linalg.norm(nearest - p, axis=1)))


def section_distance(section: ManifoldSection, point: Sequence[float]) -> float:
    """
    In-plane distance from a (w_a, w_b, w_c) point to the polylines of the
    slice whose third value is closest to w_c.
    """
    if not section.curves:
        raise DomainError("Section has no curves")
    point = np.asarray(point, dtype=float)
    values = np.array(section.slice_values())
    nearest = values[np.argmin(np.abs(values - point[2]))]
    return min(
        _segment_distance(curve.points, point[:2])
        for curve in section.curves
        if curve.slice_value == nearest and len(curve.points)
    )


def write_section_csv(section: ManifoldSection, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["curve", section.axes.label(2), "vertex", section.axes.label(0), section.axes.label(1), "residual"]
        )
        for k, curve in enumerate(section.curves):
            for i, (p, r) in enumerate(zip(curve.points, curve.residuals)):
                writer.writerow([k, f"{curve.slice_value:.10g}", i, f"{p[0]:.12g}", f"{p[1]:.12g}", f"{r:.3e}"])
    logger.info(f"Wrote {len(section.curves)} section curves to {path}")


def _resample(points: np.ndarray, count: int) -> np.ndarray:
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arclength = np.concatenate([[0.0], np.cumsum(steps)])
    if arclength[-1] == 0:
        return np.repeat(points[:1], count, axis=0)
    targets = np.linspace(0.0, arclength[-1], count)
    return np.column_stack([np.interp(targets, arclength, points[:, k]) for k in range(points.shape[1])])


def write_section_mesh(section: ManifoldSection, path: str, samples: int = 64) -> None:
    """
    Plain-text triangle mesh (wavefront style): ``v a b c`` vertex lines,
    then 1-based ``f i j k`` faces. The longest curve of each slice is
    resampled to ``samples`` points by arclength and consecutive slices
    are joined by triangle strips.
    """
    rows = []
    for value in section.slice_values():
        candidates = [c for c in section.curves if c.slice_value == value and len(c.points) > 1]
        if candidates:
            longest = max(candidates, key=lambda c: len(c.points))
            ring = _resample(longest.points, samples)
            rows.append(np.column_stack([ring, np.full(samples, value)]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {section.kind} section, axes {[section.axes.label(k) for k in range(3)]}\n")
        for ring in rows:
            for a, b, c in ring:
                fh.write(f"v {a:.10g} {b:.10g} {c:.10g}\n")
        for r in range(len(rows) - 1):
            base, top = r * samples + 1, (r + 1) * samples + 1
            for i in range(samples - 1):
                fh.write(f"f {base + i} {base + i + 1} {top + i}\n")
                fh.write(f"f {base + i + 1} {top + i + 1} {top + i}\n")
    logger.info(f"Wrote mesh with {len(rows)} rings to {path}")


def write_projection_csv(projection: np.ndarray, axes: SubspaceAxes, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *[axes.label(k) for k in range(3)]])
        for row in projection:
            writer.writerow([f"{v:.12g}" for v in row])


def write_crossings_csv(records: List[CrossingRecord], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_cross", "direction", "test_before", "test_after"])
        for r in records:
            writer.writerow([f"{r.t_cross:.10g}", r.direction, f"{r.test_value_before:.12g}", f"{r.test_value_after:.12g}"])
