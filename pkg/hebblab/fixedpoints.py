# python imports
import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

# third party imports
import numpy as np
from scipy.optimize import brentq

# local imports
from .config import FixedPointSettings, NetworkConfig, derive_seed, make_rng
from .errors import DomainError, NotAFixedPointError
from .model import RetrievalSystem, TrainingSet, WeightMatrix
from .parallel import map_ordered
from .simulate import WeightTrajectory
from .solvers import newton_solve

logger = logging.getLogger(__name__)


class StabilityClass(str, Enum):
    STABLE = "Stable"
    USEFUL_SADDLE = "UsefulSaddle"
    OTHER_UNSTABLE = "OtherUnstable"


@dataclass
class FixedPoint:
    """
    A located equilibrium of the retrieval system.

    Attributes:
        location (np.ndarray): The point x with u(x) = 0.
        eigenvalues (np.ndarray): Real spectrum of J(x), sorted descending.
        stability (StabilityClass): Class from the count of positive eigenvalues.
        unstable_count (int): Number of eigenvalues above the zero threshold.
        residual (float): ||u(x)||_inf.
    """

    location: np.ndarray
    eigenvalues: np.ndarray
    stability: StabilityClass
    unstable_count: int
    residual: float

    @property
    def leading_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def is_origin(self) -> bool:
        return bool(np.max(np.abs(self.location)) < 1e-9)

    def negated(self) -> "FixedPoint":
        return FixedPoint(
            -self.location, self.eigenvalues.copy(), self.stability, self.unstable_count, self.residual
        )


def stability_of(eigenvalues: np.ndarray, zero_threshold: float = 1e-9) -> Tuple[StabilityClass, int]:
    unstable = int(np.sum(eigenvalues > zero_threshold))
    if unstable == 0:
        return StabilityClass.STABLE, 0
    if unstable == 1:
        return StabilityClass.USEFUL_SADDLE, 1
    return StabilityClass.OTHER_UNSTABLE, unstable


def classify(
    location: np.ndarray,
    w: WeightMatrix,
    cfg: NetworkConfig,
    zero_threshold: float = 1e-9,
    accept_tol: float = 1e-10,
    system: Optional[RetrievalSystem] = None,
) -> FixedPoint:
    """
    Spectrum and stability class of a fixed point.

    Args:
        location (np.ndarray): Candidate fixed point.
        w (WeightMatrix): Frozen weights.
        cfg (NetworkConfig): Network parameters.
        zero_threshold (float): Eigenvalues above this count as positive.
        accept_tol (float): Largest residual accepted as a fixed point.
        system (Optional[RetrievalSystem]): Prebuilt system for ``w`` to reuse.

    Returns:
        FixedPoint: The classified point.

    Raises:
        NotAFixedPointError: If ||u(location)||_inf >= accept_tol.
    """
    system = system or RetrievalSystem(w, cfg)
    location = np.array(location, dtype=float)
    residual = system.speed(location)
    if not residual < accept_tol:
        raise NotAFixedPointError(residual, accept_tol)
    eigenvalues = system.eigenvalues(location)
    stability, unstable = stability_of(eigenvalues, zero_threshold)
    return FixedPoint(location, eigenvalues, stability, unstable, residual)


def seed_battery(
    cfg: NetworkConfig,
    seed: int,
    training_set: Optional[TrainingSet] = None,
    previous: Iterable[np.ndarray] = (),
    settings: Optional[FixedPointSettings] = None,
) -> np.ndarray:
    """
    Start vectors for a fixed-point search, one per row.

    Order: previously known points, the origin, the training vectors and
    perturbations of them, then random points in the hypercube of half side
    ``seed_half_side``. Negations are added by ``find_fixed_points``.
    """
    settings = settings or FixedPointSettings()
    rng = make_rng(seed)
    rows: List[np.ndarray] = [np.asarray(p, dtype=float) for p in previous]
    rows.append(np.zeros(cfg.N))
    if training_set is not None:
        patterns = training_set.vectors.astype(float)
        rows.extend(patterns)
        for _ in range(settings.perturbations_per_pattern):
            noise = rng.uniform(
                -settings.perturbation_radius, settings.perturbation_radius, size=patterns.shape
            )
            rows.extend(patterns + noise)
    if settings.random_seeds:
        rows.extend(
            rng.uniform(
                -settings.seed_half_side,
                settings.seed_half_side,
                size=(settings.random_seeds, cfg.N),
            )
        )
    return np.vstack(rows)


def _solve_seed(job: Tuple[np.ndarray, NetworkConfig, np.ndarray, FixedPointSettings]) -> Optional[np.ndarray]:
    values, cfg, start, settings = job
    system = RetrievalSystem(WeightMatrix(cfg.N, values), cfg)
    result = newton_solve(
        system.velocity,
        system.jacobian,
        start,
        max_iter=settings.newton_max_iter,
        tol=settings.newton_tol,
        accept_tol=settings.accept_tol,
    )
    if result.singular and not result.converged:
        logger.debug("Abandoned a seed on a singular Jacobian")
    return result.x if result.converged else None


def find_fixed_points(
    w: WeightMatrix,
    cfg: NetworkConfig,
    seeds: np.ndarray,
    settings: Optional[FixedPointSettings] = None,
    workers: int = 1,
) -> List[FixedPoint]:
    """
    All fixed points reachable by Newton from the seeds and their negations.

    The origin is always tested. Roots closer than ``dedup_tol`` to an
    earlier root are dropped, in seed order, and the result is closed under
    negation.

    Args:
        w (WeightMatrix): Frozen weights.
        cfg (NetworkConfig): Network parameters.
        seeds (np.ndarray): Start vectors, one per row.
        settings (Optional[FixedPointSettings]): Newton and dedup tolerances.
        workers (int): Processes for the per-seed solves.

    Returns:
        List[FixedPoint]: Distinct classified fixed points.

    Raises:
        DomainError: If no seeds are given.
    """
    settings = settings or FixedPointSettings()
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[0] == 0 or seeds.size == 0:
        raise DomainError("find_fixed_points needs at least one seed")
    starts = [np.zeros(cfg.N)]
    for s in seeds:
        starts.extend([s, -s])

    roots = map_ordered(
        _solve_seed, [(w.values, cfg, s, settings) for s in starts], workers=workers
    )
    abandoned = sum(1 for r in roots if r is None)
    if abandoned:
        logger.debug(f"{abandoned} of {len(starts)} seeds did not converge")

    system = RetrievalSystem(w, cfg)
    distinct: List[np.ndarray] = []

    def known(x: np.ndarray) -> bool:
        return any(np.max(np.abs(x - p)) <= settings.dedup_tol for p in distinct)

    for root in roots:
        if root is None or known(root):
            continue
        distinct.append(root)
        if not known(-root):
            distinct.append(-root)

    points = []
    for x in distinct:
        try:
            points.append(
                classify(x, w, cfg, settings.zero_threshold, settings.accept_tol, system)
            )
        except NotAFixedPointError as e:
            logger.warning(f"Dropping root with residual {e.residual:.2e}")
    return points


@dataclass
class Branch:
    """
    One fixed point followed along learning time.

    Attributes:
        id (int): Stable identifier.
        times (List[float]): Sample times, increasing.
        points (List[FixedPoint]): The point at each sample.
        partner (Optional[int]): Id of the negation-symmetric branch.
        born_at (Optional[float]): First sample time when the branch appeared
            mid-trajectory; None when it existed from the first sample.
        died_at (Optional[float]): First sample time without the branch; None
            when it survives to the last sample.
    """

    id: int
    times: List[float] = field(default_factory=list)
    points: List[FixedPoint] = field(default_factory=list)
    partner: Optional[int] = None
    born_at: Optional[float] = None
    died_at: Optional[float] = None

    @property
    def last(self) -> FixedPoint:
        return self.points[-1]

    def point_at(self, t: float) -> Optional[FixedPoint]:
        for ti, p in zip(self.times, self.points):
            if abs(ti - t) < 1e-9:
                return p
        return None

    @property
    def is_origin(self) -> bool:
        return all(p.is_origin for p in self.points)


def _match(previous: List[np.ndarray], current: List[np.ndarray], bound: float) -> Dict[int, int]:
    """Greedy nearest-neighbour assignment previous -> current under the bound."""
    if not previous or not current:
        return {}
    prev = np.array(previous)
    cur = np.array(current)
    dist = np.max(np.abs(prev[:, None, :] - cur[None, :, :]), axis=2)
    order = np.argsort(dist, axis=None, kind="stable")
    pairs: Dict[int, int] = {}
    taken = set()
    for flat in order:
        i, j = divmod(int(flat), cur.shape[0])
        if dist[i, j] >= bound:
            break
        if i in pairs or j in taken:
            continue
        pairs[i] = j
        taken.add(j)
    return pairs


def _pair_partners(branches: List[Branch], tol: float = 1e-6) -> None:
    for b in branches:
        if b.partner is not None or b.is_origin:
            continue
        t, p = b.times[0], b.points[0].location
        for c in branches:
            if c.id == b.id or c.partner is not None:
                continue
            q = c.point_at(t)
            if q is not None and np.max(np.abs(q.location + p)) < tol:
                b.partner, c.partner = c.id, b.id
                break


def track_along_trajectory(
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    t_range: Optional[Tuple[float, float]] = None,
    training_set: Optional[TrainingSet] = None,
    settings: Optional[FixedPointSettings] = None,
    seed: int = 0,
    stride: int = 1,
    workers: int = 1,
) -> List[Branch]:
    """
    Follow fixed points across the samples of a weight trajectory.

    Each sample is seeded with the previous sample's points, the training
    patterns and fresh random points; points are linked to the previous
    sample by nearest-neighbour matching within ``continuity_bound``.
    Unmatched points open new branches and unmatched branches end.

    Args:
        traj (WeightTrajectory): The learning run.
        cfg (NetworkConfig): Network parameters.
        t_range (Optional[Tuple[float, float]]): Time window; the full span by default.
        training_set (Optional[TrainingSet]): Patterns for seeding; taken from the trajectory when omitted.
        settings (Optional[FixedPointSettings]): Solver and tracking settings.
        seed (int): Seed of the per-sample random seeds.
        stride (int): Use every ``stride``-th sample.
        workers (int): Processes for the per-seed solves.

    Returns:
        List[Branch]: Branches ordered by id.

    Raises:
        DomainError: If ``t_range`` lies outside the trajectory.
    """
    settings = settings or FixedPointSettings()
    training_set = training_set or traj.training_set()
    t0, t1 = traj.span
    lo, hi = t_range or (t0, t1)
    if lo < t0 - 1e-9 or hi > t1 + 1e-9 or lo > hi:
        raise DomainError(f"t_range [{lo}, {hi}] outside trajectory span [{t0}, {t1}]")
    indices = np.flatnonzero(
        (traj.sample_times >= lo - 1e-12) & (traj.sample_times <= hi + 1e-12)
    )[:: max(1, stride)]

    branches: List[Branch] = []
    alive: List[Branch] = []
    logger.info(f"Tracking fixed points over {len(indices)} samples in [{lo}, {hi}]")

    for step, k in enumerate(indices):
        t = float(traj.sample_times[k])
        w = traj.snapshot(k)
        seeds = seed_battery(
            cfg,
            derive_seed(seed, int(k)),
            training_set,
            [b.last.location for b in alive],
            settings,
        )
        points = find_fixed_points(w, cfg, seeds, settings, workers)
        pairs = _match(
            [b.last.location for b in alive],
            [p.location for p in points],
            settings.continuity_bound,
        )
        still_alive = []
        for i, b in enumerate(alive):
            if i in pairs:
                b.times.append(t)
                b.points.append(points[pairs[i]])
                still_alive.append(b)
            else:
                b.died_at = t
                logger.debug(f"Branch {b.id} ended at t={t:.6g}")
        matched = set(pairs.values())
        for j, p in enumerate(points):
            if j in matched:
                continue
            b = Branch(id=len(branches), times=[t], points=[p], born_at=t if step else None)
            branches.append(b)
            still_alive.append(b)
            if step:
                logger.debug(f"Branch {b.id} born at t={t:.6g} ({p.stability.value})")
        alive = still_alive
        if step and step % 500 == 0:
            logger.info(f"Tracked up to t={t:.6g}: {len(alive)} live branches")

    _pair_partners(branches)
    logger.info(f"Tracking produced {len(branches)} branches")
    return branches


class BifurcationKind(str, Enum):
    PITCHFORK = "Pitchfork"
    PITCHFORK_REVERSE = "PitchforkReverse"
    SADDLE_NODE_BIRTH = "SaddleNodeBirth"
    SADDLE_NODE_DEATH = "SaddleNodeDeath"
    UNKNOWN = "Unknown"

    @property
    def destroys_attractors(self) -> bool:
        return self in (BifurcationKind.SADDLE_NODE_DEATH, BifurcationKind.PITCHFORK_REVERSE)


@dataclass
class BifurcationEvent:
    """
    A localized bifurcation along learning time.

    Attributes:
        t_star (float): Localized time of the event.
        kind (BifurcationKind): Event class.
        participants (List[np.ndarray]): Fixed-point locations involved, at the side where they exist.
        symmetry_partner (Optional[int]): Index of the mirrored event in the event list.
        branch_ids (List[int]): Branches created or ended by the event.
        stabilities (List[StabilityClass]): Stability of each participant where it exists.
        observed_at (Optional[float]): Learning time at which the participants were located.
    """

    t_star: float
    kind: BifurcationKind
    participants: List[np.ndarray]
    symmetry_partner: Optional[int] = None
    branch_ids: List[int] = field(default_factory=list)
    stabilities: List[StabilityClass] = field(default_factory=list)
    observed_at: Optional[float] = None

    def stable_participants(self) -> List[np.ndarray]:
        """Locations of the participating attractors."""
        return [
            x for x, s in zip(self.participants, self.stabilities) if s is StabilityClass.STABLE
        ]


def origin_eigenvalue(traj: WeightTrajectory, cfg: NetworkConfig, t: float, index: int) -> float:
    """The index-th largest eigenvalue of J(0) at interpolated weights W(t)."""
    return float(RetrievalSystem(traj.weights_at(t), cfg).origin_spectrum[index])


def _roots_near(
    w: WeightMatrix,
    cfg: NetworkConfig,
    seeds: Sequence[np.ndarray],
    centre: np.ndarray,
    radius: float,
    settings: FixedPointSettings,
) -> List[FixedPoint]:
    system = RetrievalSystem(w, cfg)
    found: List[FixedPoint] = []
    for s in seeds:
        result = newton_solve(
            system.velocity,
            system.jacobian,
            s,
            max_iter=settings.newton_max_iter,
            tol=settings.newton_tol,
            accept_tol=settings.accept_tol,
        )
        if not result.converged or np.max(np.abs(result.x - centre)) >= radius:
            continue
        if any(np.max(np.abs(result.x - p.location)) <= settings.dedup_tol for p in found):
            continue
        found.append(classify(result.x, w, cfg, settings.zero_threshold, settings.accept_tol, system))
    return found


def _seeds_for(locations: List[np.ndarray]) -> List[np.ndarray]:
    if len(locations) != 2:
        return list(locations)
    a, b = locations
    return [a, b, 0.5 * (a + b), a + 0.5 * (a - b), b + 0.5 * (b - a)]


def _localize(
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    points: List[FixedPoint],
    absent: float,
    present: float,
    settings: FixedPointSettings,
) -> Tuple[float, List[FixedPoint], float]:
    """
    Bisect between a time where the points are absent and one where they
    exist. They exist at t when Newton from their seeds finds, near them, one
    root with each of their unstable counts.

    Returns:
        Tuple[float, List[FixedPoint], float]: The event time, the points as
        last located and the time they were located at.
    """
    current = list(points)
    centre = np.mean([p.location for p in points], axis=0)

    def exists(t: float) -> Optional[List[FixedPoint]]:
        seeds = _seeds_for([p.location for p in current])
        roots = _roots_near(traj.weights_at(t), cfg, seeds, centre, settings.continuity_bound, settings)
        chosen: List[FixedPoint] = []
        for p in current:
            same = [
                r for r in roots
                if r.unstable_count == p.unstable_count and all(r is not c for c in chosen)
            ]
            if not same:
                return None
            chosen.append(min(same, key=lambda r: float(np.max(np.abs(r.location - p.location)))))
        return chosen

    while abs(present - absent) > settings.bisection_width:
        mid = 0.5 * (absent + present)
        roots = exists(mid)
        if roots is not None:
            present, current = mid, roots
        else:
            absent = mid
    return 0.5 * (absent + present), current, present


Candidate = Tuple[int, int, FixedPoint]


def _pair_by_index(
    candidates: List[Candidate], max_gap: int = 1
) -> Tuple[List[Tuple[Candidate, Candidate]], List[Candidate]]:
    """
    Pair fold candidates (slot, branch id, point) whose unstable counts differ
    by one, whatever their stability class. Pairs from the same sampling
    interval come first, then the closest; slots more than ``max_gap`` apart
    never pair.
    """
    options = []
    for i, (slot_a, _, p) in enumerate(candidates):
        for j in range(i + 1, len(candidates)):
            slot_b, _, q = candidates[j]
            gap = abs(slot_a - slot_b)
            if gap > max_gap or abs(p.unstable_count - q.unstable_count) != 1:
                continue
            options.append((gap, float(np.max(np.abs(p.location - q.location))), i, j))
    options.sort()
    used = set()
    pairs = []
    for _, _, i, j in options:
        if i in used or j in used:
            continue
        used.update((i, j))
        pairs.append((candidates[i], candidates[j]))
    return pairs, [c for k, c in enumerate(candidates) if k not in used]


def _continues(
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    start: FixedPoint,
    end: FixedPoint,
    left: float,
    right: float,
    settings: FixedPointSettings,
    substeps: int = 8,
) -> bool:
    """True when Newton continuation carries ``start`` at ``left`` onto ``end`` at ``right``."""
    if start.unstable_count != end.unstable_count:
        return False
    x = start.location
    for t in np.linspace(left, right, substeps + 1)[1:]:
        system = RetrievalSystem(traj.weights_at(t), cfg)
        result = newton_solve(
            system.velocity, system.jacobian, x, settings.newton_max_iter, settings.newton_tol, settings.accept_tol
        )
        if not result.converged:
            return False
        x = result.x
    return bool(np.max(np.abs(x - end.location)) <= settings.dedup_tol)


def _relink(
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    born: List[Tuple[int, FixedPoint]],
    died: List[Tuple[int, FixedPoint]],
    left: float,
    right: float,
    settings: FixedPointSettings,
) -> Tuple[List[Tuple[int, FixedPoint]], List[Tuple[int, FixedPoint]]]:
    """Drop death/birth pairs that are one point moving further than the continuity bound."""
    kept_born = list(born)
    kept_died = []
    for bid, p in died:
        match = next(
            (e for e in kept_born if _continues(traj, cfg, p, e[1], left, right, settings)), None
        )
        if match is None:
            kept_died.append((bid, p))
        else:
            kept_born.remove(match)
            logger.debug(f"Branch {bid} continues as branch {match[0]} near t={right:.6g}")
    return kept_born, kept_died


def _claim_symmetric_pair(
    candidates: List[Tuple[int, FixedPoint]], tol: float
) -> List[int]:
    """The negation-symmetric pair closest to the origin among candidates."""
    best, best_norm = [], np.inf
    for i, (bid, p) in enumerate(candidates):
        for cid, q in candidates[i + 1 :]:
            if np.max(np.abs(p.location + q.location)) < tol:
                norm = float(np.max(np.abs(p.location)))
                if norm < best_norm:
                    best, best_norm = [bid, cid], norm
    return best


def detect_bifurcations(
    branches: List[Branch],
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    settings: Optional[FixedPointSettings] = None,
) -> List[BifurcationEvent]:
    """
    Localize and classify the bifurcations behind the branch topology.

    Pitchforks are sign changes of the origin's spectrum, refined by a
    bracketing root finder on the crossing eigenvalue. Births and deaths of
    point pairs of adjacent unstable count away from the origin are
    saddle-node events; the pair may straddle two neighbouring sampling
    intervals. A death and a birth that Newton continuation joins are one
    point that moved, not an event. Whatever is left is reported as Unknown.
    Saddle-node and Unknown times are refined by bisection to
    ``bisection_width``, and mirrored saddle-node events are cross-linked.

    Args:
        branches (List[Branch]): Output of ``track_along_trajectory``.
        traj (WeightTrajectory): The same learning run.
        cfg (NetworkConfig): Network parameters.
        settings (Optional[FixedPointSettings]): Thresholds and tolerances.

    Returns:
        List[BifurcationEvent]: Events ordered by t_star.
    """
    settings = settings or FixedPointSettings()
    if not branches:
        return []
    times = sorted({t for b in branches for t in b.times})
    slots = list(zip(times[:-1], times[1:]))
    events: List[BifurcationEvent] = []
    births: Dict[float, List[Tuple[int, FixedPoint]]] = {}
    deaths: Dict[float, List[Tuple[int, FixedPoint]]] = {}
    by_id = {b.id: b for b in branches}
    for b in branches:
        if b.born_at is not None:
            births.setdefault(b.born_at, []).append((b.id, b.points[0]))
        if b.died_at is not None:
            deaths.setdefault(b.died_at, []).append((b.id, b.last))

    born_left: List[Candidate] = []
    died_left: List[Candidate] = []
    for slot, (left, right) in enumerate(slots):
        before = RetrievalSystem(traj.weights_at(left), cfg).origin_spectrum
        after = RetrievalSystem(traj.weights_at(right), cfg).origin_spectrum
        up_before = int(np.sum(before > 0))
        up_after = int(np.sum(after > 0))
        born = list(births.get(right, []))
        died = list(deaths.get(right, []))

        for c in range(min(up_before, up_after), max(up_before, up_after)):
            t_star = brentq(
                lambda t: origin_eigenvalue(traj, cfg, t, c),
                left,
                right,
                xtol=min(1e-10, settings.bisection_width),
            )
            if up_after > up_before:
                kind = BifurcationKind.PITCHFORK
                claimed = _claim_symmetric_pair(born, 1e-6)
                born = [e for e in born if e[0] not in claimed]
                points = [by_id[i].points[0] for i in claimed]
                origin, seen = stability_of(after, settings.zero_threshold)[0], right
            else:
                kind = BifurcationKind.PITCHFORK_REVERSE
                claimed = _claim_symmetric_pair(died, 1e-6)
                died = [e for e in died if e[0] not in claimed]
                points = [by_id[i].last for i in claimed]
                origin, seen = stability_of(before, settings.zero_threshold)[0], left
            events.append(
                BifurcationEvent(
                    t_star,
                    kind,
                    [np.zeros(cfg.N), *(p.location for p in points)],
                    branch_ids=claimed,
                    stabilities=[origin, *(p.stability for p in points)],
                    observed_at=seen,
                )
            )
            logger.info(f"{kind.value} at the origin near t={t_star:.6f}")

        if born and died:
            born, died = _relink(traj, cfg, born, died, left, right, settings)
        born_left.extend((slot, bid, p) for bid, p in born)
        died_left.extend((slot, bid, p) for bid, p in died)

    def record(kind: BifurcationKind, found: Tuple[float, List[FixedPoint], float], ids: List[int]) -> None:
        t_star, points, seen = found
        events.append(
            BifurcationEvent(
                t_star,
                kind,
                [p.location for p in points],
                branch_ids=ids,
                stabilities=[p.stability for p in points],
                observed_at=seen,
            )
        )

    pairs, single = _pair_by_index(born_left)
    for (slot_a, bid, a), (slot_b, cid, b) in pairs:
        absent, present = slots[min(slot_a, slot_b)][0], slots[max(slot_a, slot_b)][1]
        record(BifurcationKind.SADDLE_NODE_BIRTH, _localize(traj, cfg, [a, b], absent, present, settings), [bid, cid])
        logger.info(f"Saddle-node birth near t={events[-1].t_star:.6f}")

    dead_pairs, dead_single = _pair_by_index(died_left)
    for (slot_a, bid, a), (slot_b, cid, b) in dead_pairs:
        present, absent = slots[min(slot_a, slot_b)][0], slots[max(slot_a, slot_b)][1]
        record(BifurcationKind.SADDLE_NODE_DEATH, _localize(traj, cfg, [a, b], absent, present, settings), [bid, cid])
        logger.info(f"Saddle-node death near t={events[-1].t_star:.6f}")

    for slot, bid, p in single:
        left, right = slots[slot]
        record(BifurcationKind.UNKNOWN, _localize(traj, cfg, [p], left, right, settings), [bid])
    for slot, bid, p in dead_single:
        left, right = slots[slot]
        record(BifurcationKind.UNKNOWN, _localize(traj, cfg, [p], right, left, settings), [bid])
    if single or dead_single:
        logger.warning(f"{len(single) + len(dead_single)} branch changes fit no known bifurcation")

    events.sort(key=lambda e: e.t_star)
    _link_symmetric_events(events, settings)
    return events


def _link_symmetric_events(events: List[BifurcationEvent], settings: FixedPointSettings) -> None:
    folds = (BifurcationKind.SADDLE_NODE_BIRTH, BifurcationKind.SADDLE_NODE_DEATH)
    for i, e in enumerate(events):
        if e.kind not in folds or e.symmetry_partner is not None:
            continue
        centre = np.mean(e.participants, axis=0)
        for j in range(i + 1, len(events)):
            f = events[j]
            if f.kind is not e.kind or f.symmetry_partner is not None:
                continue
            if abs(f.t_star - e.t_star) > 2.0 * settings.bisection_width:
                continue
            if np.max(np.abs(np.mean(f.participants, axis=0) + centre)) < settings.continuity_bound:
                e.symmetry_partner, f.symmetry_partner = j, i
                break
        if e.symmetry_partner is None:
            logger.warning(f"{e.kind.value} at t={e.t_star:.6f} has no mirrored partner")


@dataclass
class Census:
    """Fixed points of one weight snapshot grouped by stability class."""

    points: Dict[StabilityClass, List[FixedPoint]]

    @property
    def stable(self) -> int:
        return len(self.points[StabilityClass.STABLE])

    @property
    def useful_saddle(self) -> int:
        return len(self.points[StabilityClass.USEFUL_SADDLE])

    @property
    def other(self) -> int:
        return len(self.points[StabilityClass.OTHER_UNSTABLE])

    def counts(self) -> Dict[str, int]:
        return {cls.value: len(group) for cls, group in self.points.items()}

    def all_points(self) -> List[FixedPoint]:
        return [p for group in self.points.values() for p in group]


def attractor_census(
    w: WeightMatrix,
    cfg: NetworkConfig,
    settings: Optional[FixedPointSettings] = None,
    seed: int = 0,
    training_set: Optional[TrainingSet] = None,
    extra_seeds: Iterable[np.ndarray] = (),
    workers: int = 1,
) -> Census:
    """
    Count the fixed points of a snapshot by stability class using the standard seed battery.
    """
    settings = settings or FixedPointSettings()
    seeds = seed_battery(cfg, seed, training_set, extra_seeds, settings)
    grouped: Dict[StabilityClass, List[FixedPoint]] = {cls: [] for cls in StabilityClass}
    for p in find_fixed_points(w, cfg, seeds, settings, workers):
        grouped[p.stability].append(p)
    return Census(grouped)


def census_timeline(
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    times: Sequence[float],
    settings: Optional[FixedPointSettings] = None,
    seed: int = 0,
    workers: int = 1,
) -> List[Tuple[float, Census]]:
    """Census at each requested learning time (interpolated weights)."""
    training_set = traj.training_set()
    timeline = []
    for k, t in enumerate(times):
        census = attractor_census(
            traj.weights_at(t), cfg, settings, derive_seed(seed, k), training_set, workers=workers
        )
        logger.info(
            f"Census at t={t:.6g}: {census.stable} stable, {census.useful_saddle} useful saddles, "
            f"{census.other} other"
        )
        timeline.append((float(t), census))
    return timeline


def write_census_csv(timeline: List[Tuple[float, Census]], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "stable", "useful_saddle", "other"])
        for t, census in timeline:
            writer.writerow([f"{t:.10g}", census.stable, census.useful_saddle, census.other])


def write_branches_csv(branches: List[Branch], path: str) -> None:
    """Bifurcation diagram rows: (branch_id, t, x1, stability, leading_eigenvalue)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["branch_id", "t", "x1", "stability", "leading_eigenvalue"])
        for b in branches:
            for t, p in zip(b.times, b.points):
                writer.writerow(
                    [b.id, f"{t:.10g}", f"{p.location[0]:.12g}", p.stability.value, f"{p.leading_eigenvalue:.12g}"]
                )
    logger.info(f"Wrote {len(branches)} branches to {path}")


def write_events_csv(events: List[BifurcationEvent], path: str) -> None:
    """Event log: one row per participant, (t_star, kind, partner, stability, x1..xN)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        n = len(events[0].participants[0]) if events and events[0].participants else 0
        writer.writerow(["t_star", "kind", "symmetry_partner", "stability", *[f"x{i + 1}" for i in range(n)]])
        for e in events:
            partner = "" if e.symmetry_partner is None else e.symmetry_partner
            stabilities = [s.value for s in e.stabilities] or [""] * len(e.participants)
            for location, stability in zip(e.participants, stabilities):
                writer.writerow(
                    [f"{e.t_star:.10g}", e.kind.value, partner, stability, *[f"{v:.12g}" for v in location]]
                )
            if not e.participants:
                writer.writerow([f"{e.t_star:.10g}", e.kind.value, partner, "", *["nan"] * n])
    logger.info(f"Wrote {len(events)} bifurcation events to {path}")
