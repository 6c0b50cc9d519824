# python imports
import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, Optional, Tuple

# third party imports
import numpy as np

# local imports
from .config import FixedPointSettings, MemorySettings, NetworkConfig, make_rng
from .errors import ConfigurationError, IntegrationBlowupError, LabelingError
from .fixedpoints import (
    BifurcationEvent,
    StabilityClass,
    find_fixed_points,
    seed_battery,
    stability_of,
)
from .model import RetrievalSystem, TrainingSet, WeightMatrix
from .parallel import map_ordered
from .simulate import ConvergenceResult, Outcome, WeightTrajectory, converge_to_attractor
from .solvers import newton_solve

logger = logging.getLogger(__name__)


class ICType(str, Enum):
    TYPE1 = "Type1"
    TYPE2 = "Type2"
    TYPE3 = "Type3"


@dataclass
class ICTrial:
    """
    One retrieval cue and, once run, where it went.

    Attributes:
        ic_type (ICType): Exact pattern, perturbed pattern or random start.
        source_pattern (Optional[int]): Pattern index for Type1 and Type2.
        start (np.ndarray): Initial state.
        result (Optional[ConvergenceResult]): Filled in by ``run_trials``.
    """

    ic_type: ICType
    source_pattern: Optional[int]
    start: np.ndarray
    result: Optional[ConvergenceResult] = None


def generate_ic_trials(
    training_set: TrainingSet,
    cfg: NetworkConfig,
    seed: int,
    settings: Optional[MemorySettings] = None,
) -> List[ICTrial]:
    """
    Build the retrieval cues for memory labeling.

    K Type-1 cues equal to the training vectors, ``n_type2`` Type-2 cues per
    pattern perturbed componentwise by U[-r, r], and ``n_type3`` Type-3 cues
    uniform in the hypercube of half side ``type3_half_side``.

    Args:
        training_set (TrainingSet): The patterns.
        cfg (NetworkConfig): Network parameters.
        seed (int): Seed of the perturbation generator.
        settings (Optional[MemorySettings]): Counts and radii.

    Returns:
        List[ICTrial]: Type1 cues first, then Type2 grouped by pattern, then Type3.
    """
    settings = settings or MemorySettings()
    rng = make_rng(seed)
    patterns = training_set.vectors.astype(float)
    trials = [ICTrial(ICType.TYPE1, k, p.copy()) for k, p in enumerate(patterns)]
    for k, p in enumerate(patterns):
        noise = rng.uniform(
            -settings.type2_radius, settings.type2_radius, size=(settings.n_type2, cfg.N)
        )
        trials.extend(ICTrial(ICType.TYPE2, k, p + d) for d in noise)
    if settings.n_type3:
        starts = rng.uniform(
            -settings.type3_half_side, settings.type3_half_side, size=(settings.n_type3, cfg.N)
        )
        trials.extend(ICTrial(ICType.TYPE3, None, s) for s in starts)
    return trials


def _run_trial(job: Tuple[np.ndarray, NetworkConfig, np.ndarray, float, float]) -> ConvergenceResult:
    values, cfg, start, tol, t_max = job
    try:
        return converge_to_attractor(start, WeightMatrix(cfg.N, values), cfg, tol, t_max)
    except IntegrationBlowupError as e:
        logger.warning(f"Trial blew up at t'={e.t:.6g}; recorded as unresolved")
        return ConvergenceResult(Outcome.UNRESOLVED, np.array(start, dtype=float), e.t, float("inf"))


def run_trials(
    trials: List[ICTrial],
    w: WeightMatrix,
    cfg: NetworkConfig,
    settings: Optional[MemorySettings] = None,
    workers: int = 1,
) -> List[ICTrial]:
    """Run every cue against the frozen weights; results keep the trial order."""
    settings = settings or MemorySettings()
    results = map_ordered(
        _run_trial,
        [(w.values, cfg, t.start, settings.tol, settings.T_max) for t in trials],
        workers=workers,
    )
    for trial, result in zip(trials, results):
        trial.result = result
    unresolved = sum(1 for r in results if not r.converged)
    logger.info(f"Ran {len(trials)} retrieval trials, {unresolved} unresolved")
    return trials


class LabelKind(str, Enum):
    TRUE = "True"
    BLENDED = "Blended"
    SPURIOUS = "Spurious"


@dataclass
class MemoryLabel:
    """
    Memory label of one attractor.

    True when exactly one pattern is attracted, Blended for several,
    Spurious for none.
    """

    attractor_id: int
    location: np.ndarray
    attracted_patterns: FrozenSet[int]

    @property
    def kind(self) -> LabelKind:
        if not self.attracted_patterns:
            return LabelKind.SPURIOUS
        if len(self.attracted_patterns) == 1:
            return LabelKind.TRUE
        return LabelKind.BLENDED

    def __str__(self) -> str:
        if self.kind is LabelKind.SPURIOUS:
            return "Spurious"
        return f"{self.kind.value}({','.join(str(k) for k in sorted(self.attracted_patterns))})"


@dataclass
class MemoryReport:
    """
    Labels of every attractor at one snapshot plus the trials that could not be placed.

    Attributes:
        labels (List[MemoryLabel]): One per attractor, ordered by id.
        trial_targets (List[Optional[int]]): Attractor id reached by each trial.
        unresolved (List[int]): Indices of trials that did not reach a known attractor.
        failed_patterns (List[int]): Patterns whose Type-1 trial is unresolved.
    """

    labels: List[MemoryLabel]
    trial_targets: List[Optional[int]]
    unresolved: List[int] = field(default_factory=list)
    failed_patterns: List[int] = field(default_factory=list)
    t: Optional[float] = None

    def raise_for_errors(self) -> None:
        if self.failed_patterns:
            raise LabelingError(self.failed_patterns)

    def counts(self) -> Dict[str, int]:
        counts = {kind.value: 0 for kind in LabelKind}
        for label in self.labels:
            counts[label.kind.value] += 1
        return counts


def _polish(system: RetrievalSystem, x: np.ndarray) -> np.ndarray:
    result = newton_solve(system.velocity, system.jacobian, x)
    return result.x if result.converged and np.max(np.abs(result.x - x)) < 1e-3 else x


def label_memories(
    w: WeightMatrix,
    cfg: NetworkConfig,
    training_set: TrainingSet,
    trials: List[ICTrial],
    settings: Optional[MemorySettings] = None,
    fp_settings: Optional[FixedPointSettings] = None,
    seed: int = 0,
) -> MemoryReport:
    """
    Label the attractors of a snapshot as true, blended or spurious memories.

    Attractors are the stable fixed points found from the trials' polished
    endpoints and the standard seed battery. Pattern k is attracted to
    attractor a when its Type-1 trial and more than half of its Type-2
    trials reach a.

    Args:
        w (WeightMatrix): Frozen weights the trials were run against.
        cfg (NetworkConfig): Network parameters.
        training_set (TrainingSet): The patterns.
        trials (List[ICTrial]): Executed trials from ``run_trials``.
        settings (Optional[MemorySettings]): Matching tolerance.
        fp_settings (Optional[FixedPointSettings]): Fixed-point search settings.
        seed (int): Seed of the random part of the seed battery.

    Returns:
        MemoryReport: Labels plus unresolved trials; call ``raise_for_errors``
        to turn unresolved Type-1 trials into a ``LabelingError``.
    """
    settings = settings or MemorySettings()
    system = RetrievalSystem(w, cfg)
    endpoints = [
        _polish(system, t.result.location) if t.result is not None and t.result.converged else None
        for t in trials
    ]
    known: List[np.ndarray] = []
    for e in endpoints:
        if e is not None and not any(np.max(np.abs(e - k)) < settings.match_tol for k in known):
            known.append(e)
    seeds = seed_battery(cfg, seed, training_set, known, fp_settings)
    attractors = [
        p for p in find_fixed_points(w, cfg, seeds, fp_settings) if p.stability is StabilityClass.STABLE
    ]

    targets: List[Optional[int]] = []
    unresolved = []
    for i, end in enumerate(endpoints):
        target = None
        if end is not None:
            for a_id, a in enumerate(attractors):
                if np.max(np.abs(a.location - end)) < settings.match_tol:
                    target = a_id
                    break
        if target is None:
            unresolved.append(i)
        targets.append(target)

    failed = []
    attracted: Dict[int, set] = {a_id: set() for a_id in range(len(attractors))}
    for k in range(training_set.K):
        type1 = [targets[i] for i, t in enumerate(trials) if t.ic_type is ICType.TYPE1 and t.source_pattern == k]
        type2 = [targets[i] for i, t in enumerate(trials) if t.ic_type is ICType.TYPE2 and t.source_pattern == k]
        if not type1 or type1[0] is None:
            failed.append(k)
            continue
        hits = sum(1 for target in type2 if target == type1[0])
        if 2 * hits > len(type2):
            attracted[type1[0]].add(k)

    labels = [
        MemoryLabel(a_id, a.location, frozenset(attracted[a_id])) for a_id, a in enumerate(attractors)
    ]
    if unresolved:
        logger.warning(f"{len(unresolved)} trials did not reach a known attractor")
    if failed:
        logger.error(f"Type-1 trials unresolved for patterns {failed}")
    report = MemoryReport(labels, targets, unresolved, failed)
    logger.info(f"Labeled {len(labels)} attractors: {report.counts()}")
    return report


def memories_at(
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    t: float,
    seed: int,
    settings: Optional[MemorySettings] = None,
    fp_settings: Optional[FixedPointSettings] = None,
    workers: int = 1,
    training_set: Optional[TrainingSet] = None,
) -> MemoryReport:
    """Generate, run and label the cues against the weights at learning time t."""
    training_set = training_set or traj.training_set()
    if training_set is None:
        raise ConfigurationError("Trajectory carries no training set; pass one explicitly")
    w = traj.weights_at(t)
    trials = run_trials(generate_ic_trials(training_set, cfg, seed, settings), w, cfg, settings, workers)
    report = label_memories(w, cfg, training_set, trials, settings, fp_settings, seed)
    report.t = float(t)
    return report


@dataclass
class ForgettingIncident:
    """
    An attractor destroyed by a bifurcation.

    Attributes:
        t_star (float): Time of the attractor death.
        lost_label (Optional[MemoryLabel]): Label held before the death; None
            when no labeling before the event resolved every cue.
        event (BifurcationEvent): The destroying event.
        location (Optional[np.ndarray]): The dying attractor where it was last located.
    """

    t_star: float
    lost_label: Optional[MemoryLabel]
    event: BifurcationEvent
    location: Optional[np.ndarray] = None

    @property
    def labeled(self) -> bool:
        return self.lost_label is not None

    @property
    def label_text(self) -> str:
        return str(self.lost_label) if self.lost_label is not None else "Unlabeled"


@dataclass
class ForgettingLog:
    """
    Attractor deaths over learning time. Iterating yields the forgetting
    incidents, unlabeled ones included; deaths of spurious attractors are
    kept apart as prunings.
    """

    incidents: List[ForgettingIncident] = field(default_factory=list)
    prunings: List[ForgettingIncident] = field(default_factory=list)

    def __iter__(self) -> Iterator[ForgettingIncident]:
        return iter(self.incidents)

    def __len__(self) -> int:
        return len(self.incidents)

    @property
    def unlabeled(self) -> List[ForgettingIncident]:
        return [r for r in self.incidents if not r.labeled]

    def records(self) -> List[Tuple[ForgettingIncident, bool]]:
        """All deaths as (record, is_pruning), ordered by t_star."""
        merged = [(r, False) for r in self.incidents] + [(r, True) for r in self.prunings]
        return sorted(merged, key=lambda item: item[0].t_star)


def _follow(
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    location: np.ndarray,
    t_from: float,
    t_to: float,
    settings: FixedPointSettings,
    min_step: float = 1e-6,
) -> Optional[np.ndarray]:
    """
    Newton continuation of an attractor from t_from to t_to.

    Steps start at one sample and are halved whenever Newton fails or lands
    on a point that is not stable; None once a step drops below ``min_step``.
    """
    x = np.asarray(location, dtype=float)
    t, step = t_from, traj.sample_dt
    direction = 1.0 if t_to >= t_from else -1.0
    while abs(t_to - t) > 1e-12:
        t_next = t + direction * min(step, abs(t_to - t))
        system = RetrievalSystem(traj.weights_at(t_next), cfg)
        result = newton_solve(
            system.velocity,
            system.jacobian,
            x,
            max_iter=settings.newton_max_iter,
            tol=settings.newton_tol,
            accept_tol=settings.accept_tol,
        )
        stable = (
            result.converged
            and stability_of(system.eigenvalues(result.x), settings.zero_threshold)[0] is StabilityClass.STABLE
        )
        if stable:
            x, t = result.x, t_next
            step = min(traj.sample_dt, 2.0 * step)
        else:
            step *= 0.5
            if step < min_step:
                return None
    return x


def _label_times(t_star: float, floor: float, lead: float, max_lead: float) -> List[float]:
    """t_star - lead, doubling lead up to max_lead; never before floor."""
    times = []
    while lead <= max_lead:
        if t_star - lead <= floor:
            if floor < t_star:
                times.append(floor)
            break
        times.append(t_star - lead)
        lead *= 2.0
    return times


def forgetting_log(
    traj: WeightTrajectory,
    cfg: NetworkConfig,
    training_set: TrainingSet,
    events: List[BifurcationEvent],
    seed: int = 0,
    settings: Optional[MemorySettings] = None,
    fp_settings: Optional[FixedPointSettings] = None,
    lead: Optional[float] = None,
    workers: int = 1,
) -> ForgettingLog:
    """
    Which memories each attractor-destroying event takes away.

    For every saddle-node death and reverse pitchfork the stable participants
    are followed back from the event by Newton continuation and matched to
    the attractors labeled from Type-1 and Type-2 cues at ``t_star - lead``.
    Near the event the cues slow down and fail to resolve, so the lead is
    doubled until every cue resolves, up to ``forgetting_max_lead``
    and never back past the previous event. A death that no labeling can
    explain is kept as an unlabeled incident.

    Args:
        traj (WeightTrajectory): The learning run.
        cfg (NetworkConfig): Network parameters.
        training_set (TrainingSet): The patterns.
        events (List[BifurcationEvent]): Output of ``detect_bifurcations`` on ``traj``.
        seed (int): Seed of the cue perturbations.
        settings (Optional[MemorySettings]): Labeling settings; Type-3 cues are skipped.
        fp_settings (Optional[FixedPointSettings]): Fixed-point search settings.
        lead (Optional[float]): First lead tried; ``forgetting_lead`` by default.
        workers (int): Processes for the retrieval trials.

    Returns:
        ForgettingLog: Incidents for true, blended or unlabeled attractors,
        prunings for spurious ones.
    """
    settings = (settings or MemorySettings()).model_copy(update={"n_type3": 0})
    fp_settings = fp_settings or FixedPointSettings()
    lead = settings.forgetting_lead if lead is None else lead
    log = ForgettingLog()
    t_first = traj.span[0]
    reports: Dict[float, MemoryReport] = {}

    def report_at(t: float) -> MemoryReport:
        if t not in reports:
            reports[t] = memories_at(traj, cfg, t, seed, settings, fp_settings, workers, training_set)
        return reports[t]

    for event in events:
        if not event.kind.destroys_attractors:
            continue
        dying = event.stable_participants()
        if not dying:
            logger.debug(f"{event.kind.value} at t={event.t_star:.6f} destroys no attractor")
            continue
        earlier = [e.t_star for e in events if e.t_star < event.t_star - 2.0 * fp_settings.bisection_width]
        floor = 0.5 * (max(earlier) + event.t_star) if earlier else t_first
        t_from = event.observed_at if event.observed_at is not None else event.t_star

        labels: Optional[List[MemoryLabel]] = None
        for t_before in _label_times(event.t_star, floor, lead, settings.forgetting_max_lead):
            report = report_at(t_before)
            if report.unresolved:
                logger.info(f"Labels at t={t_before:.6f} unusable, {len(report.unresolved)} cues unresolved")
                continue
            found = []
            for location in dying:
                x = _follow(traj, cfg, location, t_from, t_before, fp_settings)
                match = None if x is None else next(
                    (label for label in report.labels if np.max(np.abs(label.location - x)) < settings.match_tol),
                    None,
                )
                if match is None:
                    break
                found.append(match)
            if len(found) == len(dying):
                labels = found
                break

        if labels is None:
            logger.error(f"Attractors destroyed at t={event.t_star:.6f} could not be labeled")
            for location in dying:
                log.incidents.append(ForgettingIncident(event.t_star, None, event, location))
            continue
        seen = set()
        for location, label in zip(dying, labels):
            if label.attractor_id in seen:
                continue
            seen.add(label.attractor_id)
            record = ForgettingIncident(event.t_star, label, event, location)
            if label.kind is LabelKind.SPURIOUS:
                log.prunings.append(record)
                logger.info(f"Spurious attractor pruned at t={event.t_star:.6f}")
            else:
                log.incidents.append(record)
                logger.info(f"Forgetting at t={event.t_star:.6f}: lost {label}")
    return log


def write_memory_csv(report: MemoryReport, path: str) -> None:
    """Rows of (attractor_id, location, label, patterns); coordinates space-separated."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attractor_id", "location", "label", "patterns"])
        for label in report.labels:
            writer.writerow(
                [
                    label.attractor_id,
                    " ".join(f"{v:.12g}" for v in label.location),
                    label.kind.value,
                    " ".join(str(k) for k in sorted(label.attracted_patterns)),
                ]
            )
    logger.info(f"Wrote memory report with {len(report.labels)} attractors to {path}")


def write_forgetting_csv(log: ForgettingLog, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_star", "kind", "prior_label", "pruning"])
        for record, pruning in log.records():
            writer.writerow([f"{record.t_star:.10g}", record.event.kind.value, record.label_text, int(pruning)])
