# python imports
import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

# third party imports
import numpy as np
from scipy.integrate import solve_ivp

# local imports
from .config import IntegratorSettings, NetworkConfig, make_rng
from .errors import ConfigurationError, DomainError, IntegrationBlowupError
from .model import (
    RetrievalSystem,
    StimulusSchedule,
    SystemState,
    TrainingSet,
    WeightMatrix,
    activation,
    energy,
    learning_field,
)
from .solvers import newton_solve

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"HBLTRAJ\x01"
SNAPSHOT_VERSION = 1
# magic, version, N, samples, sample_dt, training seed, IC seed, flags, metadata length
SNAPSHOT_HEADER = struct.Struct("<8sIIQdQQII")
UNKNOWN_SEED = 2**64 - 1
FLAG_HAS_X = 1


@dataclass
class InitialConditions:
    """
    Start of a learning run: x0 uniform in [-1, 1]^N, weights uniform in [-0.01, 0.01].
    """

    x0: np.ndarray
    w0: WeightMatrix
    seed: Optional[int] = None


def make_initial_conditions(cfg: NetworkConfig, seed: int) -> InitialConditions:
    """
    Draw the initial neuron states and weights of a learning run.

    Args:
        cfg (NetworkConfig): Network parameters.
        seed (int): Seed of the Philox generator.

    Returns:
        InitialConditions: Deterministic in ``seed``.
    """
    rng = make_rng(seed)
    x0 = rng.uniform(-1.0, 1.0, size=cfg.N)
    w0 = WeightMatrix(cfg.N, rng.uniform(-0.01, 0.01, size=cfg.M))
    return InitialConditions(x0=x0, w0=w0, seed=int(seed))


class Outcome(str, Enum):
    CONVERGED = "converged"
    UNRESOLVED = "unresolved"


@dataclass
class ConvergenceResult:
    """
    Result of a retrieval run.

    Attributes:
        outcome (Outcome): Converged or Unresolved.
        location (np.ndarray): Final state (the fixed point when converged).
        elapsed (float): Retrieval time t' at termination.
        final_speed (float): ||u||_inf at termination.
    """

    outcome: Outcome
    location: np.ndarray
    elapsed: float
    final_speed: float

    @property
    def converged(self) -> bool:
        return self.outcome is Outcome.CONVERGED


def _check_sampling(cfg: NetworkConfig, sample_dt: float, settings: IntegratorSettings) -> None:
    def divides(step: float, span: float) -> bool:
        ratio = span / step
        return abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio)

    if not sample_dt > 0:
        raise ConfigurationError(f"sample_dt must be positive, got {sample_dt}")
    if not divides(sample_dt, cfg.t_s):
        raise ConfigurationError(f"sample_dt={sample_dt} must divide t_s={cfg.t_s}")
    if not divides(sample_dt, cfg.T_train):
        raise ConfigurationError(f"sample_dt={sample_dt} must divide T_train={cfg.T_train}")
    if settings.method == "RK4" and not divides(settings.fixed_dt, sample_dt):
        raise ConfigurationError(
            f"fixed_dt={settings.fixed_dt} must divide sample_dt={sample_dt}"
        )


def _rk4_step(fun, y: np.ndarray, h: float) -> np.ndarray:
    k1 = fun(y)
    k2 = fun(y + 0.5 * h * k1)
    k3 = fun(y + 0.5 * h * k2)
    k4 = fun(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(
    y: np.ndarray,
    a: float,
    b: float,
    inputs: np.ndarray,
    cfg: NetworkConfig,
    settings: IntegratorSettings,
    t_eval: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate the learning system over [a, b] with a constant input vector.

    Returns:
        Tuple[np.ndarray, np.ndarray]: The state at ``b`` and the states at
        ``t_eval`` (one row per requested time; empty when ``t_eval`` is None).

    Raises:
        IntegrationBlowupError: If the state stops being finite.
    """
    n = cfg.N

    def fun(state: np.ndarray) -> np.ndarray:
        dx, dw = learning_field(state[:n], state[n:], inputs, cfg)
        return np.concatenate([dx, dw])

    if b <= a:
        return y.copy(), np.empty((0, y.size))

    if settings.method == "RK4":
        steps = max(1, int(round((b - a) / settings.fixed_dt)))
        h = (b - a) / steps
        wanted = {} if t_eval is None else {
            int(round((te - a) / h)): k for k, te in enumerate(t_eval)
        }
        out = np.empty((0 if t_eval is None else len(t_eval), y.size))
        state = y.copy()
        for step in range(1, steps + 1):
            state = _rk4_step(fun, state, h)
            if not np.all(np.isfinite(state)):
                logger.error(f"RK4 state became non-finite at t={a + step * h:.6g}")
                raise IntegrationBlowupError(a + step * h)
            if step in wanted:
                out[wanted[step]] = state
        return state, out

    sol = solve_ivp(
        lambda t, state: fun(state),
        (a, b),
        y,
        method="RK45",
        t_eval=t_eval if t_eval is not None else [b],
        rtol=settings.rtol,
        atol=settings.atol,
    )
    if sol.status == -1 or not np.all(np.isfinite(sol.y)):
        t_fail = float(sol.t[-1]) if sol.t.size else a
        logger.error(f"RK45 failed on [{a:.6g}, {b:.6g}]: {sol.message}")
        raise IntegrationBlowupError(t_fail)
    states = sol.y.T
    return states[-1].copy(), (states if t_eval is not None else np.empty((0, y.size)))


def integrate_span(
    cfg: NetworkConfig,
    schedule: StimulusSchedule,
    y: np.ndarray,
    a: float,
    b: float,
    settings: IntegratorSettings,
) -> np.ndarray:
    """
    Advance the flat learning state from ``a`` to ``b``, restarting at every
    stimulus switch so no step straddles a discontinuity of I(t).
    """
    knots = [a, *schedule.switch_times(a, b), b]
    state = np.array(y, dtype=float)
    for left, right in zip(knots[:-1], knots[1:]):
        state, _ = _advance(state, left, right, schedule.vector(schedule.index_at(left)), cfg, settings)
    return state


class WeightTrajectory:
    """
    Sampled learning run: weights (and neuron states) at evenly spaced times.

    Args:
        sample_times (np.ndarray): Strictly increasing time stamps.
        weights (np.ndarray): One row of M weights per stamp.
        cfg (NetworkConfig): Parameters of the run.
        x_samples (Optional[np.ndarray]): One row of N neuron states per stamp.
        provenance (Optional[Dict]): Seeds, integrator settings and training vectors.
    """

    def __init__(
        self,
        sample_times: np.ndarray,
        weights: np.ndarray,
        cfg: NetworkConfig,
        x_samples: Optional[np.ndarray] = None,
        provenance: Optional[Dict[str, Any]] = None,
    ):
        self.sample_times = np.asarray(sample_times, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.cfg = cfg
        self.x_samples = None if x_samples is None else np.asarray(x_samples, dtype=float)
        self.provenance: Dict[str, Any] = dict(provenance or {})

        if self.weights.shape != (self.sample_times.size, cfg.M):
            raise ConfigurationError(
                f"Expected weights of shape {(self.sample_times.size, cfg.M)}, got {self.weights.shape}"
            )
        if self.sample_times.size > 1 and not np.all(np.diff(self.sample_times) > 0):
            raise ConfigurationError("Sample times must be strictly increasing")
        if self.x_samples is not None and self.x_samples.shape != (self.sample_times.size, cfg.N):
            raise ConfigurationError("x_samples shape does not match the sample count")

    def __len__(self) -> int:
        return self.sample_times.size

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.sample_times[0]), float(self.sample_times[-1])

    @property
    def sample_dt(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(self.sample_times[1] - self.sample_times[0])

    def snapshot(self, index: int) -> WeightMatrix:
        return WeightMatrix(self.cfg.N, self.weights[index].copy())

    def index_of(self, t: float) -> int:
        """Index of the sample nearest to t."""
        return int(np.argmin(np.abs(self.sample_times - t)))

    def _check_time(self, t: float) -> None:
        t0, t1 = self.span
        if not (t0 - 1e-12 <= t <= t1 + 1e-12):
            raise DomainError(f"t={t} outside trajectory span [{t0}, {t1}]")

    def weights_at(self, t: float) -> WeightMatrix:
        """Weights at t by linear interpolation between neighbouring samples."""
        self._check_time(t)
        k = int(np.searchsorted(self.sample_times, t, side="right")) - 1
        k = min(max(k, 0), len(self) - 2) if len(self) > 1 else 0
        if len(self) == 1:
            return self.snapshot(0)
        t0, t1 = self.sample_times[k], self.sample_times[k + 1]
        theta = (t - t0) / (t1 - t0)
        values = (1.0 - theta) * self.weights[k] + theta * self.weights[k + 1]
        return WeightMatrix(self.cfg.N, values)

    def training_set(self) -> Optional[TrainingSet]:
        vectors = self.provenance.get("training_vectors")
        if vectors is None:
            return None
        return TrainingSet(vectors=np.array(vectors), seed=self.provenance.get("training_seed"))

    def schedule(self) -> Optional[StimulusSchedule]:
        training_set = self.training_set()
        return None if training_set is None else StimulusSchedule(training_set, self.cfg.t_s)

    def integrator_settings(self) -> IntegratorSettings:
        return IntegratorSettings(**self.provenance.get("integrator", {}))

    def state_at(self, t: float) -> SystemState:
        """
        Learning state at t, re-integrated from the last sample at or before t.

        Falls back to linear interpolation when neuron states or the stimulus
        were not recorded.
        """
        self._check_time(t)
        k = max(int(np.searchsorted(self.sample_times, t, side="right")) - 1, 0)
        schedule = self.schedule()
        t_k = float(self.sample_times[k])
        if self.x_samples is None or schedule is None:
            x = np.zeros(self.cfg.N) if self.x_samples is None else self.x_samples[k]
            return SystemState(x=x, w=self.weights_at(t), t=t)
        y0 = np.concatenate([self.x_samples[k], self.weights[k]])
        if t <= t_k:
            y = y0
        else:
            y = integrate_span(self.cfg, schedule, y0, t_k, t, self.integrator_settings())
        return SystemState(x=y[: self.cfg.N], w=WeightMatrix(self.cfg.N, y[self.cfg.N :]), t=t)

    def select(self, t0: float, t1: float) -> "WeightTrajectory":
        """Sub-trajectory with samples in [t0, t1]."""
        mask = (self.sample_times >= t0 - 1e-12) & (self.sample_times <= t1 + 1e-12)
        if not np.any(mask):
            raise DomainError(f"No samples in [{t0}, {t1}]")
        return WeightTrajectory(
            self.sample_times[mask],
            self.weights[mask],
            self.cfg,
            None if self.x_samples is None else self.x_samples[mask],
            self.provenance,
        )

    def summary_rows(self) -> List[Tuple[float, float, float]]:
        """(t, max|w|, mean|w|) per sample."""
        magnitudes = np.abs(self.weights)
        return list(
            zip(
                self.sample_times.tolist(),
                magnitudes.max(axis=1).tolist(),
                magnitudes.mean(axis=1).tolist(),
            )
        )

    def save(self, path: str) -> None:
        """
        Write the binary snapshot file.

        Layout (little-endian): the 56-byte header ``SNAPSHOT_HEADER`` (magic
        ``HBLTRAJ\\x01``, u32 version, u32 N, u64 sample count, f64 sample_dt,
        u64 training seed, u64 IC seed, u32 flags, u32 metadata length), the
        UTF-8 JSON metadata (config, integrator settings, training vectors),
        then f64 sample times, f64 weights sample-major (S x M) and, when flag
        bit 0 is set, f64 neuron states (S x N). Unknown seeds are 2**64 - 1.
        """
        metadata = json.dumps(
            {"config": self.cfg.to_dict(), "provenance": self.provenance},
            sort_keys=True,
        ).encode("utf-8")
        training_seed = self.provenance.get("training_seed")
        ic_seed = self.provenance.get("ic_seed")
        header = SNAPSHOT_HEADER.pack(
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            self.cfg.N,
            len(self),
            self.sample_dt,
            UNKNOWN_SEED if training_seed is None else int(training_seed),
            UNKNOWN_SEED if ic_seed is None else int(ic_seed),
            FLAG_HAS_X if self.x_samples is not None else 0,
            len(metadata),
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(metadata)
            fh.write(self.sample_times.astype("<f8").tobytes())
            fh.write(self.weights.astype("<f8").tobytes())
            if self.x_samples is not None:
                fh.write(self.x_samples.astype("<f8").tobytes())
        logger.info(f"Wrote {len(self)} trajectory samples to {path}")

    @classmethod
    def load(cls, path: str) -> "WeightTrajectory":
        """
        Read a snapshot file written by ``save``.

        Raises:
            ConfigurationError: If the file is missing, truncated or not a snapshot.
        """
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except OSError as e:
            raise ConfigurationError(f"Cannot read trajectory {path}: {e}") from e
        if len(blob) < SNAPSHOT_HEADER.size:
            raise ConfigurationError(f"{path} is too short to be a trajectory snapshot")
        magic, version, n, samples, _, _, _, flags, meta_len = SNAPSHOT_HEADER.unpack_from(blob)
        if magic != SNAPSHOT_MAGIC or version != SNAPSHOT_VERSION:
            raise ConfigurationError(f"{path} is not a version-{SNAPSHOT_VERSION} snapshot")
        offset = SNAPSHOT_HEADER.size
        metadata = json.loads(blob[offset : offset + meta_len].decode("utf-8"))
        offset += meta_len
        cfg = NetworkConfig.from_dict(metadata["config"])
        m = n * (n - 1) // 2
        expected = 8 * (samples * (1 + m + (n if flags & FLAG_HAS_X else 0)))
        if len(blob) - offset != expected:
            raise ConfigurationError(f"{path} is truncated or corrupt")

        def take(count: int) -> np.ndarray:
            nonlocal offset
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            offset += 8 * count
            return data.astype(float)

        times = take(samples)
        weights = take(samples * m).reshape(samples, m)
        x_samples = take(samples * n).reshape(samples, n) if flags & FLAG_HAS_X else None
        return cls(times, weights, cfg, x_samples, metadata.get("provenance", {}))

    def to_csv(self, path: str, pairs: Optional[Sequence[Tuple[int, int]]] = None) -> None:
        """
        Export (t, w_ij ...) rows for plotting; all pairs unless ``pairs`` is given.
        """
        template = WeightMatrix(self.cfg.N)
        if pairs is None:
            pairs = list(template.pairs())
        columns = [template.pair_index(i, j) for i, j in pairs]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", *[f"w_{i}_{j}" for i, j in pairs]])
            for t, row in zip(self.sample_times, self.weights[:, columns]):
                writer.writerow([f"{t:.10g}", *[f"{v:.12g}" for v in row]])
        logger.info(f"Wrote trajectory CSV with {len(pairs)} weights to {path}")

    def write_summary_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "max_abs_w", "mean_abs_w"])
            for t, peak, mean in self.summary_rows():
                writer.writerow([f"{t:.10g}", f"{peak:.12g}", f"{mean:.12g}"])


def integrate_learning(
    cfg: NetworkConfig,
    schedule: StimulusSchedule,
    ics: InitialConditions,
    sample_dt: Optional[float] = None,
    settings: Optional[IntegratorSettings] = None,
) -> WeightTrajectory:
    """
    Integrate the learning system over [0, T_train].

    Every exposure window [m t_s, (m+1) t_s) is integrated separately with
    its own constant input vector, so the integrator restarts exactly at
    each stimulus switch.

    Args:
        cfg (NetworkConfig): Network parameters.
        schedule (StimulusSchedule): Training stimulus.
        ics (InitialConditions): Starting neurons and weights.
        sample_dt (Optional[float]): Sampling interval; must divide t_s and T_train.
        settings (Optional[IntegratorSettings]): RK45 tolerances or RK4 step.

    Returns:
        WeightTrajectory: Weights and neuron states at every multiple of sample_dt.

    Raises:
        ConfigurationError: On dimension mismatch or incompatible sampling.
        IntegrationBlowupError: If the state stops being finite.
    """
    settings = settings or IntegratorSettings()
    sample_dt = float(sample_dt or settings.sample_dt)
    if schedule.N != cfg.N or ics.w0.n != cfg.N or ics.x0.size != cfg.N:
        raise ConfigurationError("Stimulus, initial conditions and config disagree on N")
    _check_sampling(cfg, sample_dt, settings)

    n_samples = int(round(cfg.T_train / sample_dt))
    per_window = int(round(cfg.t_s / sample_dt))
    times = np.arange(n_samples + 1) * sample_dt
    states = np.empty((n_samples + 1, cfg.N + cfg.M))
    y = np.concatenate([ics.x0, ics.w0.values])
    states[0] = y

    logger.info(
        f"Integrating learning: N={cfg.N}, T_train={cfg.T_train}, method={settings.method}, "
        f"{n_samples} samples"
    )
    index, window = 0, 0
    while index < n_samples:
        stop = min(index + per_window, n_samples)
        a = window * cfg.t_s
        b = (window + 1) * cfg.t_s if stop == index + per_window else cfg.T_train
        t_eval = np.clip(times[index + 1 : stop + 1], a, b)
        t_eval[-1] = b
        y, block = _advance(y, a, b, schedule.vector(window), cfg, settings, t_eval)
        states[index + 1 : stop + 1] = block
        index, window = stop, window + 1
        if window % 50 == 0:
            logger.debug(f"Integrated {window} exposure windows (t={b:.6g})")

    provenance = {
        "training_seed": schedule.training_set.seed,
        "ic_seed": ics.seed,
        "integrator": settings.model_dump(),
        "sample_dt": sample_dt,
        "training_vectors": schedule.training_set.vectors.tolist(),
    }
    return WeightTrajectory(times, states[:, cfg.N :], cfg, states[:, : cfg.N], provenance)


def oscillation_period(traj: WeightTrajectory, window: Optional[Tuple[float, float]] = None) -> float:
    """
    Late-window oscillation period of the weights.

    Each weight series is detrended and normalised; the mean autocorrelation
    across weights is searched for its highest peak at lags between t_s and
    1.5 stimulus periods.

    Args:
        traj (WeightTrajectory): The learning run.
        window (Optional[Tuple[float, float]]): Time window; defaults to the last third.

    Returns:
        float: The lag (time units) of the autocorrelation peak.
    """
    t0, t1 = traj.span
    if window is None:
        window = (t0 + 2.0 * (t1 - t0) / 3.0, t1)
    part = traj.select(*window)
    series = part.weights - part.weights.mean(axis=0)
    scale = series.std(axis=0)
    series = series[:, scale > 0] / scale[scale > 0]
    if series.shape[1] == 0:
        raise DomainError("Weights are constant over the window")
    length = series.shape[0]
    spectrum = np.fft.rfft(series, n=2 * length, axis=0)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), axis=0)[:length].mean(axis=1)
    acf /= np.arange(length, 0, -1)
    dt = part.sample_dt
    k = traj.training_set().K if traj.training_set() is not None else 1
    lo = max(1, int(round(traj.cfg.t_s / dt)))
    hi = min(length - 1, int(round(1.5 * k * traj.cfg.t_s / dt)))
    if hi <= lo:
        raise DomainError("Window too short to resolve the oscillation period")
    lag = lo + int(np.argmax(acf[lo : hi + 1]))
    return lag * dt


def converge_to_attractor(
    x0: np.ndarray,
    w: WeightMatrix,
    cfg: NetworkConfig,
    tol: float = 1e-8,
    T_max: float = 500.0,
    system: Optional[RetrievalSystem] = None,
) -> ConvergenceResult:
    """
    Run the retrieval system from x0 until it settles.

    Integration stops when ||u(x)||_inf < tol (Converged) or once the
    retrieval time exceeds T_max (Unresolved).

    Args:
        x0 (np.ndarray): Cue state.
        w (WeightMatrix): Frozen weights.
        cfg (NetworkConfig): Network parameters.
        tol (float): Speed threshold.
        T_max (float): Retrieval time budget.
        system (Optional[RetrievalSystem]): Prebuilt system for ``w`` to reuse.

    Returns:
        ConvergenceResult: The outcome.

    Raises:
        DomainError: If tol or T_max is not positive.
        IntegrationBlowupError: If the state stops being finite.
    """
    if not tol > 0 or not T_max > 0:
        raise DomainError(f"tol and T_max must be positive, got {tol}, {T_max}")
    system = system or RetrievalSystem(w, cfg)
    x = np.array(x0, dtype=float)
    t = 0.0
    speed = system.speed(x)

    def settled(_t: float, state: np.ndarray) -> float:
        return float(np.max(np.abs(system.velocity(state)))) - 0.5 * tol

    settled.terminal = True
    settled.direction = -1

    for _ in range(50):
        if not np.isfinite(speed):
            logger.error(f"Retrieval state became non-finite at t'={t:.6g}")
            raise IntegrationBlowupError(t)
        if speed < tol:
            return ConvergenceResult(Outcome.CONVERGED, x, t, speed)
        if t >= T_max:
            break
        sol = solve_ivp(
            system.field,
            (t, T_max),
            x,
            method="RK45",
            rtol=1e-10,
            atol=1e-12,
            events=settled,
        )
        if sol.status == -1 or not np.all(np.isfinite(sol.y)):
            raise IntegrationBlowupError(float(sol.t[-1]) if sol.t.size else t)
        if sol.status == 1 and sol.t_events[0].size:
            x, t = sol.y_events[0][-1].copy(), float(sol.t_events[0][-1])
        else:
            x, t = sol.y[:, -1].copy(), float(sol.t[-1])
        speed = system.speed(x)

    if speed < tol:
        return ConvergenceResult(Outcome.CONVERGED, x, t, speed)
    return ConvergenceResult(Outcome.UNRESOLVED, x, t, speed)


def stable_step(system: RetrievalSystem, cap: float = 0.1) -> float:
    """RK4 step inside the stability region for every Jacobian of the system."""
    spread = float(np.max(np.abs(np.linalg.eigvalsh(system.coupling))))
    bound = 1.0 + system.cfg.lam * spread
    return min(cap, 2.0 / bound)


@dataclass
class _AttractorCache:
    """Polished stable points met so far in a batch."""

    points: List[np.ndarray] = field(default_factory=list)

    def near(self, x: np.ndarray, radius: float) -> Optional[np.ndarray]:
        for p in self.points:
            if np.max(np.abs(p - x)) < radius:
                return p
        return None


def converge_many(
    starts: np.ndarray,
    w: WeightMatrix,
    cfg: NetworkConfig,
    tol: float = 1e-8,
    T_max: float = 500.0,
    handoff: float = 1e-4,
    cache_radius: float = 1e-3,
) -> List[ConvergenceResult]:
    """
    Batched form of ``converge_to_attractor`` for grids of cues.

    All rows advance together with classical RK4 at a step inside the
    stability region. A row whose speed drops below ``handoff`` is polished
    by Newton; the polished point is accepted when it is a stable node close
    to the row, otherwise the row keeps integrating until its speed is below
    ``tol``.

    Args:
        starts (np.ndarray): Cues, one per row.
        w (WeightMatrix): Frozen weights.
        cfg (NetworkConfig): Network parameters.
        tol (float): Speed threshold for convergence without polishing.
        T_max (float): Retrieval time budget.
        handoff (float): Speed below which Newton polishing is attempted.
        cache_radius (float): Rows this close to an already polished attractor adopt it.

    Returns:
        List[ConvergenceResult]: One result per row, in input order.
    """
    system = RetrievalSystem(w, cfg)
    states = np.array(starts, dtype=float).reshape(-1, cfg.N)
    count = states.shape[0]
    results: List[Optional[ConvergenceResult]] = [None] * count
    retry_below = np.full(count, handoff)
    cache = _AttractorCache()
    dt = stable_step(system)
    active = np.arange(count)
    t = 0.0

    while active.size:
        velocity = system.velocity(states[active])
        speed = np.max(np.abs(velocity), axis=1)
        keep = np.ones(active.size, dtype=bool)

        for pos in np.flatnonzero(~np.isfinite(speed) | (speed < retry_below[active])):
            idx = active[pos]
            x = states[idx]
            if not np.isfinite(speed[pos]):
                logger.warning(f"Row {idx} became non-finite at t'={t:.6g}")
                results[idx] = ConvergenceResult(Outcome.UNRESOLVED, x.copy(), t, float("inf"))
                keep[pos] = False
                continue
            known = cache.near(x, cache_radius)
            if known is not None:
                results[idx] = ConvergenceResult(Outcome.CONVERGED, known.copy(), t, 0.0)
                keep[pos] = False
                continue
            polished = newton_solve(system.velocity, system.jacobian, x)
            if (
                polished.converged
                and np.max(np.abs(polished.x - x)) < 0.5
                and system.eigenvalues(polished.x)[0] < 0
            ):
                cache.points.append(polished.x)
                results[idx] = ConvergenceResult(
                    Outcome.CONVERGED, polished.x, t, polished.residual
                )
                keep[pos] = False
            elif speed[pos] < tol:
                results[idx] = ConvergenceResult(Outcome.CONVERGED, x.copy(), t, float(speed[pos]))
                keep[pos] = False
            else:
                retry_below[idx] = speed[pos] / 10.0

        active = active[keep]
        if not active.size or t >= T_max:
            break
        states[active] = _rk4_step(system.velocity, states[active], dt)
        t += dt

    for idx in active:
        speed = system.speed(states[idx])
        results[idx] = ConvergenceResult(Outcome.UNRESOLVED, states[idx].copy(), t, speed)
    return results


def energy_trace(
    x0: np.ndarray,
    w: WeightMatrix,
    cfg: NetworkConfig,
    t_eval: Sequence[float],
) -> np.ndarray:
    """
    Diagnostic energy V (zero input) along a retrieval trajectory from x0.

    No monotonicity is implied at finite steepness.
    """
    system = RetrievalSystem(w, cfg)
    t_eval = np.asarray(t_eval, dtype=float)
    sol = solve_ivp(
        system.field, (0.0, float(t_eval[-1])), np.asarray(x0, dtype=float),
        t_eval=t_eval, rtol=1e-9, atol=1e-12,
    )
    zeros = np.zeros(cfg.N)
    return np.array([energy(x, w, zeros, cfg) for x in sol.y.T])
