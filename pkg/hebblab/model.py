# python imports
import csv
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator, Optional, Tuple, Union

# third party imports
import numpy as np
from scipy import linalg

# local imports
from .config import NetworkConfig, make_rng
from .errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, list, tuple]


@lru_cache(maxsize=None)
def pair_indices(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the strict upper triangle, in storage order."""
    rows, cols = np.triu_indices(n, 1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def activation(x, lam: float):
    """
    Graded neuron response F(x) = (2/pi) * arctan(lam * pi * x / 2).

    Works elementwise on arrays; odd, strictly increasing, range (-1, 1).
    """
    return (2.0 / np.pi) * np.arctan(lam * np.pi * np.asarray(x, dtype=float) / 2.0)


def activation_deriv(x, lam: float):
    """F'(x) = lam / (1 + (lam * pi * x / 2)^2); even, positive, peak lam at 0."""
    z = lam * np.pi * np.asarray(x, dtype=float) / 2.0
    return lam / (1.0 + z * z)


def activation_second_deriv(x, lam: float):
    z = lam * np.pi * np.asarray(x, dtype=float) / 2.0
    return -(lam ** 2) * np.pi * z / (1.0 + z * z) ** 2


class WeightMatrix:
    """
    Symmetric, zero-diagonal coupling matrix stored once per unordered pair.

    Entries live in a single array of length M = N(N-1)/2 in row-major order
    of the strict upper triangle, the same order as ``np.triu_indices(N, 1)``.
    Reading (i, j) and (j, i) hits the same slot; reading (i, i) returns 0.
    """

    def __init__(self, n: int, values: Optional[ArrayLike] = None):
        if n < 2:
            raise ConfigurationError(f"WeightMatrix needs n >= 2, got {n}")
        self.n = int(n)
        m = self.n * (self.n - 1) // 2
        if values is None:
            self.values = np.zeros(m)
        else:
            self.values = np.array(values, dtype=float).reshape(-1)
            if self.values.size != m:
                raise ConfigurationError(
                    f"Expected {m} weights for n={n}, got {self.values.size}"
                )

    @classmethod
    def zeros(cls, n: int) -> "WeightMatrix":
        return cls(n)

    @classmethod
    def from_dense(cls, matrix: ArrayLike, atol: float = 1e-12) -> "WeightMatrix":
        """
        Build from a dense matrix, which must be symmetric with a zero diagonal.

        Raises:
            ConfigurationError: If the matrix is not square, symmetric, or has a nonzero diagonal.
        """
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigurationError(f"Expected a square matrix, got {matrix.shape}")
        if not np.allclose(matrix, matrix.T, atol=atol, rtol=0.0):
            raise ConfigurationError("Weight matrix is not symmetric")
        if np.any(np.abs(np.diag(matrix)) > atol):
            raise ConfigurationError("Weight matrix has self-connections")
        n = matrix.shape[0]
        return cls(n, matrix[np.triu_indices(n, 1)])

    @property
    def M(self) -> int:
        return self.values.size

    def pair_index(self, i: int, j: int) -> int:
        """Slot of the unordered pair (i, j); i and j must differ."""
        if i == j:
            raise DomainError(f"Diagonal entry ({i}, {i}) has no storage slot")
        if i > j:
            i, j = j, i
        if i < 0 or j >= self.n:
            raise DomainError(f"Pair ({i}, {j}) outside a {self.n}-neuron network")
        return i * self.n - i * (i + 1) // 2 + (j - i - 1)

    def __getitem__(self, key: Tuple[int, int]) -> float:
        i, j = key
        if i == j:
            if not 0 <= i < self.n:
                raise DomainError(f"Index {i} outside a {self.n}-neuron network")
            return 0.0
        return float(self.values[self.pair_index(i, j)])

    def __setitem__(self, key: Tuple[int, int], value: float) -> None:
        i, j = key
        self.values[self.pair_index(i, j)] = value

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"WeightMatrix(n={self.n}, max|w|={self.max_abs():.4g})"

    def copy(self) -> "WeightMatrix":
        return WeightMatrix(self.n, self.values.copy())

    def pairs(self) -> Iterator[Tuple[int, int]]:
        rows, cols = pair_indices(self.n)
        for i, j in zip(rows, cols):
            yield int(i), int(j)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.M else 0.0

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        rows, cols = pair_indices(self.n)
        dense[rows, cols] = self.values
        dense[cols, rows] = self.values
        return dense

    def activated(self, lam: float) -> np.ndarray:
        """Dense F(W); the diagonal stays zero because F(0) = 0."""
        return activation(self.to_dense(), lam)


@dataclass
class TrainingSet:
    """
    K pattern vectors with entries in {+1, -1}, regenerable from ``seed``.
    """

    vectors: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.int8)
        if self.vectors.ndim != 2:
            raise ConfigurationError("Training vectors must form a K x N array")
        if not np.all(np.abs(self.vectors) == 1):
            raise ConfigurationError("Training vectors must contain only +1 and -1")

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def N(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def generate(cls, n: int, k: int, seed: int) -> "TrainingSet":
        """
        Draw K independent patterns, each component +1 or -1 with probability 1/2.

        Args:
            n (int): Pattern dimension.
            k (int): Number of patterns.
            seed (int): Seed of the Philox generator.

        Returns:
            TrainingSet: The generated set.
        """
        rng = make_rng(seed)
        bits = rng.integers(0, 2, size=(k, n))
        return cls(vectors=(2 * bits - 1).astype(np.int8), seed=int(seed))

    def to_csv(self, path: str) -> None:
        """Write one pattern per row under a ``N=..,K=..,seed=..`` header row."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            seed = "" if self.seed is None else self.seed
            writer.writerow([f"N={self.N}", f"K={self.K}", f"seed={seed}"])
            for row in self.vectors:
                writer.writerow([int(v) for v in row])
        logger.info(f"Wrote training set ({self.K} x {self.N}) to {path}")

    @classmethod
    def from_csv(cls, path: str) -> "TrainingSet":
        """
        Read a training set written by ``to_csv``.

        Raises:
            ConfigurationError: If the file is missing or its header and body disagree.
        """
        try:
            with open(path, "r", newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as e:
            raise ConfigurationError(f"Cannot read training set {path}: {e}") from e
        if not rows:
            raise ConfigurationError(f"Training set {path} is empty")
        try:
            header = dict(cell.split("=", 1) for cell in rows[0])
            n, k = int(header["N"]), int(header["K"])
            seed = int(header["seed"]) if header.get("seed") else None
            vectors = np.array([[int(v) for v in row] for row in rows[1:] if row])
        except (KeyError, ValueError) as e:
            raise ConfigurationError(f"Malformed training set {path}: {e}") from e
        if vectors.shape != (k, n):
            raise ConfigurationError(
                f"Header says {k} x {n} but file holds {vectors.shape}"
            )
        return cls(vectors=vectors, seed=seed)


class StimulusSchedule:
    """
    Periodic telegraph input built from a training set.

    Vector k (0-based) is active on [k*t_s + m*period, (k+1)*t_s + m*period)
    for every m >= 0; windows are half-open so I(t) is single-valued at switches.
    """

    def __init__(self, training_set: TrainingSet, t_s: float):
        if not t_s > 0:
            raise ConfigurationError(f"t_s must be positive, got {t_s}")
        self.training_set = training_set
        self.t_s = float(t_s)

    @property
    def period(self) -> float:
        return self.training_set.K * self.t_s

    @property
    def N(self) -> int:
        return self.training_set.N

    def index_at(self, t: float) -> int:
        if t < 0:
            raise DomainError(f"Stimulus is undefined for negative time t={t}")
        return int(math.floor(t / self.t_s)) % self.training_set.K

    def vector(self, index: int) -> np.ndarray:
        return self.training_set.vectors[index % self.training_set.K].astype(float)

    def switch_times(self, t0: float, t1: float) -> np.ndarray:
        """Switch instants m * t_s lying strictly inside (t0, t1)."""
        first = int(math.floor(t0 / self.t_s)) + 1
        last = int(math.ceil(t1 / self.t_s)) - 1
        times = np.arange(first, last + 1) * self.t_s
        return times[(times > t0) & (times < t1)]


def stimulus_at(schedule: StimulusSchedule, t: float) -> np.ndarray:
    """
    Input vector active at learning time t.

    Raises:
        DomainError: If t is negative.
    """
    return schedule.vector(schedule.index_at(t))


@dataclass
class SystemState:
    x: np.ndarray
    w: WeightMatrix
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.shape != (self.w.n,):
            raise ConfigurationError(
                f"State has {self.x.size} neurons but weights are {self.w.n}-dimensional"
            )


def _check_dimension(n: int, cfg: NetworkConfig, what: str) -> None:
    if n != cfg.N:
        raise ConfigurationError(f"{what} has dimension {n}, config expects N={cfg.N}")


def learning_rhs(state: SystemState, schedule: StimulusSchedule, cfg: NetworkConfig):
    """
    Time derivative of the learning system.

    dx_i/dt = -x_i + g sum_j F(w_ij) F(x_j) + A I_i(t)
    dw_ij/dt = (-w_ij + F(x_i) F(x_j)) / B   for i < j

    Args:
        state (SystemState): Current neurons, weights and learning time.
        schedule (StimulusSchedule): The training stimulus.
        cfg (NetworkConfig): Network parameters.

    Returns:
        Tuple[np.ndarray, WeightMatrix]: dx/dt and dw/dt (as a WeightMatrix).

    Raises:
        ConfigurationError: On dimension mismatch.
    """
    _check_dimension(state.w.n, cfg, "State")
    _check_dimension(schedule.N, cfg, "Stimulus")
    dx, dw = learning_field(
        state.x, state.w.values, stimulus_at(schedule, state.t), cfg
    )
    return dx, WeightMatrix(cfg.N, dw)


def learning_field(x: np.ndarray, w_values: np.ndarray, inputs: np.ndarray, cfg: NetworkConfig):
    """Flat-array form of ``learning_rhs`` used by the integrators."""
    rows, cols = pair_indices(cfg.N)
    fw = np.zeros((cfg.N, cfg.N))
    fw_values = activation(w_values, cfg.lam)
    fw[rows, cols] = fw_values
    fw[cols, rows] = fw_values
    fx = activation(x, cfg.lam)
    dx = -x + cfg.g * (fw @ fx) + cfg.A * inputs
    dw = (-w_values + fx[rows] * fx[cols]) / cfg.B
    return dx, dw


class RetrievalSystem:
    """
    The autonomous network with frozen weights and zero input.

    Caches the coupling matrix g * F(W), so the field, its Jacobian and the
    spectrum are cheap to evaluate repeatedly at one weight snapshot.
    """

    def __init__(self, w: WeightMatrix, cfg: NetworkConfig):
        _check_dimension(w.n, cfg, "Weight matrix")
        self.w = w
        self.cfg = cfg
        self.coupling = cfg.g * w.activated(cfg.lam)

    @property
    def N(self) -> int:
        return self.cfg.N

    def _vector(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.N:
            raise ConfigurationError(
                f"State has dimension {x.shape[-1]}, config expects N={self.N}"
            )
        return x

    def velocity(self, x: ArrayLike) -> np.ndarray:
        """u(x) = -x + g F(W) F(x); accepts a single state or a batch of rows."""
        x = self._vector(x)
        return -x + activation(x, self.cfg.lam) @ self.coupling.T

    def field(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.velocity(x)

    def speed(self, x: ArrayLike) -> float:
        return float(np.max(np.abs(self.velocity(x))))

    def jacobian(self, x: ArrayLike) -> np.ndarray:
        """J = -Id + g F(W) diag(F'(x))."""
        x = self._vector(x)
        return -np.eye(self.N) + self.coupling * activation_deriv(x, self.cfg.lam)[None, :]

    def symmetrized_jacobian(self, x: ArrayLike) -> np.ndarray:
        """D^{1/2} J D^{-1/2} = -Id + D^{1/2} g F(W) D^{1/2}, with D = diag(F'(x))."""
        root = np.sqrt(activation_deriv(self._vector(x), self.cfg.lam))
        return -np.eye(self.N) + root[:, None] * self.coupling * root[None, :]

    def eigenvalues(self, x: ArrayLike) -> np.ndarray:
        """Real spectrum of J(x), sorted descending, via the symmetric eigensolver."""
        values = linalg.eigh(self.symmetrized_jacobian(x), eigvals_only=True)
        return values[::-1]

    def leading_eigenpair(self, x: ArrayLike) -> Tuple[float, np.ndarray]:
        """Eigenvalue of J(x) closest to zero and its right eigenvector (unit norm)."""
        x = self._vector(x)
        root = np.sqrt(activation_deriv(x, self.cfg.lam))
        values, vectors = linalg.eigh(self.symmetrized_jacobian(x))
        k = int(np.argmin(np.abs(values)))
        v = vectors[:, k] / root
        return float(values[k]), v / np.linalg.norm(v)

    @cached_property
    def origin_spectrum(self) -> np.ndarray:
        return self.eigenvalues(np.zeros(self.N))


def retrieval_rhs(x: ArrayLike, w: WeightMatrix, cfg: NetworkConfig) -> np.ndarray:
    """
    Velocity of the retrieval system, u_i(x) = -x_i + g sum_j F(w_ij) F(x_j).

    Raises:
        ConfigurationError: On dimension mismatch.
    """
    return RetrievalSystem(w, cfg).velocity(x)


def retrieval_jacobian(x: ArrayLike, w: WeightMatrix, cfg: NetworkConfig) -> np.ndarray:
    """
    Exact Jacobian of ``retrieval_rhs``: J_ij = -delta_ij + g F(w_ij) F'(x_j).

    Raises:
        ConfigurationError: On dimension mismatch.
    """
    return RetrievalSystem(w, cfg).jacobian(x)


def jacobian_eigenvalues(x: ArrayLike, w: WeightMatrix, cfg: NetworkConfig) -> np.ndarray:
    return RetrievalSystem(w, cfg).eigenvalues(x)


def energy(x: ArrayLike, w: WeightMatrix, inputs: ArrayLike, cfg: NetworkConfig) -> float:
    """
    Diagnostic potential V = sum_i [(x_i - A I_i)^2 / 2 - g x_i sum_j F(w_ij) F(x_j)].

    The gradient identity du/dt = -dV/dx only holds as lambda grows without
    bound, so nothing here asserts that V decreases along trajectories.

    Raises:
        ConfigurationError: On dimension mismatch.
    """
    system = RetrievalSystem(w, cfg)
    x = system._vector(x)
    inputs = np.asarray(inputs, dtype=float)
    _check_dimension(inputs.size, cfg, "Input vector")
    drive = system.coupling @ activation(x, cfg.lam)
    return float(np.sum((x - cfg.A * inputs) ** 2 / 2.0) - np.dot(x, drive))
