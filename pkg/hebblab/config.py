# python imports
import json
import logging
import os
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Literal, Optional, Tuple

# third party imports
import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

# local imports
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

# Purposes that receive an independent random stream split from the root seed.
SEED_PURPOSES = (
    "training",
    "initial_conditions",
    "perturbations",
    "seed_battery",
    "basins",
)


@dataclass(frozen=True)
class NetworkConfig:
    """
    Parameters of the learning network.

    Attributes:
        N (int): Number of neurons.
        g (float): Coupling gain.
        A (float): Input strength.
        B (float): Learning-rate time constant.
        lam (float): Activation steepness (``lambda`` in config files).
        t_s (float): Exposure time of a single pattern.
        T_train (float): Total training duration.
    """

    N: int = 81
    g: float = 0.3
    A: float = 30.0
    B: float = 300.0
    lam: float = 1.4
    t_s: float = 12.0
    T_train: float = 6000.0

    def __post_init__(self):
        problems = []
        if int(self.N) != self.N or self.N < 2:
            problems.append(f"N must be an integer >= 2, got {self.N}")
        if not self.g > 0:
            problems.append(f"g must be positive, got {self.g}")
        if not self.A >= 0:
            problems.append(f"A must be non-negative, got {self.A}")
        if not self.B > 0:
            problems.append(f"B must be positive, got {self.B}")
        if not self.lam > 0:
            problems.append(f"lambda must be positive, got {self.lam}")
        if not self.t_s > 0:
            problems.append(f"t_s must be positive, got {self.t_s}")
        if not self.T_train > 0:
            problems.append(f"T_train must be positive, got {self.T_train}")
        if problems:
            raise ConfigurationError("; ".join(problems))

    @property
    def M(self) -> int:
        """Number of distinct weights, N(N-1)/2."""
        return self.N * (self.N - 1) // 2

    def replace(self, **changes: Any) -> "NetworkConfig":
        data = asdict(self)
        data.update(changes)
        return NetworkConfig(**data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetworkConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        return cls(**data)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class NetworkSettings(_Section):
    N: int = Field(81, ge=2)
    g: float = Field(0.3, gt=0)
    A: float = Field(30.0, ge=0)
    B: float = Field(300.0, gt=0)
    lam: float = Field(1.4, gt=0, alias="lambda")
    t_s: float = Field(12.0, gt=0)
    T_train: float = Field(6000.0, gt=0)

    def to_network_config(self) -> NetworkConfig:
        return NetworkConfig(
            N=self.N,
            g=self.g,
            A=self.A,
            B=self.B,
            lam=self.lam,
            t_s=self.t_s,
            T_train=self.T_train,
        )


class TrainingSettings(_Section):
    """Either a pattern count drawn from the seeded generator or a CSV file."""

    K: int = Field(6, ge=1)
    csv_path: Optional[str] = None
    seed: Optional[int] = Field(None, ge=0)


class IntegratorSettings(_Section):
    method: Literal["RK45", "RK4"] = "RK45"
    rtol: float = Field(1e-9, gt=0)
    atol: float = Field(1e-9, gt=0)
    fixed_dt: float = Field(0.005, gt=0)
    sample_dt: float = Field(0.1, gt=0)
    ic_seed: Optional[int] = Field(None, ge=0)


class FixedPointSettings(_Section):
    newton_max_iter: int = Field(100, ge=1)
    newton_tol: float = Field(1e-12, gt=0)
    accept_tol: float = Field(1e-10, gt=0)
    dedup_tol: float = Field(1e-6, gt=0)
    zero_threshold: float = Field(1e-9, gt=0)
    random_seeds: int = Field(200, ge=0)
    seed_half_side: float = Field(5.0, gt=0)
    continuity_bound: float = Field(0.5, gt=0)
    bisection_width: float = Field(1e-4, gt=0)
    perturbations_per_pattern: int = Field(2, ge=0)
    perturbation_radius: float = Field(0.5, gt=0)


class MemorySettings(_Section):
    n_type2: int = Field(20, ge=1)
    type2_radius: float = Field(0.5, gt=0)
    n_type3: int = Field(1000, ge=0)
    type3_half_side: float = Field(5.0, gt=0)
    match_tol: float = Field(1e-4, gt=0)
    tol: float = Field(1e-8, gt=0)
    T_max: float = Field(500.0, gt=0)
    # labels for the forgetting log are taken at t_star - lead, doubling lead up to max_lead
    forgetting_lead: float = Field(0.25, gt=0)
    forgetting_max_lead: float = Field(8.0, gt=0)


class BasinSettings(_Section):
    extent: Tuple[float, float] = (-5.0, 5.0)
    resolution: int = Field(101, ge=2)
    free_axes: Tuple[int, int] = (0, 1)
    x3_values: List[float] = Field(
        default_factory=lambda: [round(-0.6 + 0.2 * k, 10) for k in range(12)]
    )
    match_tol: float = Field(1e-4, gt=0)
    tol: float = Field(1e-8, gt=0)
    T_max: float = Field(500.0, gt=0)
    saddle_planes: int = Field(4, ge=0)

    @model_validator(mode="after")
    def _check_axes(self) -> "BasinSettings":
        if self.free_axes[0] == self.free_axes[1]:
            raise ValueError("free_axes must be distinct")
        if not self.extent[0] < self.extent[1]:
            raise ValueError("extent must be increasing")
        return self


class ManifoldSettings(_Section):
    slice_range: Tuple[float, float, float] = (-0.1, 0.1, 0.01)
    third_axis_range: Tuple[float, float, float] = (-1.0, 1.0, 0.1)
    axes: Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]] = (
        (0, 1),
        (0, 2),
        (1, 2),
    )
    initial_step: float = Field(1e-2, gt=0)
    min_step: float = Field(1e-5, gt=0)
    max_step: float = Field(1e-1, gt=0)
    corrector_tol: float = Field(1e-10, gt=0)
    max_points: int = Field(4000, ge=10)
    plane_box: float = Field(1.0, gt=0)
    crossing_width: float = Field(1e-3, gt=0)
    t_n: Optional[float] = None


class ExperimentConfig(_Section):
    """
    Everything a run needs; a persisted config re-runs to identical outputs.
    """

    root_seed: int = Field(0, ge=0)
    workers: Optional[int] = Field(None, ge=1)
    output_dir: Optional[str] = None
    network: NetworkSettings = Field(default_factory=NetworkSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    integrator: IntegratorSettings = Field(default_factory=IntegratorSettings)
    fixed_points: FixedPointSettings = Field(default_factory=FixedPointSettings)
    memory: MemorySettings = Field(default_factory=MemorySettings)
    basins: BasinSettings = Field(default_factory=BasinSettings)
    manifolds: ManifoldSettings = Field(default_factory=ManifoldSettings)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        """
        Load and validate an experiment config from a JSON file.

        Args:
            path (str): Path to the JSON file.

        Returns:
            ExperimentConfig: The validated config.

        Raises:
            ConfigurationError: If the file is missing, not JSON, or invalid.
        """
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Cannot read config {path}: {e}") from e
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid config: {e}") from e

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.model_dump_json(by_alias=True, indent=2))

    def network_config(self) -> NetworkConfig:
        return self.network.to_network_config()

    def seed_for(self, purpose: str) -> int:
        """Seed for a purpose; explicit per-section seeds override the root split."""
        if purpose == "training" and self.training.seed is not None:
            return self.training.seed
        if purpose == "initial_conditions" and self.integrator.ic_seed is not None:
            return self.integrator.ic_seed
        return split_seed(self.root_seed, purpose)

    def resolve_workers(self, override: Optional[int] = None) -> int:
        if override is not None:
            return max(1, int(override))
        if self.workers is not None:
            return self.workers
        return env_workers()

    def resolve_output_dir(self, override: Optional[str] = None) -> str:
        return override or self.output_dir or os.getenv("HBL_OUTPUT_DIR") or "output"


def split_seed(root_seed: int, purpose: str) -> int:
    """
    Derive an independent 64-bit seed for a purpose from the root seed.

    Args:
        root_seed (int): The experiment's root seed.
        purpose (str): One of ``SEED_PURPOSES``.

    Returns:
        int: The derived seed.

    Raises:
        ConfigurationError: If the purpose is unknown.
    """
    if purpose not in SEED_PURPOSES:
        raise ConfigurationError(f"Unknown seed purpose: {purpose}")
    sequence = np.random.SeedSequence(
        int(root_seed), spawn_key=(SEED_PURPOSES.index(purpose),)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


def env_workers() -> int:
    load_dotenv()
    raw = os.getenv("HBL_WORKERS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer HBL_WORKERS={raw!r}")
        return 1


def env_log_level(default: str = "INFO") -> str:
    load_dotenv()
    return os.getenv("HBL_LOG_LEVEL", default).upper()


def derive_seed(seed: int, index: int) -> int:
    """Independent child seed, e.g. one per trajectory sample or per raster row."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
