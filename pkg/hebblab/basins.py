# python imports
import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

# third party imports
import numpy as np
from matplotlib import colormaps

# local imports
from .config import BasinSettings, FixedPointSettings, NetworkConfig
from .errors import ConfigurationError, DomainError, NotAFixedPointError
from .fixedpoints import FixedPoint, StabilityClass, attractor_census, classify
from .model import RetrievalSystem, WeightMatrix
from .parallel import map_ordered
from .simulate import converge_many
from .solvers import newton_solve

logger = logging.getLogger(__name__)

UNRESOLVED = -1
UNRESOLVED_RGB = (0, 0, 0)


@dataclass(frozen=True)
class PlaneSpec:
    """
    A two-dimensional grid of retrieval cues.

    Node (row, col) sets coordinate ``free_axes[0]`` to ``center[0] +
    nodes[col]`` and ``free_axes[1]`` to ``center[1] + nodes[row]``; every
    other coordinate is taken from ``fixed_values``.

    Attributes:
        free_axes (Tuple[int, int]): The two varied coordinates (0-based).
        fixed_values (Tuple[float, ...]): Full-length state; free entries are ignored.
        extent (Tuple[float, float]): Offset range along both free axes.
        resolution (int): Nodes per axis, endpoints included.
        center (Tuple[float, float]): Origin of the offsets on the free axes.
    """

    free_axes: Tuple[int, int]
    fixed_values: Tuple[float, ...]
    extent: Tuple[float, float] = (-5.0, 5.0)
    resolution: int = 101
    center: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        n = len(self.fixed_values)
        a, b = self.free_axes
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise ConfigurationError(f"Invalid free axes {self.free_axes} for N={n}")
        if self.resolution < 2:
            raise ConfigurationError(f"resolution must be >= 2, got {self.resolution}")
        if not self.extent[0] < self.extent[1]:
            raise ConfigurationError(f"extent must be increasing, got {self.extent}")

    @classmethod
    def secant(
        cls,
        n: int,
        x3: float,
        extent: Tuple[float, float] = (-5.0, 5.0),
        resolution: int = 101,
        free_axes: Tuple[int, int] = (0, 1),
        third_axis: int = 2,
    ) -> "PlaneSpec":
        """Plane through x_{third} = x3 with every other fixed coordinate at zero."""
        if n < 3:
            raise ConfigurationError("Secant planes need N >= 3")
        values = np.zeros(n)
        values[third_axis] = x3
        return cls(tuple(free_axes), tuple(values.tolist()), tuple(extent), resolution)

    @property
    def N(self) -> int:
        return len(self.fixed_values)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.extent[0], self.extent[1], self.resolution)

    @property
    def spacing(self) -> float:
        return (self.extent[1] - self.extent[0]) / (self.resolution - 1)

    def row_starts(self, row: int) -> np.ndarray:
        nodes = self.nodes
        starts = np.tile(np.asarray(self.fixed_values, dtype=float), (self.resolution, 1))
        starts[:, self.free_axes[0]] = self.center[0] + nodes
        starts[:, self.free_axes[1]] = self.center[1] + nodes[row]
        return starts

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        """Whether x lies on the plane, inside the extent."""
        fixed = np.asarray(self.fixed_values, dtype=float)
        mask = np.ones(self.N, dtype=bool)
        mask[list(self.free_axes)] = False
        if np.any(np.abs(x[mask] - fixed[mask]) > tol):
            return False
        offsets = np.array([x[self.free_axes[0]] - self.center[0], x[self.free_axes[1]] - self.center[1]])
        return bool(np.all(offsets >= self.extent[0] - tol) and np.all(offsets <= self.extent[1] + tol))

    def cell_of(self, x: np.ndarray) -> Tuple[int, int]:
        """Nearest grid node (row, col) to the projection of x."""
        col = int(round((x[self.free_axes[0]] - self.center[0] - self.extent[0]) / self.spacing))
        row = int(round((x[self.free_axes[1]] - self.center[1] - self.extent[0]) / self.spacing))
        return row, col


def _palette_colors() -> List[Tuple[int, int, int]]:
    colors = []
    for name in ("tab20", "tab20b", "tab20c"):
        cmap = colormaps[name]
        for k in range(cmap.N):
            r, g, b, _ = cmap(k)
            colors.append((int(round(255 * r)), int(round(255 * g)), int(round(255 * b))))
    return colors


@dataclass
class AttractorCatalog:
    """
    Attractor identities shared by every raster of one snapshot.

    Ids are append-only, so a palette written after several rasters is
    valid for all of them.
    """

    locations: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def from_points(cls, points: Sequence[FixedPoint]) -> "AttractorCatalog":
        catalog = cls()
        for p in points:
            if p.stability is StabilityClass.STABLE:
                catalog.add(p.location)
        return catalog

    def __len__(self) -> int:
        return len(self.locations)

    def match(self, x: np.ndarray, tol: float) -> int:
        for a_id, location in enumerate(self.locations):
            if np.max(np.abs(location - x)) < tol:
                return a_id
        return UNRESOLVED

    def add(self, x: np.ndarray, tol: float = 1e-6) -> int:
        """Register x (and -x) if new; returns the id of x."""
        a_id = self.match(x, tol)
        if a_id != UNRESOLVED:
            return a_id
        self.locations.append(np.array(x, dtype=float))
        a_id = len(self.locations) - 1
        if self.match(-x, tol) == UNRESOLVED:
            self.locations.append(-np.array(x, dtype=float))
        return a_id

    def partner(self, a_id: int, tol: float = 1e-6) -> int:
        """Id of the negated attractor."""
        return self.match(-self.locations[a_id], tol)

    def color(self, a_id: int) -> Tuple[int, int, int]:
        if a_id == UNRESOLVED:
            return UNRESOLVED_RGB
        colors = _palette_colors()
        return colors[a_id % len(colors)]


@dataclass
class BasinRaster:
    """
    Attractor id per grid node; ``UNRESOLVED`` (-1) where no attractor was reached.

    ``cells[row, col]`` follows the ``PlaneSpec`` node convention, row 0 at
    the low end of the second free axis.
    """

    plane: PlaneSpec
    cells: np.ndarray
    catalog: AttractorCatalog

    @property
    def unresolved_count(self) -> int:
        return int(np.sum(self.cells == UNRESOLVED))

    def boundary_mask(self) -> np.ndarray:
        """Cells with a 4-neighbour of a different id."""
        c = self.cells
        mask = np.zeros(c.shape, dtype=bool)
        diff_v = c[1:, :] != c[:-1, :]
        diff_h = c[:, 1:] != c[:, :-1]
        mask[1:, :] |= diff_v
        mask[:-1, :] |= diff_v
        mask[:, 1:] |= diff_h
        mask[:, :-1] |= diff_h
        return mask

    def ids(self) -> List[int]:
        return sorted(int(v) for v in np.unique(self.cells))


def _converge_row(job: Tuple[np.ndarray, NetworkConfig, np.ndarray, float, float]) -> List[Optional[np.ndarray]]:
    values, cfg, starts, tol, t_max = job
    results = converge_many(starts, WeightMatrix(cfg.N, values), cfg, tol, t_max)
    return [r.location if r.converged else None for r in results]


def _identify(
    x: Optional[np.ndarray],
    catalog: AttractorCatalog,
    system: RetrievalSystem,
    w: WeightMatrix,
    cfg: NetworkConfig,
    tol: float,
) -> int:
    if x is None:
        return UNRESOLVED
    a_id = catalog.match(x, tol)
    if a_id != UNRESOLVED:
        return a_id
    polished = newton_solve(system.velocity, system.jacobian, x)
    if not polished.converged:
        return UNRESOLVED
    try:
        point = classify(polished.x, w, cfg, system=system)
    except NotAFixedPointError:
        return UNRESOLVED
    if point.stability is not StabilityClass.STABLE:
        return UNRESOLVED
    logger.warning(f"Attractor missing from the census found on the grid; now id {len(catalog)}")
    return catalog.add(point.location)


def basin_section(
    w: WeightMatrix,
    cfg: NetworkConfig,
    plane: PlaneSpec,
    catalog: Optional[AttractorCatalog] = None,
    settings: Optional[BasinSettings] = None,
    fp_settings: Optional[FixedPointSettings] = None,
    seed: int = 0,
    workers: int = 1,
) -> BasinRaster:
    """
    Rasterize which attractor each cue on a plane converges to.

    Args:
        w (WeightMatrix): Frozen weights.
        cfg (NetworkConfig): Network parameters.
        plane (PlaneSpec): The grid of cues.
        catalog (Optional[AttractorCatalog]): Shared ids; built from the census when omitted.
        settings (Optional[BasinSettings]): Matching and convergence tolerances.
        fp_settings (Optional[FixedPointSettings]): Census settings.
        seed (int): Seed of the census battery.
        workers (int): Processes, one raster row per task.

    Returns:
        BasinRaster: resolution x resolution attractor ids.

    Raises:
        ConfigurationError: If the plane dimension differs from N.
    """
    settings = settings or BasinSettings()
    if plane.N != cfg.N:
        raise ConfigurationError(f"Plane has dimension {plane.N}, config expects N={cfg.N}")
    if catalog is None:
        census = attractor_census(w, cfg, fp_settings, seed, workers=workers)
        catalog = AttractorCatalog.from_points(census.all_points())

    rows = map_ordered(
        _converge_row,
        [(w.values, cfg, plane.row_starts(r), settings.tol, settings.T_max) for r in range(plane.resolution)],
        workers=workers,
    )
    system = RetrievalSystem(w, cfg)
    cells = np.full((plane.resolution, plane.resolution), UNRESOLVED, dtype=int)
    for r, row in enumerate(rows):
        for c, x in enumerate(row):
            cells[r, c] = _identify(x, catalog, system, w, cfg, settings.match_tol)

    raster = BasinRaster(plane, cells, catalog)
    if raster.unresolved_count:
        logger.warning(f"{raster.unresolved_count} of {cells.size} cells unresolved")
    logger.info(f"Rasterized {cells.size} cells over {len(raster.ids())} ids")
    return raster


def saddle_plane_section(
    saddle: FixedPoint,
    w: WeightMatrix,
    cfg: NetworkConfig,
    extent: Optional[Tuple[float, float]] = None,
    resolution: Optional[int] = None,
    catalog: Optional[AttractorCatalog] = None,
    settings: Optional[BasinSettings] = None,
    workers: int = 1,
) -> BasinRaster:
    """
    Raster on the plane through a useful saddle: coordinates 3..N pinned to
    the saddle's, the first two varied around it.

    Raises:
        DomainError: If ``saddle`` is not a useful saddle.
    """
    settings = settings or BasinSettings()
    if saddle.stability is not StabilityClass.USEFUL_SADDLE:
        raise DomainError(f"Expected a useful saddle, got {saddle.stability.value}")
    plane = PlaneSpec(
        free_axes=(0, 1),
        fixed_values=tuple(np.asarray(saddle.location, dtype=float).tolist()),
        extent=tuple(extent or settings.extent),
        resolution=resolution or settings.resolution,
        center=(float(saddle.location[0]), float(saddle.location[1])),
    )
    return basin_section(w, cfg, plane, catalog, settings, workers=workers)


@dataclass
class SaddleBoundaryEntry:
    location: np.ndarray
    cell: Tuple[int, int]
    distance: float
    flagged: bool


def boundary_saddle_report(
    raster: BasinRaster, saddles: Sequence[FixedPoint], tol: float = 1e-9
) -> List[SaddleBoundaryEntry]:
    """
    Grid-cell distance from each on-plane saddle to the nearest basin boundary.

    Saddles off the plane are skipped. The distance is the Chebyshev cell
    distance to the nearest boundary cell; above one cell is flagged.
    """
    mask = raster.boundary_mask()
    boundary = np.argwhere(mask)
    report = []
    for saddle in saddles:
        if not raster.plane.contains(saddle.location, tol):
            continue
        cell = raster.plane.cell_of(saddle.location)
        if boundary.size:
            distance = float(np.min(np.max(np.abs(boundary - np.array(cell)), axis=1)))
        else:
            distance = float("inf")
        entry = SaddleBoundaryEntry(saddle.location, cell, distance, distance > 1)
        if entry.flagged:
            logger.warning(f"Saddle at cell {cell} is {distance} cells from the nearest boundary")
        report.append(entry)
    return report


def write_ppm(raster: BasinRaster, path: str) -> None:
    """
    Binary PPM (P6), 8 bits per channel. The top image row is the highest
    value of the second free axis; unresolved cells are black.
    """
    res = raster.plane.resolution
    image = np.zeros((res, res, 3), dtype=np.uint8)
    for a_id in raster.ids():
        image[raster.cells == a_id] = raster.catalog.color(a_id)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{res} {res}\n255\n".encode("ascii"))
        fh.write(image[::-1].tobytes())


def write_raster_csv(raster: BasinRaster, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "attractor_id"])
        for (r, c), a_id in np.ndenumerate(raster.cells):
            writer.writerow([r, c, int(a_id)])


def write_palette_csv(catalog: AttractorCatalog, path: str) -> None:
    """Palette shared by a snapshot's rasters: id, RGB, location."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attractor_id", "r", "g", "b", "location"])
        writer.writerow([UNRESOLVED, *UNRESOLVED_RGB, ""])
        for a_id, location in enumerate(catalog.locations):
            writer.writerow([a_id, *catalog.color(a_id), " ".join(f"{v:.12g}" for v in location)])
    logger.info(f"Wrote palette with {len(catalog)} attractors to {path}")
