# python imports
import argparse
import json
import logging
import os
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

# third party imports
import numpy as np

# local imports
from . import __version__
from .basins import (
    AttractorCatalog,
    PlaneSpec,
    basin_section,
    boundary_saddle_report,
    saddle_plane_section,
    write_palette_csv,
    write_ppm,
    write_raster_csv,
)
from .config import ExperimentConfig, NetworkConfig, env_log_level
from .errors import ConfigurationError, DomainError, HBLError
from .fixedpoints import (
    StabilityClass,
    attractor_census,
    census_timeline,
    detect_bifurcations,
    track_along_trajectory,
    write_branches_csv,
    write_census_csv,
    write_events_csv,
)
from .manifolds import (
    SubspaceAxes,
    crossing_detect,
    pitchfork_surface_N3,
    pitchfork_test,
    project_trajectory,
    saddle_node_section,
    section_distance,
    write_crossings_csv,
    write_projection_csv,
    write_section_csv,
    write_section_mesh,
)
from .memory import forgetting_log, memories_at, write_forgetting_csv, write_memory_csv
from .model import StimulusSchedule, TrainingSet
from .plots import render_bifurcation_svg
from .simulate import WeightTrajectory, integrate_learning, make_initial_conditions, oscillation_period

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

TRAJECTORY_FILE = "trajectory.hbl"
DEMO_OVERRIDES = {"N": 3, "g": 5.0, "T_train": 216.0}
DEMO_K = 3
DEMO_STAGES = (36.0, 49.0, 56.0, 84.0)


class RunContext:
    """Resolved settings and the output ledger of one command."""

    def __init__(self, args: argparse.Namespace, config: ExperimentConfig):
        self.args = args
        self.config = config
        self.out_dir = config.resolve_output_dir(args.out)
        self.workers = config.resolve_workers(args.workers)
        self.outputs: List[str] = []
        self.metrics: Dict[str, Any] = {}
        os.makedirs(self.out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        full = os.path.join(self.out_dir, name)
        self.outputs.append(full)
        return full

    def trajectory_path(self) -> str:
        return self.args.snapshot or os.path.join(self.out_dir, TRAJECTORY_FILE)

    def load_trajectory(self) -> WeightTrajectory:
        path = self.trajectory_path()
        if not os.path.exists(path):
            raise FileNotFoundError(f"Trajectory file not found: {path}")
        traj = WeightTrajectory.load(path)
        if traj.cfg != self.config.network_config():
            logger.warning("Network parameters in the trajectory file take precedence over the config")
        return traj


def parse_range(text: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as e:
        raise ConfigurationError(f"Expected a range A:B, got {text!r}") from e
    if lo > hi:
        raise ConfigurationError(f"Empty range {text!r}")
    return lo, hi


def parse_times(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Expected comma-separated times, got {text!r}") from e


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = config.model_copy(update={"root_seed": int(args.seed)})
    return config


def training_set_for(config: ExperimentConfig, cfg: NetworkConfig) -> TrainingSet:
    if config.training.csv_path:
        training_set = TrainingSet.from_csv(config.training.csv_path)
        if training_set.N != cfg.N:
            raise ConfigurationError(f"Training set has N={training_set.N}, network has N={cfg.N}")
        return training_set
    return TrainingSet.generate(cfg.N, config.training.K, config.seed_for("training"))


def train(ctx: RunContext, config: ExperimentConfig) -> WeightTrajectory:
    cfg = config.network_config()
    training_set = training_set_for(config, cfg)
    ics = make_initial_conditions(cfg, config.seed_for("initial_conditions"))
    traj = integrate_learning(
        cfg, StimulusSchedule(training_set, cfg.t_s), ics, settings=config.integrator
    )
    traj.save(ctx.path(TRAJECTORY_FILE))
    traj.write_summary_csv(ctx.path("weights_summary.csv"))
    training_set.to_csv(ctx.path("training_set.csv"))
    pairs = [tuple(p) for p in config.manifolds.axes if max(p) < cfg.N]
    traj.to_csv(ctx.path("trajectory.csv"), pairs=pairs or None)
    peak = float(np.max(np.abs(traj.weights)))
    ctx.metrics.update({"samples": len(traj), "max_abs_w": peak, "weights_inside_box": peak < 1.0})
    try:
        ctx.metrics["oscillation_period"] = oscillation_period(traj)
    except DomainError as e:
        logger.info(f"Oscillation period not estimated: {e}")
    return traj


def cmd_train(ctx: RunContext) -> None:
    ctx.config.dump(ctx.path("config.json"))
    train(ctx, ctx.config)


def scan(ctx: RunContext, traj: WeightTrajectory, t_range: Optional[Tuple[float, float]], stride: int):
    cfg = traj.cfg
    branches = track_along_trajectory(
        traj,
        cfg,
        t_range,
        settings=ctx.config.fixed_points,
        seed=ctx.config.seed_for("seed_battery"),
        stride=stride,
        workers=ctx.workers,
    )
    events = detect_bifurcations(branches, traj, cfg, ctx.config.fixed_points)
    write_branches_csv(branches, ctx.path("branches.csv"))
    write_events_csv(events, ctx.path("events.csv"))
    render_bifurcation_svg(branches, events, ctx.path("bifurcation.svg"))
    ctx.metrics.update(
        {"branches": len(branches), "events": [{"t_star": e.t_star, "kind": e.kind.value} for e in events]}
    )
    return branches, events


def cmd_scan(ctx: RunContext) -> None:
    traj = ctx.load_trajectory()
    t_range = parse_range(ctx.args.t_range) if ctx.args.t_range else None
    scan(ctx, traj, t_range, ctx.args.stride)


def cmd_memories(ctx: RunContext) -> None:
    traj = ctx.load_trajectory()
    times = parse_times(ctx.args.times) if ctx.args.times else [ctx.args.t if ctx.args.t is not None else traj.span[1]]
    seed = ctx.config.seed_for("perturbations")
    reports = {}
    for t in times:
        report = memories_at(
            traj, traj.cfg, t, seed, ctx.config.memory, ctx.config.fixed_points, ctx.workers
        )
        write_memory_csv(report, ctx.path(f"memories_t{t:g}.csv"))
        reports[f"{t:g}"] = {**report.counts(), "unresolved_trials": len(report.unresolved)}
        report.raise_for_errors()
    ctx.metrics["memories"] = reports

    if ctx.args.forgetting:
        t_range = parse_range(ctx.args.t_range) if ctx.args.t_range else None
        _, events = scan(ctx, traj, t_range, ctx.args.stride)
        log = forgetting_log(
            traj, traj.cfg, traj.training_set(), events, seed,
            ctx.config.memory, ctx.config.fixed_points, workers=ctx.workers,
        )
        write_forgetting_csv(log, ctx.path("forgetting.csv"))
        ctx.metrics.update(
            {
                "forgetting_incidents": len(log.incidents),
                "unlabeled_incidents": len(log.unlabeled),
                "prunings": len(log.prunings),
            }
        )


def cmd_basins(ctx: RunContext) -> None:
    traj = ctx.load_trajectory()
    cfg = traj.cfg
    t = ctx.args.t if ctx.args.t is not None else traj.span[1]
    w = traj.weights_at(t)
    settings = ctx.config.basins
    census = attractor_census(
        w, cfg, ctx.config.fixed_points, ctx.config.seed_for("seed_battery"), traj.training_set(), workers=ctx.workers
    )
    write_census_csv([(t, census)], ctx.path("census.csv"))
    catalog = AttractorCatalog.from_points(census.all_points())
    report = memories_at(traj, cfg, t, ctx.config.seed_for("perturbations"), ctx.config.memory, ctx.config.fixed_points, ctx.workers)
    write_memory_csv(report, ctx.path("memories.csv"))

    rasters = []
    if cfg.N >= 3:
        for k, x3 in enumerate(settings.x3_values):
            plane = PlaneSpec.secant(cfg.N, x3, settings.extent, settings.resolution, settings.free_axes)
            raster = basin_section(w, cfg, plane, catalog, settings, workers=ctx.workers)
            write_ppm(raster, ctx.path(f"basin_{k:02d}.ppm"))
            write_raster_csv(raster, ctx.path(f"basin_{k:02d}.csv"))
            rasters.append({"x3": x3, "unresolved": raster.unresolved_count})

    saddles = census.points[StabilityClass.USEFUL_SADDLE]
    count = settings.saddle_planes if ctx.args.saddle_planes is None else ctx.args.saddle_planes
    boundary_rows = []
    for k, saddle in enumerate(saddles[:count]):
        raster = saddle_plane_section(saddle, w, cfg, catalog=catalog, settings=settings, workers=ctx.workers)
        write_ppm(raster, ctx.path(f"saddle_{k:02d}.ppm"))
        write_raster_csv(raster, ctx.path(f"saddle_{k:02d}.csv"))
        for entry in boundary_saddle_report(raster, saddles):
            boundary_rows.append([k, *entry.cell, entry.distance, int(entry.flagged)])
    with open(ctx.path("saddle_boundaries.csv"), "w", encoding="utf-8") as fh:
        fh.write("raster,row,col,distance,flagged\n")
        for row in boundary_rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    write_palette_csv(catalog, ctx.path("palette.csv"))
    ctx.metrics.update(
        {"census": census.counts(), "rasters": rasters, "flagged_saddles": sum(r[-1] for r in boundary_rows)}
    )


def _axes(config: ExperimentConfig) -> SubspaceAxes:
    return SubspaceAxes(tuple(tuple(p) for p in config.manifolds.axes))


def cmd_manifold(ctx: RunContext) -> None:
    traj = ctx.load_trajectory()
    cfg = traj.cfg
    axes = _axes(ctx.config)
    part = traj.select(*parse_range(ctx.args.t_range)) if ctx.args.t_range else traj
    crossings = crossing_detect(part, lambda w: pitchfork_test(w, cfg), ctx.config.manifolds.crossing_width)
    write_crossings_csv(crossings, ctx.path("crossings.csv"))
    projection = project_trajectory(traj, axes)
    write_projection_csv(projection, axes, ctx.path("projection.csv"))
    ctx.metrics["crossings"] = [{"t": c.t_cross, "direction": c.direction} for c in crossings]

    t_n = ctx.args.t if ctx.args.t is not None else ctx.config.manifolds.t_n
    if t_n is None:
        return
    section = saddle_node_section(
        traj, t_n, axes, cfg, settings=ctx.config.manifolds, fp_settings=ctx.config.fixed_points
    )
    write_section_csv(section, ctx.path("section.csv"))
    write_section_mesh(section, ctx.path("section_mesh.obj"))
    point = projection[traj.index_of(t_n), 1:]
    ctx.metrics.update(
        {
            "section_curves": len(section.curves),
            "section_max_residual": section.max_residual,
            "trajectory_distance": section_distance(section, point) if section.curves else None,
        }
    )


def cmd_demo_n3(ctx: RunContext) -> None:
    network = ctx.config.network.model_copy(update=DEMO_OVERRIDES)
    training = ctx.config.training.model_copy(update={"K": DEMO_K, "csv_path": None})
    config = ctx.config.model_copy(update={"network": network, "training": training})
    config.dump(ctx.path("config.json"))
    traj = train(ctx, config)
    cfg = traj.cfg

    surface = pitchfork_surface_N3(cfg, settings=config.manifolds, workers=ctx.workers)
    write_section_csv(surface, ctx.path("pitchfork_surface.csv"))
    write_section_mesh(surface, ctx.path("pitchfork_surface.obj"))
    axes = SubspaceAxes(((0, 1), (0, 2), (1, 2)))
    write_projection_csv(project_trajectory(traj, axes), axes, ctx.path("projection.csv"))

    crossings = crossing_detect(traj, lambda w: pitchfork_test(w, cfg), config.manifolds.crossing_width)
    write_crossings_csv(crossings, ctx.path("crossings.csv"))

    times = np.arange(0.0, cfg.T_train + 1e-9, 1.0)
    timeline = census_timeline(traj, cfg, times, config.fixed_points, config.seed_for("seed_battery"))
    write_census_csv(timeline, ctx.path("census_timeline.csv"))
    stages = census_timeline(traj, cfg, DEMO_STAGES, config.fixed_points, config.seed_for("seed_battery"))
    write_census_csv(stages, ctx.path("census_stages.csv"))

    stride = max(1, int(round(0.5 / traj.sample_dt)))
    ctx.config = config
    _, events = scan(ctx, traj, None, stride)
    log = forgetting_log(
        traj, cfg, traj.training_set(), events, config.seed_for("perturbations"),
        config.memory, config.fixed_points, workers=ctx.workers,
    )
    write_forgetting_csv(log, ctx.path("forgetting.csv"))
    ctx.metrics.update(
        {
            "crossings": [{"t": c.t_cross, "direction": c.direction} for c in crossings],
            "census_values": sorted({c.stable for _, c in timeline}),
            "forgetting_incidents": len(log.incidents),
            "forgetting": [{"t_star": r.t_star, "label": r.label_text} for r in log.incidents],
            "unlabeled_incidents": len(log.unlabeled),
            "surface_curves": len(surface.curves),
        }
    )


def cmd_schema(ctx: RunContext) -> None:
    print(json.dumps(ExperimentConfig.model_json_schema(by_alias=True), indent=2))


COMMANDS: Dict[str, Callable[[RunContext], None]] = {
    "train": cmd_train,
    "scan": cmd_scan,
    "memories": cmd_memories,
    "basins": cmd_basins,
    "manifold": cmd_manifold,
    "demo-n3": cmd_demo_n3,
    "schema": cmd_schema,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config (JSON)")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--seed", type=int, help="Root seed, overrides the config")
    common.add_argument("--workers", type=int, help="Worker processes (fallback: HBL_WORKERS)")
    common.add_argument("--snapshot", help="Trajectory file (default: OUT/trajectory.hbl)")
    common.add_argument("--t-range", dest="t_range", help="Learning-time window A:B")
    common.add_argument("--t", type=float, help="Learning time of the analysed snapshot")
    common.add_argument("--log-level", dest="log_level", help="Logging level (fallback: HBL_LOG_LEVEL)")

    parser = argparse.ArgumentParser(prog="hebblab", description="Hebbian Hopfield bifurcation laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="Integrate the learning system")
    scan_parser = sub.add_parser("scan", parents=[common], help="Track fixed points and detect bifurcations")
    scan_parser.add_argument("--stride", type=int, default=1, help="Use every n-th sample")
    memories = sub.add_parser("memories", parents=[common], help="Label memories at one or more times")
    memories.add_argument("--times", help="Comma-separated learning times")
    memories.add_argument("--forgetting", action="store_true", help="Also build the forgetting log")
    memories.add_argument("--stride", type=int, default=1, help="Sample stride of the forgetting scan")
    basins = sub.add_parser("basins", parents=[common], help="Rasterize basin cross-sections")
    basins.add_argument("--saddle-planes", dest="saddle_planes", type=int, help="Number of saddle-centred planes")
    sub.add_parser("manifold", parents=[common], help="Pitchfork crossings and a saddle-node section")
    sub.add_parser("demo-n3", parents=[common], help="Three-neuron reproduction bundle")
    sub.add_parser("schema", parents=[common], help="Print the config JSON schema")
    return parser


def write_summary(ctx: Optional[RunContext], out_dir: str, summary: Dict[str, Any]) -> None:
    if ctx is not None:
        summary.update({"outputs": ctx.outputs, "metrics": ctx.metrics, "config": ctx.config.model_dump(by_alias=True)})
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "run_summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, default=str)
    except OSError as e:
        logger.error(f"Could not write run summary: {e}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or env_log_level()).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    started = time.time()
    ctx: Optional[RunContext] = None
    summary: Dict[str, Any] = {"command": args.command, "version": __version__}
    code = EXIT_OK
    try:
        config = load_config(args)
        ctx = RunContext(args, config)
        COMMANDS[args.command](ctx)
    except (ConfigurationError, DomainError, FileNotFoundError) as e:
        logger.error(str(e))
        summary["error"] = str(e)
        code = EXIT_USAGE
    except HBLError as e:
        logger.error(f"{type(e).__name__}: {e}")
        summary["error"] = str(e)
        code = EXIT_NUMERICAL
    summary.update({"exit_code": code, "elapsed_s": round(time.time() - started, 3)})
    if args.command != "schema":
        write_summary(ctx, ctx.out_dir if ctx else (args.out or "output"), summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
