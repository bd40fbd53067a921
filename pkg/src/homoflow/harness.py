"""Command-line entry point: data generation, runs, grids, verification and sweeps."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cli_utils import configure_logging, is_debug_mode, is_extended_precision
from .config import GENERATED, ExperimentConfig, get_experiment_configs, get_preset, load_config, save_config
from .data import GENERATORS, Dataset, load_dataset
from .errors import HomoflowError, UnsupportedDimension
from .flow import Trajectory, check_init, initial_state, run, warmup_trace
from .losses import LossKind
from .metrics import record_metrics
from .models import (
    PredictorKind,
    PredictorSpec,
    deep_linear_spec,
    init_params,
    ntk_frozen_spec,
    predict,
    random_signs,
    relu_mlp_spec,
    squared_relu_spec,
)
from .params import ParamVec, norm
from .reporting import (
    format_run_summary,
    write_dataset,
    write_grid_csv,
    write_margins_csv,
    write_trajectory_csv,
    write_verify_json,
)
from .verify import VerifyReport, verify_deep_linear, verify_two_homo

logger = logging.getLogger(__name__)

EXIT_ERROR = 1
EXIT_VERIFY_FAILED = 2


@dataclass(eq=False)
class RunResult:
    config: ExperimentConfig
    dataset: Dataset
    spec: PredictorSpec
    W_init: ParamVec
    trajectory: Trajectory
    W_separating: Optional[ParamVec] = None


def load_data(config: ExperimentConfig) -> Dataset:
    data = config.data
    if data.source != GENERATED:
        return load_dataset(data.source)
    try:
        generator = GENERATORS[data.generator]
    except KeyError as exc:
        raise HomoflowError(f"unknown data generator {data.generator!r}") from exc
    return generator(data.seed, data.n_raw, data.margin_floor, append_bias=data.append_bias)


def build_model(config: ExperimentConfig, dataset: Dataset, rng: np.random.Generator) -> Tuple[PredictorSpec, ParamVec]:
    """Architecture and initial parameters for ``config`` on ``dataset``."""
    model = config.model
    kind = PredictorKind(model.kind)
    d = dataset.dim
    if kind in (PredictorKind.SQUARED_RELU, PredictorKind.NTK_FROZEN):
        signs = random_signs(model.width, rng) if model.random_signs else None
        base = squared_relu_spec(d, model.width, signs)
        base_W = init_params(base, rng, model.init_scale)
        if kind is PredictorKind.SQUARED_RELU:
            return base, base_W
        # Outer vectors start at the frozen rows, so both predictors agree at t = 0.
        spec = ntk_frozen_spec(base, base_W)
        return spec, spec.wrap(base_W.data)
    if kind is PredictorKind.DEEP_LINEAR:
        spec = deep_linear_spec((d, *model.hidden, 1))
    else:
        spec = relu_mlp_spec(d, model.hidden, model.pool_window)
    return spec, init_params(spec, rng, model.init_scale)


def untrained_trajectory(spec: PredictorSpec, dataset: Dataset, kind: LossKind, W: ParamVec) -> Trajectory:
    """A one-record trajectory at ``W`` with no training (negative control)."""
    state = initial_state(spec, dataset, kind, W)
    return Trajectory(records=[record_metrics(state, spec, dataset, kind)], final=state)


def execute(config: ExperimentConfig, dataset: Optional[Dataset] = None, *, extended: bool = False) -> RunResult:
    """Generate or load data, initialize, warm up and run the flow."""
    dataset = dataset if dataset is not None else load_data(config)
    rng = np.random.default_rng(config.seed)
    spec, W_init = build_model(config, dataset, rng)
    kind = config.loss_kind
    logger.info("Running %s with %s loss on %d examples", spec.describe(), kind.value, dataset.n)

    if config.verification.untrained_control:
        return RunResult(config, dataset, spec, W_init, untrained_trajectory(spec, dataset, kind, W_init), W_init)

    W0 = first_separating = W_init
    if not check_init(kind, spec, dataset, W0):
        warm = warmup_trace(
            spec,
            dataset,
            W0,
            kind,
            step_size=config.flow.warmup_step,
            max_steps=config.flow.warmup_max_steps,
            clamp=config.flow.clamp,
            max_halvings=config.flow.max_halvings,
        )
        W0, first_separating = warm.W, warm.first_separating
    flow_config = config.flow
    if extended and not flow_config.extended_precision:
        flow_config = dataclasses.replace(flow_config, extended_precision=True)
    trajectory = run(spec, dataset, kind, flow_config, W0)
    return RunResult(config, dataset, spec, W_init, trajectory, first_separating)


def write_run_outputs(result: RunResult, output_dir: Path) -> List[Path]:
    output_dir.mkdir(parents=True, exist_ok=True)
    return [
        save_config(output_dir / "config.json", result.config),
        write_trajectory_csv(output_dir / "trajectory.csv", result.trajectory),
        write_margins_csv(output_dir / "margins.csv", result.trajectory),
    ]


def normalized_grid(
    result: RunResult,
    resolution: int,
    bounds: Tuple[float, float],
    W: Optional[ParamVec] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Phi(embed(x, y); W) / ||W||^L over a resolution x resolution planar grid.

    ``W`` defaults to the final iterate of the run.
    """
    dataset = result.dataset
    if dataset.raw_dim != 2:
        raise UnsupportedDimension(f"prediction grids need planar inputs, got raw dimension {dataset.raw_dim}")
    if resolution < 1:
        raise HomoflowError("resolution must be positive")
    axis = np.linspace(bounds[0], bounds[1], resolution)
    xs, ys = np.meshgrid(axis, axis)
    points = dataset.embed(np.column_stack([xs.ravel(), ys.ravel()]))
    if W is None:
        W = result.trajectory.final.W
    values = predict(result.spec, W, points) / norm(W) ** result.spec.degree
    return xs.ravel(), ys.ravel(), values


def verify_result(result: RunResult, which: str) -> VerifyReport:
    settings = result.config.verification
    if which == "deep-linear":
        return verify_deep_linear(
            result.trajectory,
            result.dataset,
            result.spec,
            tol_rank=settings.tol_rank,
            tol_angle=settings.tol_angle,
        )
    return verify_two_homo(
        result.trajectory,
        result.dataset,
        result.spec,
        result.config.loss_kind,
        cover_grid=settings.cover_grid,
        tol=settings.tol,
    )


def cmd_gen_data(args: argparse.Namespace) -> int:
    generator = GENERATORS[args.generator]
    dataset = generator(args.seed, args.n, args.margin_floor, append_bias=not args.no_bias)
    path = write_dataset(args.out, dataset)
    print(f"✅ Wrote {dataset.n} examples to {path}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(f"🚀 Running {config.name}...")
    result = execute(config, extended=is_extended_precision())
    paths = write_run_outputs(result, Path(config.output_dir))
    print(format_run_summary(result.trajectory, heading=config.name, description=result.spec.describe()))
    for path in paths:
        print(f"✅ {path}")
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    bounds = (args.bounds[0], args.bounds[1])
    print(f"🗺️  Prediction grid for {config.name} ({args.resolution}x{args.resolution})...")
    output_dir = Path(config.output_dir)
    extended = is_extended_precision()
    result = execute(config, extended=extended)
    write_grid_csv(output_dir / "grid.csv", *normalized_grid(result, args.resolution, bounds))
    print(f"✅ {output_dir / 'grid.csv'}")
    # First iterate that classifies every example correctly.
    early = result.W_separating if result.W_separating is not None else result.W_init
    write_grid_csv(output_dir / "grid_early.csv", *normalized_grid(result, args.resolution, bounds, early))
    print(f"✅ {output_dir / 'grid_early.csv'}")

    if args.compare_ntk:
        ntk_model = dataclasses.replace(config.model, kind=PredictorKind.NTK_FROZEN.value)
        ntk_config = dataclasses.replace(config, model=ntk_model)
        ntk_result = execute(ntk_config, result.dataset, extended=extended)
        write_grid_csv(output_dir / "grid_ntk.csv", *normalized_grid(ntk_result, args.resolution, bounds))
        print(f"✅ {output_dir / 'grid_ntk.csv'}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(f"🔎 Verifying {args.which} for {config.name}...")
    result = execute(config, extended=is_extended_precision())
    report = verify_result(result, args.which)
    path = write_verify_json(Path(config.output_dir) / "verify.json", report)
    for name, check in report.checks.items():
        if check.tolerance is None:
            print(f"   • {name}: {check.value:.6g}")
        else:
            marker = "✅" if check.passed else "❌"
            print(f"   {marker} {name}: {check.value:.3e} (tolerance {check.tolerance:.1e})")
    if report.passed:
        print(f"✅ All checks passed ({path})")
        return 0
    print(f"❌ Failed checks: {', '.join(report.failed_checks())} ({path})")
    return EXIT_VERIFY_FAILED


def cmd_presets(args: argparse.Namespace) -> int:
    configs = get_experiment_configs(args.group)
    if not configs:
        print("⚠️  No presets match the requested groups.")
        return 0
    for config in configs:
        print(f"• {config.name} [{', '.join(config.groups)}]: {config.description}")
    return 0


def cmd_init_config(args: argparse.Namespace) -> int:
    path = save_config(args.out, get_preset(args.preset))
    print(f"✅ Wrote preset {args.preset} to {path}")
    return 0


def _sweep_one(config: ExperimentConfig) -> Dict[str, float]:
    result = execute(config, extended=is_extended_precision())
    write_run_outputs(result, Path(config.output_dir))
    last = result.trajectory.records[-1]
    return {"seed": config.seed, "tau": last.tau, "alpha_norm": last.alpha_norm, "zeta": last.zeta}


def sweep_configs(config: ExperimentConfig, seeds: Sequence[int]) -> List[ExperimentConfig]:
    base = Path(config.output_dir)
    return [config.with_seed(seed, str(base / f"seed-{seed}")) for seed in seeds]


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    configs = sweep_configs(config, args.seeds)
    print(f"🚀 Sweeping {config.name} over {len(configs)} seeds with {args.workers} workers...")
    if args.workers <= 1:
        summaries = [_sweep_one(item) for item in configs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            summaries = list(pool.map(_sweep_one, configs))
    for summary in summaries:
        print(
            f"• seed {summary['seed']}: tau={summary['tau']:.3f} "
            f"alpha_norm={summary['alpha_norm']:.6g} zeta={summary['zeta']:.6g}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homoflow", description="Gradient-flow lab for homogeneous predictors")
    parser.add_argument("--debug", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="write a synthetic planar dataset")
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--n", type=int, default=200)
    gen.add_argument("--margin-floor", type=float, default=0.2)
    gen.add_argument("--generator", choices=sorted(GENERATORS), default="planar-relu-labels")
    gen.add_argument("--no-bias", action="store_true", help="keep raw planar points (d=2)")
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen_data)

    run_cmd = commands.add_parser("run", help="run the flow and write trajectory.csv and margins.csv")
    run_cmd.add_argument("--config", required=True)
    run_cmd.set_defaults(handler=cmd_run)

    grid = commands.add_parser("grid", help="write the normalized prediction surface (final and first separating iterate)")
    grid.add_argument("--config", required=True)
    grid.add_argument("--resolution", type=int, default=101)
    grid.add_argument("--bounds", type=float, nargs=2, default=(-1.0, 1.0), metavar=("LOW", "HIGH"))
    grid.add_argument("--compare-ntk", action="store_true", help="also write grid_ntk.csv")
    grid.set_defaults(handler=cmd_grid)

    verify = commands.add_parser("verify", help="check the margin-maximization limits")
    verify.add_argument("which", choices=("deep-linear", "two-homo"))
    verify.add_argument("--config", required=True)
    verify.set_defaults(handler=cmd_verify)

    presets = commands.add_parser("presets", help="list preset experiments")
    presets.add_argument("--group", action="append")
    presets.set_defaults(handler=cmd_presets)

    init = commands.add_parser("init-config", help="write a preset as a config file")
    init.add_argument("--preset", required=True)
    init.add_argument("--out", required=True)
    init.set_defaults(handler=cmd_init_config)

    sweep = commands.add_parser("sweep", help="run one config over several seeds")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--seeds", type=int, nargs="+", required=True)
    sweep.add_argument("--workers", type=int, default=1)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch, and map errors to exit codes."""
    argv = list(argv) if argv is not None else sys.argv[1:]
    args = build_parser().parse_args(argv)
    configure_logging(args.debug or is_debug_mode(argv))
    try:
        return args.handler(args)
    except HomoflowError as exc:
        logger.debug("Command failed", exc_info=True)
        print(f"❌ {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
