"""
Command-line entry point: ``lanet <command> [options]``.

Every command accepts --config, --seed, --out and repeated --set key=value
overrides, and writes the fully resolved config into its output directory.
"""
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence
from lanet.api.forecaster import Forecaster
from lanet.config import RunConfig, resolve_run_config
from lanet.core.evaluation.pruning import DEFAULT_THRESHOLDS
from lanet.core.infrastructure.forecast_io import FORECAST_SUFFIX, save_forecast
from lanet.core.infrastructure.plotting import save_plot
from lanet.core.infrastructure.scene_io import SCENE_SUFFIX, load_scene, load_scene_dir, save_scene, write_json
from lanet.core.synth.generator import synthesize_corpus
from lanet.core.training.trainer import write_loss_curve
from lanet.errors import InvalidArgumentError, LanetError

logger = logging.getLogger("lanet.cli")

LOG_ENV = "LANET_LOG"
RESOLVED_CONFIG = "resolved_config.json"
CHECKPOINT_NAME = "checkpoint.pt"


def _log_level() -> str:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    return level if level in ("DEBUG", "INFO", "WARNING") else "WARNING"


def _resolve(args: argparse.Namespace) -> RunConfig:
    return resolve_run_config(args.config, args.set, args.seed)


def _explicit(args: argparse.Namespace, config: RunConfig) -> Optional[RunConfig]:
    """
    The resolved config when the user shaped it, else None (use the checkpoint's).
    """
    return config if (args.config is not None or args.set) else None


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(config: RunConfig, out: Path) -> None:
    write_json(config.dump(), out / RESOLVED_CONFIG)


def _load_dataset(data_dir: Path):
    scenes = load_scene_dir(data_dir)
    if not scenes:
        raise InvalidArgumentError(f"No {SCENE_SUFFIX} files in {Path(data_dir).resolve()}")
    return scenes


def _forecaster(args: argparse.Namespace, config: RunConfig) -> Forecaster:
    if getattr(args, "checkpoint", None) is None:
        return Forecaster(config, _log_level())
    return Forecaster(_explicit(args, config), _log_level(), args.checkpoint)


def cmd_synth(args: argparse.Namespace) -> int:
    config = _resolve(args)
    out = _out_dir(args, "scenes")
    # scenes take the run's problem shape
    spec = config.generator.model_copy(update={"problem": config.problem})
    scenes = synthesize_corpus(config.seed, spec, args.count)
    files = []
    for scene in scenes:
        path = save_scene(scene, out / f"{scene.scenario_id}{SCENE_SUFFIX}")
        files.append(path.name)
    write_json({"seed": config.seed, "count": args.count, "scenes": files}, out / "manifest.json")
    _echo_config(config, out)
    logger.info(f"Wrote {len(files)} scenes to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve(args)
    scenes = _load_dataset(args.data_dir)
    out = _out_dir(args, "run")
    _echo_config(config, out)
    forecaster = Forecaster(config, _log_level())
    curve = forecaster.fit(scenes)
    write_loss_curve(curve, out / "loss_curve.csv")
    forecaster.save(out / CHECKPOINT_NAME)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _resolve(args)
    scenes = _load_dataset(args.data_dir)
    forecaster = _forecaster(args, config)
    report = forecaster.evaluate(scenes)
    out = _out_dir(args, "eval")
    _echo_config(forecaster.config, out)
    report.to_csv(out / "metrics_per_case.csv")
    report.summary_frame(forecaster.config.problem.num_modes).to_csv(out / "metrics.csv", index=False, float_format="%.10g")
    print(report.format_table(forecaster.config.problem.num_modes))
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    config = _resolve(args)
    scenes = _load_dataset(args.data_dir)
    forecaster = _forecaster(args, config)
    out = _out_dir(args, "forecasts")
    _echo_config(forecaster.config, out)
    for scene in scenes:
        save_forecast(forecaster.predict(scene), scene.scenario_id, out / f"{scene.scenario_id}{FORECAST_SUFFIX}")
    logger.info(f"Wrote forecasts for {len(scenes)} scenes to {out}")
    return 0


def cmd_prune_stats(args: argparse.Namespace) -> int:
    config = _resolve(args)
    scenes = _load_dataset(args.data_dir)
    forecaster = _forecaster(args, config)
    table = forecaster.prune_stats(scenes, args.thresholds, include_learned=args.learned)
    out = _out_dir(args, "prune_stats")
    _echo_config(forecaster.config, out)
    table.to_csv(out / "prune_stats.csv", index=False, float_format="%.10g")
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    """
    ``--out`` ending in ``.svg`` names the figure itself; anything else is a
    directory that receives ``<scenario_id>.svg``.
    """
    config = _resolve(args)
    scene = load_scene(args.scene_file)
    if args.out is not None and args.out.suffix.lower() == ".svg":
        svg_path = args.out
        out = svg_path.parent
        out.mkdir(parents=True, exist_ok=True)
    else:
        out = _out_dir(args, "figures")
        svg_path = out / f"{scene.scenario_id}.svg"
    forecast = None
    if args.checkpoint is not None:
        forecaster = _forecaster(args, config)
        config = forecaster.config
        if scene.target_indices:
            forecast = forecaster.predict(scene)
    _echo_config(config, out)
    save_plot(scene, svg_path, forecast)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="TOML or JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="overrides seed and train.seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted config override, repeatable")

    parser = argparse.ArgumentParser(prog="lanet", description="Desk-scale LANet trajectory forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic scenes")
    p.add_argument("--count", type=int, default=10)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train on a scene directory")
    p.add_argument("data_dir", type=Path)
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (
        ("eval", cmd_eval, "report minADE/minFDE/b-minFDE/MR"),
        ("predict", cmd_predict, "write forecast records"),
        ("prune-stats", cmd_prune_stats, "kept-edge fraction and metrics per threshold"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--checkpoint", type=Path, required=True)
        p.add_argument("data_dir", type=Path)
        if name == "prune-stats":
            p.add_argument("--thresholds", type=float, nargs="+", default=list(DEFAULT_THRESHOLDS))
            p.add_argument("--learned", action="store_true", help="append a row at the learned threshold")
        p.set_defaults(func=func)

    p = sub.add_parser("plot", parents=[common], help="render a scene (and forecast) as SVG; --out may name the .svg file")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("scene_file", type=Path)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, _log_level()), stream=sys.stderr)
    try:
        return args.func(args)
    except (LanetError, OSError) as exc:
        print(f"lanet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
