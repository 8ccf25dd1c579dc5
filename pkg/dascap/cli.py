# dascap/cli.py
import argparse
import logging
import sys
from typing import List, Optional

import yaml
from pydantic import ValidationError

from . import settings
from .exceptions import BracketError, ConfigError, DasError
from .recipes import get_recipe, list_recipes
from .runner import run_experiment
from .schemas import ExperimentConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        location = ".".join(str(part) for part in err["loc"]) or "(document)"
        lines.append(f"{location}: {err['msg']}")
    return "; ".join(lines)


def load_config(path: str) -> ExperimentConfig:
    """Read a YAML experiment document and validate it, including every sweep point."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"Config file {path} is not valid YAML: {exc}")
    if not isinstance(document, dict):
        raise ConfigError(f"Config file {path} must contain a mapping at the top level")
    try:
        config = ExperimentConfig.model_validate(document)
        config.expand_sweep()
    except ValidationError as exc:
        raise ConfigError(f"Invalid config {path}: {_format_validation(exc)}")
    return config


def _resolve(args: argparse.Namespace) -> ExperimentConfig:
    if args.recipe:
        try:
            config = get_recipe(args.recipe).config()
        except ValidationError as exc:
            raise ConfigError(f"Recipe {args.recipe} is invalid: {_format_validation(exc)}")
    elif args.config:
        config = load_config(args.config)
    else:
        raise ConfigError("Pass a config path or --recipe NAME")
    if getattr(args, "seed_override", None) is not None:
        try:
            config = config.model_copy(update={"mc": config.mc.model_validate({**config.mc.model_dump(),
                                                                               "seed": args.seed_override})})
        except ValidationError as exc:
            raise ConfigError(f"Invalid --seed-override: {_format_validation(exc)}")
    try:
        config.expand_sweep()
    except ValidationError as exc:
        raise ConfigError(f"Invalid sweep point: {_format_validation(exc)}")
    return config


# ---- Sub-commands ------------------------------------------------------------
def cmd_run(args: argparse.Namespace) -> int:
    config = _resolve(args)
    outputs = run_experiment(config, output_dir=args.output_dir, n_workers=args.threads, recipe=args.recipe)
    print(outputs.results)
    if outputs.trajectory is not None:
        print(outputs.trajectory)
    print(outputs.manifest)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _resolve(args)
    n_points = len(config.expand_sweep())
    print(f"OK: {config.experiment} experiment, {n_points} sweep point(s)")
    return EXIT_OK


def cmd_list_recipes(args: argparse.Namespace) -> int:
    for recipe in list_recipes():
        print(f"{recipe.name:<26} {recipe.description}")
    return EXIT_OK


def cmd_show_recipe(args: argparse.Namespace) -> int:
    config = get_recipe(args.name).config()
    print(yaml.safe_dump(config.model_dump(mode="json", exclude_none=True), sort_keys=False), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dascap", description="Distributed antenna system capacity experiments")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level (default from DASCAP_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment config or a built-in recipe")
    run.add_argument("config", nargs="?", help="Path to a YAML experiment config")
    run.add_argument("--recipe", help="Run a built-in recipe instead of a config file")
    run.add_argument("--output-dir", default=None, help="Output directory (default from config or DASCAP_OUTPUT_DIR)")
    run.add_argument("--threads", type=int, default=settings.DEFAULT_THREADS, help="Worker processes")
    run.add_argument("--seed-override", type=int, default=None, help="Replace mc.seed")
    run.set_defaults(func=cmd_run)

    validate = sub.add_parser("validate", help="Validate a config without running it")
    validate.add_argument("config", nargs="?", help="Path to a YAML experiment config")
    validate.add_argument("--recipe", help="Validate a built-in recipe")
    validate.add_argument("--seed-override", type=int, default=None, help="Replace mc.seed")
    validate.set_defaults(func=cmd_validate)

    listing = sub.add_parser("list-recipes", help="List built-in reproductions")
    listing.set_defaults(func=cmd_list_recipes)

    show = sub.add_parser("show-recipe", help="Print a built-in recipe as YAML")
    show.add_argument("name")
    show.set_defaults(func=cmd_show_recipe)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s - %(levelname)s - %(message)s")
    if getattr(args, "threads", 1) < 1:
        logger.error("--threads must be at least 1")
        return EXIT_INVALID
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error(str(exc))
        return EXIT_INVALID
    except BracketError as exc:
        logger.error(f"Bisection failed: {exc}")
        return EXIT_RUNTIME
    except DasError as exc:
        logger.error(f"Experiment failed: {exc}", exc_info=True)
        return EXIT_RUNTIME
    except ValueError as exc:
        logger.error(f"Experiment failed: {exc}", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
