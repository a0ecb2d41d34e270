"""The command line interface for quantile-atlas."""

import _colorize  # ty: ignore[unresolved-import]
import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import config, experiments, forest, metrics, report
from .errors import ValidationError

log = logging.getLogger("cli")

_colorize.set_theme(
    _colorize.Theme(
        argparse=_colorize.Argparse(
            usage=_colorize.ANSIColors.BOLD_GREEN,
            prog=_colorize.ANSIColors.BOLD_CYAN,
            heading=_colorize.ANSIColors.BOLD_GREEN,
            summary_long_option=_colorize.ANSIColors.CYAN,
            summary_short_option=_colorize.ANSIColors.CYAN,
            summary_label=_colorize.ANSIColors.CYAN,
            summary_action=_colorize.ANSIColors.CYAN,
            long_option=_colorize.ANSIColors.BOLD_CYAN,
            short_option=_colorize.ANSIColors.BOLD_CYAN,
            label=_colorize.ANSIColors.CYAN,
            action=_colorize.ANSIColors.BOLD_CYAN,
        )
    )
)


class LogFormatter(logging.Formatter):
    """Custom stdlib log formatter for quantile-atlas."""

    def format(self, record: logging.LogRecord) -> str:
        """Format a log record with a colorized level name."""
        match record.levelno:
            case logging.DEBUG:
                name = _colorize.ANSIColors.MAGENTA + "debug"
            case logging.INFO:
                name = _colorize.ANSIColors.GREEN + "info"
            case logging.WARNING:
                name = _colorize.ANSIColors.YELLOW + "warning"
            case logging.ERROR:
                name = _colorize.ANSIColors.RED + "error"
            case logging.CRITICAL:
                name = _colorize.ANSIColors.BOLD_RED + "critical"
            case _:
                name = _colorize.ANSIColors.RESET + "unknown"

        name += _colorize.ANSIColors.RESET

        self._style._fmt = f"{name}: %(message)s"  # noqa: SLF001
        return super().format(record)


def _get_parser() -> argparse.ArgumentParser:
    """Create a parser for the quantile-atlas CLI."""
    parser = argparse.ArgumentParser(
        prog="quantile-atlas",
        description="Local quantile regression and conditional quantile atlases",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Enable verbose logging"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run",
        allow_abbrev=False,
        help="Run an experiment and write its tables",
        description="Unknown `--key value` options are read as --set key=value",
    )
    run.add_argument("experiment", choices=config.EXPERIMENTS)
    run.add_argument(
        "-c", "--config", type=Path, help="Flat TOML file with parameter values"
    )
    run.add_argument("--seed", type=int, help="Master seed (default 0)")
    run.add_argument("--out", type=Path, help="Output directory (default ./out)")
    run.add_argument("--format", choices=config.FORMATS, help="Table format")
    run.add_argument(
        "--workers", type=int, help="Threads for independent runs and solves"
    )
    run.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a parameter (repeatable, commas make lists)",
    )

    validate = commands.add_parser("validate", help="Check a config file")
    validate.add_argument("config_file", type=Path)

    forest_parser = commands.add_parser("forest", help="Fit or query a forest")
    forest_commands = forest_parser.add_subparsers(dest="forest_command", required=True)

    fit = forest_commands.add_parser("fit", help="Fit a forest and save it as JSON")
    source = fit.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--data", type=Path, help="CSV with x1..xm and y1..yd header columns"
    )
    source.add_argument(
        "--simulate",
        metavar="N,M",
        help="Fit on a fresh sample of the spherical scale model",
    )
    fit.add_argument("--model", type=Path, required=True, help="Output JSON file")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--trees", type=int, default=200)
    fit.add_argument("--min-leaf", type=int, default=5)
    fit.add_argument("--mtry", type=int, help="Features per split (default m/3)")
    fit.add_argument("--max-depth", type=int)
    fit.add_argument("--no-bootstrap", action="store_true")
    fit.add_argument("--workers", type=int, default=1)

    weights = forest_commands.add_parser(
        "weights", help="Print the forest weights at a point"
    )
    weights.add_argument("--model", type=Path, required=True)
    weights.add_argument("--x", required=True, help="Comma-separated point")
    weights.add_argument("--format", choices=config.FORMATS, default="csv")
    weights.add_argument("--out", type=Path, help="Write to a file instead")

    return parser


def _extra_overrides(extra: list[str]) -> list[tuple[str, Any]]:
    """Read leftover `--key value` and `--key=value` tokens as overrides."""
    overrides = []
    tokens = iter(extra)
    for token in tokens:
        if not token.startswith("--") or len(token) == 2:  # noqa: PLR2004
            raise ValidationError(f"unexpected argument `{token}`")
        name = token[2:]
        if "=" in name:
            overrides.append(config.parse_override(name))
            continue
        value = next(tokens, None)
        if value is None:
            raise ValidationError(f"option `{token}` needs a value")
        overrides.append((name, config.parse_value(value)))
    return overrides


def _run(args: argparse.Namespace, extra: list[str]) -> None:
    overrides = _extra_overrides(extra)
    overrides += [config.parse_override(item) for item in args.set]
    if args.workers is not None:
        overrides.append(("workers", args.workers))

    file_values = config.load_file(args.config) if args.config else None
    cfg = config.resolve(
        experiment=args.experiment,
        file_values=file_values,
        overrides=overrides,
        seed=args.seed,
        output_dir=args.out,
        fmt=args.format,
    )
    paths = experiments.run_experiment(cfg)
    log.info("Wrote %d files to %s", len(paths), cfg.output_dir)


def _validate(args: argparse.Namespace) -> None:
    cfg = config.load(args.config_file)
    log.info("%s: valid %s config", args.config_file, cfg.experiment)
    for key, value in cfg.params.items():
        log.debug("  %s = %s", key, value)


def _read_training_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Split a headed CSV into x* and y* columns."""
    if not path.exists():
        raise ValidationError(f"data file `{path}` does not exist")
    with path.open(newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:  # noqa: PLR2004
        raise ValidationError(f"data file `{path}` has no rows")
    header = rows[0]
    xs = [i for i, name in enumerate(header) if name.startswith("x")]
    ys = [i for i, name in enumerate(header) if name.startswith("y")]
    if not xs or not ys:
        raise ValidationError(f"`{path}` needs x* and y* columns, got {header}")
    try:
        data = np.array(rows[1:], dtype=float)
    except ValueError as e:
        raise ValidationError(f"`{path}` has non-numeric cells: {e}") from e
    return data[:, xs], data[:, ys]


def _forest_fit(args: argparse.Namespace) -> None:
    if args.data is not None:
        covariates, responses = _read_training_csv(args.data)
    else:
        size = config.parse_value(args.simulate)
        if (
            not isinstance(size, list)
            or len(size) != 2  # noqa: PLR2004
            or not all(isinstance(v, int) for v in size)
        ):
            raise ValidationError("--simulate expects N,M")
        spec = metrics.DGPSpec15(m=size[1], n=size[0], seed=args.seed)
        covariates, responses = metrics.simulate_dgp15(spec)

    params = forest.ForestParams(
        n_trees=args.trees,
        min_leaf=args.min_leaf,
        mtry=args.mtry,
        bootstrap=not args.no_bootstrap,
        max_depth=args.max_depth,
    )
    timer = report.PhaseTimer()
    with timer.phase("forest-train"):
        model = forest.fit_forest(
            covariates, responses, params, args.seed, workers=args.workers
        )
    forest.save_forest(model, args.model)
    log.info(
        "Saved %d trees to %s (%.2fs)",
        params.n_trees,
        args.model,
        timer.phases["forest-train"],
    )


def _forest_weights(args: argparse.Namespace) -> None:
    model = forest.load_forest(args.model)
    point = config.parse_value(args.x)
    point = point if isinstance(point, list) else [point]
    vector = forest.forest_weights(model, point)

    rows = [(int(j), float(vector.weights[j])) for j in vector.support]
    table = report.Table("weights", ("index", "weight"), rows)
    reporter = report.get_reporter(args.format)
    if args.out is None:
        sys.stdout.write(reporter.render(table))
    else:
        args.out.write_text(reporter.render(table), encoding="utf-8", newline="\n")
        log.info("Wrote %d nonzero weights to %s", len(rows), args.out)


def run(argv: list[str]) -> None:
    """Main entrypoint of the quantile-atlas tool."""
    args, extra = _get_parser().parse_known_args(argv)

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    handler = logging.StreamHandler()
    handler.setFormatter(LogFormatter())
    root_logger.addHandler(handler)
    log.debug("Called with arguments: %s", argv)

    if extra and args.command != "run":
        raise ValidationError(f"unrecognized arguments: {' '.join(extra)}")

    match args.command, getattr(args, "forest_command", None):
        case "run", _:
            _run(args, extra)
        case "validate", _:
            _validate(args)
        case "forest", "fit":
            _forest_fit(args)
        case "forest", "weights":
            _forest_weights(args)
