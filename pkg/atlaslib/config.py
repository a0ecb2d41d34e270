"""Loading and validation of experiment configuration."""

from __future__ import annotations

import logging
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal, get_args

from .errors import DomainError, ValidationError, check_level
from .transport import level_index

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable

log = logging.getLogger("config")

ExperimentName = Literal[
    "motivating", "locstat-mc", "ot-contour", "ot-tube", "ot-tables"
]
FormatName = Literal["csv", "json"]
MethodName = Literal["kernel", "knn", "forest"]

EXPERIMENTS: tuple[str, ...] = get_args(ExperimentName)
FORMATS: tuple[str, ...] = get_args(FormatName)
METHODS: tuple[str, ...] = get_args(MethodName)

_OT_DEFAULTS: dict[str, Any] = {
    "n": 3000,
    "m": 2,
    "tau": [0.2, 0.4, 0.6],
    "N_R": 9,
    "N_S": 100,
    "N_0": 0,
    "B": 100,  # 200 at full scale
    "min_leaf": 5,
    "mtry": 0,  # 0 means ceil(m / 3)
    "k_nn": 50,
    "b_n": 0.1,
    "methods": list(METHODS),
    "runs": 1,
    "workers": 1,
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "motivating": {
        "n": 4000,
        "tau": [0.15, 0.5],
        "b_n": 0.1,
        "grid_points": 100,
        "runs": 1,
        "workers": 1,
    },
    "locstat-mc": {
        "n": 1500,  # 3000 at full scale
        "runs": 30,
        "b_n": 0.05,
        "k": [0, 1, 2],
        "tau": [0.5],
        "grid_points": 100,
        "workers": 1,
    },
    "ot-contour": _OT_DEFAULTS | {"x": [0.7, 0.7]},
    "ot-tube": _OT_DEFAULTS | {"n_x": 20},
    "ot-tables": _OT_DEFAULTS
    | {"n": [500, 1000], "m": [1, 2, 5], "n_x": 20, "runs": 5},
}

# ot-tables sweeps over n and m
_SWEEP_KEYS = {"ot-tables": frozenset({"n", "m"})}


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    """A fully resolved and validated experiment."""

    experiment: ExperimentName
    seed: int = 0
    output_dir: Path = Path("out")
    format: FormatName = "csv"
    params: dict[str, Any] = field(default_factory=dict)

    def get(self, key: str) -> Any:  # noqa: ANN401
        """Get a resolved parameter."""
        try:
            return self.params[key]
        except KeyError:
            raise ValidationError(
                f"`{key}` is not a parameter of experiment {self.experiment}"
            ) from None

    def echo(self) -> dict[str, Any]:
        """Everything needed to re-run the experiment."""
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "format": self.format,
            "output_dir": str(self.output_dir),
            "params": dict(self.params),
        }


# --- parsing ---


def _scalar(text: str) -> int | float | str:
    """Parse one override value as int, then float, else keep the string."""
    text = text.strip()
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            continue
    return text


def parse_value(text: str) -> Any:  # noqa: ANN401
    """Parse a command-line value; commas make a list."""
    if "," in text:
        return [_scalar(part) for part in text.split(",") if part.strip()]
    return _scalar(text)


def parse_override(item: str) -> tuple[str, Any]:
    """Split a `key=value` override."""
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ValidationError(f"override `{item}` is not of the form key=value")
    return key.strip(), parse_value(value)


def load_file(path: Path) -> dict[str, Any]:
    """Read a flat TOML experiment file."""
    if not path.exists():
        raise ValidationError(f"config file `{path}` does not exist")
    try:
        values = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"config file `{path}` is not valid TOML: {e}") from e
    nested = [key for key, value in values.items() if isinstance(value, dict)]
    if nested:
        raise ValidationError(
            f"config file `{path}` must be flat, found tables: {', '.join(nested)}"
        )
    log.debug("Read %s from %s", values, path)
    return values


# --- validation ---


def _int(key: str, value: Any, *, minimum: int = 1) -> int:  # noqa: ANN401
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"`{key}` must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"`{key}` must be >= {minimum}, got {value}")
    return value


def _positive(key: str, value: Any) -> float:  # noqa: ANN401
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ValidationError(f"`{key}` must be a number, got {value!r}")
    if not value > 0:
        raise ValidationError(f"`{key}` must be positive, got {value}")
    return float(value)


def _as_list(key: str, value: Any) -> list[Any]:  # noqa: ANN401
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ValidationError(f"`{key}` must not be empty")
    return items


def _levels(key: str, value: Any) -> list[float]:  # noqa: ANN401
    levels = []
    for tau in _as_list(key, value):
        if isinstance(tau, bool) or not isinstance(tau, int | float):
            raise ValidationError(f"`{key}` entries must be numbers, got {tau!r}")
        levels.append(check_level(tau))
    return levels


def _methods(key: str, value: Any) -> list[str]:  # noqa: ANN401
    methods = _as_list(key, value)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValidationError(
            f"unknown methods {unknown}, available: {', '.join(METHODS)}"
        )
    return list(dict.fromkeys(methods))


def _real_list(key: str, value: Any) -> list[float]:  # noqa: ANN401
    out = []
    for v in _as_list(key, value):
        if isinstance(v, bool) or not isinstance(v, int | float):
            raise ValidationError(f"`{key}` entries must be numbers, got {v!r}")
        out.append(float(v))
    return out


_CHECKS: dict[str, Callable[[str, Any], Any]] = {
    "n": _int,
    "m": _int,
    "runs": _int,
    "workers": _int,
    "grid_points": _int,
    "n_x": _int,
    "N_R": _int,
    "N_S": _int,
    "N_0": lambda key, value: _int(key, value, minimum=0),
    "B": _int,
    "min_leaf": _int,
    "mtry": lambda key, value: _int(key, value, minimum=0),
    "k_nn": _int,
    "b_n": _positive,
    "tau": _levels,
    "k": lambda key, value: [_int(key, v, minimum=0) for v in _as_list(key, value)],
    "methods": _methods,
    "x": _real_list,
}


def _check_sweep(key: str, value: Any) -> list[int]:  # noqa: ANN401
    return [_CHECKS[key](key, v) for v in _as_list(key, value)]


def _cross_checks(experiment: str, params: dict[str, Any]) -> None:
    """Checks that involve more than one key."""
    if experiment in {"ot-contour", "ot-tube", "ot-tables"}:
        for tau in params["tau"]:
            try:
                level_index(tau, params["N_R"])
            except DomainError as e:
                raise DomainError(
                    f"`tau` = {tau} is not a grid level j/(N_R+1) with N_R = "
                    f"{params['N_R']}"
                ) from e
        if not params["N_0"] < min(params["N_R"], params["N_S"]):
            raise ValidationError("`N_0` must be smaller than min(N_R, N_S)")
        n_values = params["n"] if isinstance(params["n"], list) else [params["n"]]
        m_values = params["m"] if isinstance(params["m"], list) else [params["m"]]
        if params["k_nn"] > min(n_values):
            raise ValidationError(f"`k_nn` = {params['k_nn']} exceeds n")
        if params["min_leaf"] > min(n_values):
            raise ValidationError(f"`min_leaf` = {params['min_leaf']} exceeds n")
        if params["mtry"] > min(m_values):
            raise ValidationError(f"`mtry` = {params['mtry']} exceeds m")
        if 1 in m_values and params.get("n_x", 0) % 2 == 1:
            raise ValidationError(
                "an odd `n_x` with m = 1 puts a tube point at x = 0, where every "
                "population contour has radius 0"
            )
    if experiment == "ot-contour" and len(params["x"]) != params["m"]:
        raise ValidationError(
            f"`x` has {len(params['x'])} coordinates but m = {params['m']}"
        )
    if experiment == "locstat-mc" and params["n"] < 4:  # noqa: PLR2004
        raise ValidationError("`n` is too short for an AR(3) fit")


def validate(experiment: str, values: dict[str, Any]) -> dict[str, Any]:
    """Merge `values` over the defaults of `experiment` and check every key."""
    if experiment not in DEFAULTS:
        raise ValidationError(
            f"unknown experiment `{experiment}`, available: {', '.join(EXPERIMENTS)}"
        )
    defaults = DEFAULTS[experiment]
    unknown = sorted(set(values) - set(defaults))
    if unknown:
        raise ValidationError(
            f"unknown keys for {experiment}: {', '.join(unknown)}; accepted: "
            + ", ".join(defaults)
        )

    sweeps = _SWEEP_KEYS.get(experiment, frozenset())
    params: dict[str, Any] = {}
    for key, default in defaults.items():
        value = values.get(key, default)
        if key in sweeps:
            params[key] = _check_sweep(key, value)
        else:
            params[key] = _CHECKS[key](key, value)
    _cross_checks(experiment, params)
    return params


def _take(values: dict[str, Any], key: str, default: Any) -> Any:  # noqa: ANN401
    return values.pop(key) if key in values else default


def resolve(
    *,
    experiment: str | None = None,
    file_values: dict[str, Any] | None = None,
    overrides: Iterable[tuple[str, Any]] = (),
    seed: int | None = None,
    output_dir: Path | None = None,
    fmt: str | None = None,
) -> ExperimentConfig:
    """Merge defaults < file < command line into a validated config."""
    values = dict(file_values or {})
    for key, value in overrides:
        values[key] = value

    file_experiment = _take(values, "experiment", None)
    name = experiment or file_experiment
    if name is None:
        raise ValidationError("no experiment given")
    if experiment and file_experiment and experiment != file_experiment:
        raise ValidationError(
            f"config file is for `{file_experiment}`, not `{experiment}`"
        )

    file_seed = _take(values, "seed", 0)
    seed = _int("seed", file_seed if seed is None else seed, minimum=0)
    out = _take(values, "output_dir", "out")
    file_fmt = _take(values, "format", "csv")
    fmt_value = file_fmt if fmt is None else fmt
    if fmt_value not in FORMATS:
        raise ValidationError(f"unknown format `{fmt_value}`, use csv or json")

    params = validate(name, values)
    log.debug("Resolved %s parameters: %s", name, params)
    return ExperimentConfig(
        experiment=name,  # ty: ignore[invalid-argument-type]
        seed=seed,
        output_dir=Path(output_dir if output_dir is not None else out),
        format=fmt_value,
        params=params,
    )


def load(
    path: Path, overrides: Iterable[tuple[str, Any]] = ()
) -> ExperimentConfig:
    """Load and validate a config file."""
    return resolve(file_values=load_file(path), overrides=overrides)
