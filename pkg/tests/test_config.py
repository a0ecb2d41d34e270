"""Test experiment configuration parsing and validation."""

from __future__ import annotations

from pathlib import Path

import pytest

from atlaslib import config
from atlaslib.errors import DomainError, ValidationError

# --- Parsing tests ---


def test_parse_value() -> None:
    """Values parse as int, then float, then string; commas make lists."""
    assert config.parse_value("3") == 3
    assert config.parse_value("0.25") == 0.25
    assert config.parse_value("knn") == "knn"
    assert config.parse_value("0.2,0.4, 0.6") == [0.2, 0.4, 0.6]
    assert config.parse_value("kernel,forest") == ["kernel", "forest"]


def test_parse_override() -> None:
    """Overrides are key=value."""
    assert config.parse_override("n=600") == ("n", 600)
    assert config.parse_override(" tau = 0.2,0.6") == ("tau", [0.2, 0.6])
    with pytest.raises(ValidationError, match="key=value"):
        config.parse_override("n")
    with pytest.raises(ValidationError):
        config.parse_override("=3")


def test_load_file(tmp_path: Path) -> None:
    """Flat TOML files load as a dict."""
    path = tmp_path / "run.toml"
    path.write_text('experiment = "ot-tube"\nn = 500\ntau = [0.2, 0.4]\n')
    assert config.load_file(path) == {
        "experiment": "ot-tube",
        "n": 500,
        "tau": [0.2, 0.4],
    }


def test_load_file_errors(tmp_path: Path) -> None:
    """Missing, malformed and nested files are rejected."""
    with pytest.raises(ValidationError, match="does not exist"):
        config.load_file(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("n = \n")
    with pytest.raises(ValidationError, match="not valid TOML"):
        config.load_file(bad)
    nested = tmp_path / "nested.toml"
    nested.write_text("[grid]\nN_R = 9\n")
    with pytest.raises(ValidationError, match="must be flat"):
        config.load_file(nested)


# --- Validation tests ---


def test_defaults_validate() -> None:
    """Every experiment's defaults pass validation."""
    for experiment in config.EXPERIMENTS:
        params = config.validate(experiment, {})
        assert set(params) == set(config.DEFAULTS[experiment])


def test_validate_unknown_experiment_and_key() -> None:
    """Unknown experiments and keys list what is accepted."""
    with pytest.raises(ValidationError, match="unknown experiment"):
        config.validate("figure-7", {})
    with pytest.raises(ValidationError, match="accepted"):
        config.validate("motivating", {"N_R": 9})


@pytest.mark.parametrize(
    ("key", "value"),
    [
        ("n", 0),
        ("n", 1.5),
        ("n", True),
        ("runs", "many"),
        ("b_n", 0),
        ("b_n", -0.1),
        ("k", [0, -1]),
    ],
)
def test_validate_rejects_values(key: str, value: object) -> None:
    """Out-of-range and mistyped values are validation errors."""
    with pytest.raises(ValidationError, match=key):
        config.validate("locstat-mc", {key: value})


def test_validate_levels() -> None:
    """Levels outside (0, 1) are domain errors."""
    with pytest.raises(DomainError):
        config.validate("motivating", {"tau": [0.5, 1.0]})
    assert config.validate("motivating", {"tau": 0.3})["tau"] == [0.3]


def test_validate_methods() -> None:
    """Methods are checked and deduplicated."""
    params = config.validate("ot-tube", {"methods": ["knn", "knn", "forest"]})
    assert params["methods"] == ["knn", "forest"]
    with pytest.raises(ValidationError, match="unknown methods"):
        config.validate("ot-tube", {"methods": "svm"})


def test_tau_must_be_a_grid_level() -> None:
    """OT levels must be j / (N_R + 1)."""
    with pytest.raises(DomainError, match="grid level"):
        config.validate("ot-tube", {"tau": [0.25]})
    assert config.validate("ot-tube", {"tau": [0.25], "N_R": 3})["tau"] == [0.25]


@pytest.mark.parametrize(
    ("values", "match"),
    [
        ({"N_0": 9}, "N_0"),
        ({"k_nn": 4000}, "k_nn"),
        ({"min_leaf": 5000}, "min_leaf"),
        ({"mtry": 3}, "mtry"),
    ],
)
def test_ot_cross_checks(values: dict, match: str) -> None:
    """Grid and learner sizes must fit the sample."""
    with pytest.raises(ValidationError, match=match):
        config.validate("ot-tube", values)


def test_odd_tube_with_scalar_covariate() -> None:
    """m = 1 with an odd number of tube points is rejected."""
    with pytest.raises(ValidationError, match="odd"):
        config.validate("ot-tube", {"m": 1, "n_x": 5})
    assert config.validate("ot-tube", {"m": 1, "n_x": 6})["n_x"] == 6


def test_contour_point_dimension() -> None:
    """The contour point must have m coordinates."""
    with pytest.raises(ValidationError, match="coordinates"):
        config.validate("ot-contour", {"m": 3})
    params = config.validate("ot-contour", {"m": 3, "x": [0.1, 0.2, 0.3]})
    assert params["x"] == [0.1, 0.2, 0.3]


def test_table_sweeps() -> None:
    """ot-tables accepts lists for n and m and checks each entry."""
    params = config.validate("ot-tables", {"n": [200, 300], "m": 2})
    assert params["n"] == [200, 300]
    assert params["m"] == [2]
    with pytest.raises(ValidationError, match="`m`"):
        config.validate("ot-tables", {"m": [1, 0]})
    with pytest.raises(ValidationError, match="integer"):
        config.validate("ot-tube", {"n": [200, 300]})


# --- Resolution tests ---


def test_resolve_precedence(tmp_path: Path) -> None:
    """Command-line values beat the file, which beats the defaults."""
    path = tmp_path / "run.toml"
    path.write_text('experiment = "locstat-mc"\nn = 800\nruns = 3\nseed = 4\n')
    cfg = config.resolve(
        file_values=config.load_file(path),
        overrides=[("runs", 2)],
        output_dir=tmp_path / "out",
    )
    assert cfg.experiment == "locstat-mc"
    assert cfg.seed == 4
    assert cfg.get("n") == 800
    assert cfg.get("runs") == 2
    assert cfg.get("b_n") == 0.05
    assert cfg.output_dir == tmp_path / "out"
    assert cfg.format == "csv"


def test_resolve_explicit_arguments() -> None:
    """Seed and format arguments override file values."""
    cfg = config.resolve(
        experiment="motivating",
        file_values={"seed": 1, "format": "json"},
        seed=7,
        fmt="csv",
    )
    assert (cfg.seed, cfg.format, cfg.output_dir) == (7, "csv", Path("out"))


def test_resolve_errors() -> None:
    """Missing or conflicting experiments and bad formats are rejected."""
    with pytest.raises(ValidationError, match="no experiment"):
        config.resolve()
    with pytest.raises(ValidationError, match="not `ot-tube`"):
        config.resolve(experiment="ot-tube", file_values={"experiment": "motivating"})
    with pytest.raises(ValidationError, match="unknown format"):
        config.resolve(experiment="motivating", fmt="xml")
    with pytest.raises(ValidationError, match="seed"):
        config.resolve(experiment="motivating", seed=-1)


def test_get_unknown_parameter() -> None:
    """Asking for a key the experiment lacks is an error."""
    cfg = config.resolve(experiment="motivating")
    with pytest.raises(ValidationError, match="not a parameter"):
        cfg.get("N_R")


def test_echo_round_trips() -> None:
    """The echo re-resolves to the same config."""
    cfg = config.resolve(experiment="ot-tube", overrides=[("n", 400)], seed=3)
    echo = cfg.echo()
    again = config.resolve(
        experiment=echo["experiment"],
        file_values=echo["params"],
        seed=echo["seed"],
        output_dir=Path(echo["output_dir"]),
        fmt=echo["format"],
    )
    assert again == cfg


def test_load(tmp_path: Path) -> None:
    """load() validates a file with extra overrides."""
    path = tmp_path / "run.toml"
    path.write_text('experiment = "ot-contour"\nx = [0.5, 0.5]\n')
    cfg = config.load(path, [("N_S", 20)])
    assert cfg.get("x") == [0.5, 0.5]
    assert cfg.get("N_S") == 20
