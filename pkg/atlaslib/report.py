"""Writing of result tables and run manifests."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import metadata
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from .errors import ShapeError, ValidationError

if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping, Sequence
    from pathlib import Path

log = logging.getLogger("report")

ReporterName = Literal["csv", "json"]

MANIFEST = "manifest.json"


def _plain(value: Any) -> Any:  # noqa: ANN401
    """Convert numpy scalars to builtin types."""
    if isinstance(value, np.generic):
        return value.item()
    return value


@dataclass(frozen=True, slots=True)
class Table:
    """A named table of rows under a header."""

    name: str
    columns: tuple[str, ...]
    rows: list[tuple[Any, ...]] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Check every row against the header."""
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ShapeError(
                    f"table {self.name}: row {row} does not match columns "
                    f"{self.columns}"
                )

    @classmethod
    def from_records(
        cls, name: str, records: Sequence[Mapping[str, Any]]
    ) -> Table:
        """Build a table from dicts sharing the same keys."""
        if not records:
            raise ShapeError(f"table {name} has no records")
        columns = tuple(records[0])
        rows = []
        for record in records:
            if tuple(record) != columns:
                raise ShapeError(f"table {name}: record keys differ from {columns}")
            rows.append(tuple(_plain(record[c]) for c in columns))
        return cls(name, columns, rows)


class Reporter:
    """Renders tables in one file format."""

    name: ReporterName
    suffix: str

    def render(self, table: Table) -> str:
        """The file contents for a table."""
        raise NotImplementedError

    def write(self, table: Table, directory: Path) -> Path:
        """Write a table to `directory` and return its path."""
        path = directory / f"{table.name}{self.suffix}"
        path.write_text(self.render(table), encoding="utf-8", newline="\n")
        log.debug("Wrote %d rows to %s", len(table.rows), path)
        return path


class CsvReporter(Reporter):
    """RFC-4180 CSV with LF line endings and repr-exact floats."""

    name: ReporterName = "csv"
    suffix = ".csv"

    def render(self, table: Table) -> str:
        """Header row then data rows."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow(
                repr(float(v)) if isinstance(v, float) else v
                for v in map(_plain, row)
            )
        return buffer.getvalue()


class JsonReporter(Reporter):
    """One JSON document per table."""

    name: ReporterName = "json"
    suffix = ".json"

    def render(self, table: Table) -> str:
        """`{"columns": [...], "rows": [[...], ...]}`."""
        document = {
            "columns": list(table.columns),
            "rows": [[_plain(v) for v in row] for row in table.rows],
        }
        return json.dumps(document) + "\n"


def get_reporter(name: ReporterName) -> Reporter:
    """Get a reporter instance for the given format."""
    match name:
        case "csv":
            return CsvReporter()
        case "json":
            return JsonReporter()
        case _:
            raise ValidationError(f"Unknown format: {name}")


class PhaseTimer:
    """Wall-clock seconds spent in named phases (accumulated)."""

    def __init__(self) -> None:
        """Start with no phases."""
        self.phases: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        """Time the enclosed block under `name`."""
        start = time.monotonic()
        try:
            yield
        finally:
            elapsed = time.monotonic() - start
            self.phases[name] = self.phases.get(name, 0.0) + elapsed
            log.debug("Phase %s took %.3fs", name, elapsed)


def package_version() -> str:
    """Installed version of the distribution, or 'unknown'."""
    try:
        return metadata.version("quantile-atlas")
    except metadata.PackageNotFoundError:
        return "unknown"


class Output:
    """The files of one run in an output directory.

    Everything created through this object is removed by `discard`.
    """

    def __init__(self, directory: Path, reporter: Reporter) -> None:
        """Create the directory if needed."""
        self.directory = directory
        self.reporter = reporter
        self.created: list[Path] = []
        self._made_directory = not directory.exists()
        if directory.exists() and not directory.is_dir():
            raise ValidationError(f"output path `{directory}` is not a directory")
        directory.mkdir(parents=True, exist_ok=True)

    def write_table(self, table: Table) -> Path:
        """Write a data table in the run format."""
        path = self.reporter.write(table, self.directory)
        self.created.append(path)
        return path

    def write_manifest(self, echo: dict[str, Any], phases: dict[str, float]) -> Path:
        """Write manifest.json naming every data file."""
        path = self.directory / MANIFEST
        document = {
            "version": package_version(),
            "config": echo,
            "phases": phases,
            "files": [p.name for p in self.created],
        }
        self.created.append(path)
        path.write_text(
            json.dumps(document, indent=2) + "\n", encoding="utf-8", newline="\n"
        )
        return path

    def discard(self) -> None:
        """Remove created files, and the directory if this run made it."""
        for path in self.created:
            path.unlink(missing_ok=True)
        self.created.clear()
        if self._made_directory and not any(self.directory.iterdir()):
            self.directory.rmdir()
        log.debug("Removed partial outputs in %s", self.directory)
