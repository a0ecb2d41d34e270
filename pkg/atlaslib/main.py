"""Entrypoint for the quantile-atlas CLI tool."""

__all__ = ("console_entry",)

import logging
import sys
import traceback

from . import cli
from .errors import AtlasError, ValidationError

log = logging.getLogger("quantile-atlas")

EXIT_RUNTIME = 1
EXIT_INVALID = 2
EXIT_INTERRUPTED = 130


def console_entry() -> None:
    """Entrypoint for CLI usage."""
    try:
        cli.run(sys.argv[1:])
    except ValidationError as e:
        log.debug(traceback.format_exc())
        log.error(e)  # noqa: TRY400
        sys.exit(EXIT_INVALID)
    except (AtlasError, ValueError) as e:
        log.debug(traceback.format_exc())
        log.error(e)  # noqa: TRY400
        sys.exit(EXIT_RUNTIME)
    except KeyboardInterrupt:
        log.error("Interrupted by user.")  # noqa: TRY400
        sys.exit(EXIT_INTERRUPTED)


if __name__ == "__main__":
    console_entry()
