"""Exceptions raised by atlaslib.

Everything a user can trigger is a `ValueError` so the entrypoint can report it
with a message and an exit code.
"""


class AtlasError(Exception):
    """Base class of all atlaslib failures."""


class ValidationError(AtlasError, ValueError):
    """An input violates a precondition."""


class DomainError(ValidationError):
    """An argument lies outside its domain (e.g. a level outside (0, 1))."""


class ShapeError(ValidationError):
    """Array lengths, grids or dimensions do not match."""


class DegenerateWindowError(ValidationError):
    """Too few observations carry positive kernel weight in a local window."""


class DegenerateNeighborhoodError(ValidationError):
    """Every kernel weight around a conditioning point underflowed to zero."""


class SingularityError(AtlasError, ValueError):
    """A design or moment matrix is rank deficient."""


class SolverError(AtlasError, RuntimeError):
    """A linear program did not terminate with a certified optimum."""


def check_level(tau: float) -> float:
    """Return `tau` as a float if it lies strictly inside (0, 1)."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise DomainError(f"probability level must lie in (0, 1), got {tau}")
    return tau
