"""Accuracy metrics for contours, tubes and estimated quantile paths."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError, ShapeError, ValidationError, check_level

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from .transport import Tube


# --- Spherical scale model ---


@dataclass(frozen=True, slots=True)
class DGPSpec15:
    """Y = (|X_1| + ... + |X_m|) e with X uniform on [-1, 1]^m, e ~ N(0, I_2)."""

    m: int
    n: int
    seed: int = 0

    def __post_init__(self) -> None:
        """Check the sizes."""
        if self.m < 1 or self.n < 1:
            raise ValidationError(f"need m >= 1 and n >= 1, got m={self.m}, n={self.n}")


def scale(x: ArrayLike) -> float | NDArray[np.float64]:
    """s(x) = sum_j |x_j| for a point, or per row for a matrix."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim <= 1:
        return float(np.sum(np.abs(arr)))
    return np.sum(np.abs(arr), axis=1)


def simulate_dgp15(
    spec: DGPSpec15,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Draw (X, Y); covariates are drawn before the Gaussian factors."""
    rng = np.random.default_rng(spec.seed)
    covariates = rng.uniform(-1.0, 1.0, size=(spec.n, spec.m))
    noise = rng.standard_normal((spec.n, 2))
    return covariates, scale(covariates)[:, None] * noise


def population_radius(tau: float, x: ArrayLike) -> float:
    """Radius s(x) sqrt(-2 log(1 - tau)) of the true tau-contour at x."""
    tau = check_level(tau)
    return float(scale(x)) * math.sqrt(-2.0 * math.log1p(-tau))


# --- Contour errors ---


@dataclass(frozen=True, slots=True)
class ContourEval:
    """An estimated contour paired with the radius of the true one."""

    points: NDArray[np.float64]
    population_radius: float
    level: float

    def __post_init__(self) -> None:
        """Require a nonempty contour and a positive radius."""
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if points.shape[0] == 0 or points.size == 0:
            raise ShapeError("contour has no points")
        if not self.population_radius > 0:
            raise DomainError(
                f"population radius must be positive, got {self.population_radius}"
            )
        object.__setattr__(self, "points", points)


def msrec(evaluation: ContourEval) -> float:
    """Mean square difference between point norms and the population radius."""
    norms = np.linalg.norm(evaluation.points, axis=1)
    return float(np.mean((norms - evaluation.population_radius) ** 2))


def msret(evaluations: Sequence[ContourEval]) -> float:
    """Mean over conditioning points of msrec / R^2."""
    if not evaluations:
        raise ValidationError("need at least one contour")
    return float(
        np.mean([msrec(e) / e.population_radius**2 for e in evaluations])
    )


def tube_msret(tube: Tube, tau: float) -> float:
    """msret of a tube's tau-contours against the spherical truth."""
    return msret(
        [
            ContourEval(piece.contours[tau], population_radius(tau, piece.x), tau)
            for piece in tube.slices
        ]
    )


# --- Quantile path comparison ---


@dataclass(frozen=True, slots=True)
class ScatterStats:
    """Agreement between true and estimated conditional quantiles."""

    rmse: float
    bias: float
    correlation: float


def quantile_scatter_stats(true_q: ArrayLike, est_q: ArrayLike) -> ScatterStats:
    """RMSE, mean signed error (est - true) and Pearson correlation."""
    truth = np.asarray(true_q, dtype=float).ravel()
    estimate = np.asarray(est_q, dtype=float).ravel()
    if truth.shape != estimate.shape:
        raise ShapeError(f"{truth.shape[0]} true values, {estimate.shape[0]} estimates")
    if truth.shape[0] < 2:  # noqa: PLR2004
        raise ShapeError("need at least two pairs")
    error = estimate - truth
    return ScatterStats(
        rmse=float(np.sqrt(np.mean(error**2))),
        bias=float(np.mean(error)),
        correlation=float(np.corrcoef(truth, estimate)[0, 1]),
    )
