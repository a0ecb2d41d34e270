"""Conditional weights w_j(x) over a training sample (kernel and kNN)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal, Protocol

import numpy as np

from .errors import DegenerateNeighborhoodError, ShapeError, ValidationError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

Method = Literal["kernel", "knn", "forest"]

SUM_TOL = 1e-12


@dataclass(frozen=True, slots=True)
class WeightVector:
    """Nonnegative weights summing to one, tagged with how they were made."""

    weights: NDArray[np.float64]
    method: Method
    conditioning_point: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Check simplex membership."""
        weights = np.asarray(self.weights, dtype=float).ravel()
        if np.any(weights < 0):
            raise ValidationError("weights must be nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValidationError(f"weights must sum to 1, got {total!r}")
        object.__setattr__(self, "weights", weights)
        point = np.asarray(self.conditioning_point, dtype=float).ravel()
        object.__setattr__(self, "conditioning_point", point)

    @property
    def support(self) -> NDArray[np.intp]:
        """Indices carrying positive weight."""
        return np.flatnonzero(self.weights > 0)


class Weighting(Protocol):
    """A weight method bound to a training sample."""

    method: Method

    @property
    def dimension(self) -> int:
        """Covariate dimension m."""
        ...

    def __call__(self, x: ArrayLike) -> WeightVector:
        """Weights of every training sample at the conditioning point `x`."""
        ...


def _floats(values: ArrayLike, what: str) -> NDArray[np.float64]:
    try:
        return np.asarray(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{what} must be numeric: {e}") from e


def as_sample(samples: ArrayLike) -> NDArray[np.float64]:
    """An n x m float matrix (a vector is read as n samples of dimension 1)."""
    arr = _floats(samples, "samples")
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:  # noqa: PLR2004
        raise ShapeError(f"expected a nonempty n x m sample, got shape {arr.shape}")
    return arr


def as_point(x: ArrayLike, dimension: int) -> NDArray[np.float64]:
    """A conditioning point of the given dimension."""
    point = np.atleast_1d(_floats(x, "conditioning point")).ravel()
    if point.shape[0] != dimension:
        raise ShapeError(
            f"conditioning point has dimension {point.shape[0]}, samples have "
            f"{dimension}"
        )
    return point


def kernel_weights(x: ArrayLike, samples: ArrayLike, bandwidth: float) -> WeightVector:
    """Normalised m-variate standard Gaussian kernel K((X_i - x)/b)."""
    if not bandwidth > 0:
        raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
    data = as_sample(samples)
    point = as_point(x, data.shape[1])
    z = (data - point) / bandwidth
    m = data.shape[1]
    density = np.exp(-0.5 * np.sum(z**2, axis=1)) / (2.0 * np.pi) ** (m / 2.0)
    total = float(density.sum())
    if not total > 0 or not np.isfinite(total):
        raise DegenerateNeighborhoodError(
            f"every Gaussian kernel weight underflows at x={point.tolist()} "
            f"with bandwidth {bandwidth}"
        )
    return WeightVector(density / total, "kernel", point)


def knn_weights(x: ArrayLike, samples: ArrayLike, k: int) -> WeightVector:
    """Weight 1/k on each of the k nearest samples, ties to the smallest index."""
    data = as_sample(samples)
    n = data.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= n={n}, got k={k}")
    point = as_point(x, data.shape[1])
    distances = np.sum((data - point) ** 2, axis=1)
    nearest = np.argsort(distances, kind="stable")[:k]
    weights = np.zeros(n)
    weights[nearest] = 1.0 / k
    return WeightVector(weights, "knn", point)


@dataclass(frozen=True, slots=True)
class KernelWeighting:
    """Gaussian kernel weights over a fixed sample."""

    samples: NDArray[np.float64]
    bandwidth: float
    method: Method = "kernel"

    @property
    def dimension(self) -> int:
        """Covariate dimension."""
        return self.samples.shape[1]

    def __call__(self, x: ArrayLike) -> WeightVector:
        """Kernel weights at `x`."""
        return kernel_weights(x, self.samples, self.bandwidth)


@dataclass(frozen=True, slots=True)
class KnnWeighting:
    """k-nearest-neighbour weights over a fixed sample."""

    samples: NDArray[np.float64]
    k: int
    method: Method = "knn"

    @property
    def dimension(self) -> int:
        """Covariate dimension."""
        return self.samples.shape[1]

    def __call__(self, x: ArrayLike) -> WeightVector:
        """kNN weights at `x`."""
        return knn_weights(x, self.samples, self.k)
