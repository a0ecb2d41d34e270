"""Test kernel and nearest-neighbour conditional weights."""

from __future__ import annotations

import numpy as np
import pytest

from atlaslib import weights
from atlaslib.errors import (
    DegenerateNeighborhoodError,
    ShapeError,
    ValidationError,
)

# --- WeightVector ---


def test_weight_vector_validation() -> None:
    """Negative entries and wrong totals are rejected."""
    with pytest.raises(ValidationError, match="nonnegative"):
        weights.WeightVector(np.array([1.5, -0.5]), "kernel", np.zeros(1))
    with pytest.raises(ValidationError, match="sum to 1"):
        weights.WeightVector(np.array([0.5, 0.4]), "kernel", np.zeros(1))


def test_weight_vector_support() -> None:
    """The support lists the indices with positive weight."""
    vector = weights.WeightVector(np.array([0.0, 0.25, 0.75]), "knn", [1.0])
    np.testing.assert_array_equal(vector.support, [1, 2])
    np.testing.assert_array_equal(vector.conditioning_point, [1.0])


def test_as_sample_and_point() -> None:
    """Vectors become one-column samples; point dimensions must match."""
    assert weights.as_sample([1.0, 2.0, 3.0]).shape == (3, 1)
    with pytest.raises(ShapeError):
        weights.as_sample(np.empty((0, 2)))
    with pytest.raises(ShapeError, match="dimension"):
        weights.as_point([0.0, 0.0], 3)


# --- kernel ---


def test_kernel_single_sample() -> None:
    """One sample gets all the weight."""
    vector = weights.kernel_weights([0.3], [[1.0]], 0.1)
    np.testing.assert_array_equal(vector.weights, [1.0])
    assert vector.method == "kernel"


def test_kernel_equidistant_samples() -> None:
    """Two samples at equal distance share the weight."""
    vector = weights.kernel_weights([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]], 0.5)
    np.testing.assert_allclose(vector.weights, [0.5, 0.5])


def test_kernel_weights_decrease_with_distance() -> None:
    """Closer samples get more weight."""
    vector = weights.kernel_weights([0.0], [[0.1], [0.3], [-0.6], [1.0]], 0.5)
    assert np.all(np.diff(vector.weights) < 0)


def test_kernel_concentrates_as_bandwidth_shrinks() -> None:
    """The nearest sample's weight never drops when the bandwidth shrinks."""
    rng = np.random.default_rng(14)
    bandwidths = np.geomspace(2.0, 0.05, 12)
    for _ in range(200):
        m = int(rng.integers(1, 4))
        samples = rng.uniform(size=(int(rng.integers(2, 40)), m))
        x = rng.uniform(size=m)
        nearest = int(np.argmin(np.sum((samples - x) ** 2, axis=1)))
        masses = [
            weights.kernel_weights(x, samples, b).weights[nearest] for b in bandwidths
        ]
        assert np.all(np.diff(masses) >= -1e-12)


def test_kernel_underflow() -> None:
    """A point far outside the sample raises instead of dividing by zero."""
    with pytest.raises(DegenerateNeighborhoodError, match="underflows"):
        weights.kernel_weights([100.0], [[0.0], [0.1]], 0.1)


def test_kernel_bandwidth_must_be_positive() -> None:
    """A zero bandwidth is invalid."""
    with pytest.raises(ValidationError, match="bandwidth"):
        weights.kernel_weights([0.0], [[0.0]], 0.0)


# --- kNN ---


def test_knn_all_neighbours_is_uniform() -> None:
    """k = n puts 1/n on every sample."""
    samples = np.arange(7.0)[:, None]
    vector = weights.knn_weights([2.2], samples, 7)
    np.testing.assert_allclose(vector.weights, np.full(7, 1 / 7))


def test_knn_single_neighbour() -> None:
    """k = 1 is the indicator of the nearest sample."""
    vector = weights.knn_weights([0.9], [[0.0], [1.0], [3.0]], 1)
    np.testing.assert_array_equal(vector.weights, [0.0, 1.0, 0.0])


def test_knn_ties_go_to_smallest_index() -> None:
    """Samples tied at the k-th rank are broken by index."""
    samples = [[5.0], [1.0], [4.0], [0.5], [9.0], [-1.0]]
    vector = weights.knn_weights([0.0], samples, 2)
    np.testing.assert_array_equal(vector.support, [1, 3])
    vector = weights.knn_weights([0.0], samples, 3)
    np.testing.assert_array_equal(vector.support, [1, 3, 5])
    tied = weights.knn_weights([0.0], [[2.0], [1.0], [-1.0], [-2.0]], 1)
    np.testing.assert_array_equal(tied.support, [1])


def test_knn_validation() -> None:
    """k must lie in 1..n."""
    with pytest.raises(ValidationError):
        weights.knn_weights([0.0], [[0.0], [1.0]], 3)
    with pytest.raises(ValidationError):
        weights.knn_weights([0.0], [[0.0], [1.0]], 0)


def test_knn_locality() -> None:
    """Every selected sample is at least as close as every unselected one."""
    rng = np.random.default_rng(3)
    samples = rng.uniform(-1, 1, size=(60, 2))
    x = np.array([0.2, -0.1])
    vector = weights.knn_weights(x, samples, 10)
    dist = np.linalg.norm(samples - x, axis=1)
    inside = vector.weights > 0
    assert dist[inside].max() <= dist[~inside].min()


# --- properties ---


def test_weights_lie_on_the_simplex() -> None:
    """Every method returns nonnegative weights summing to one."""
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        m = int(rng.integers(1, 4))
        samples = rng.uniform(-1, 1, size=(n, m))
        x = rng.uniform(-1, 1, size=m)
        for vector in (
            weights.kernel_weights(x, samples, float(rng.uniform(0.2, 2.0))),
            weights.knn_weights(x, samples, int(rng.integers(1, n + 1))),
        ):
            assert np.all(vector.weights >= 0)
            assert abs(vector.weights.sum() - 1.0) <= 1e-12


def test_bound_weightings() -> None:
    """Weighting objects forward to the weight functions."""
    samples = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    kernel = weights.KernelWeighting(samples, 0.5)
    knn = weights.KnnWeighting(samples, 2)
    assert kernel.dimension == knn.dimension == 2
    expected = weights.kernel_weights([0.1, 0.1], samples, 0.5)
    np.testing.assert_array_equal(kernel([0.1, 0.1]).weights, expected.weights)
    np.testing.assert_array_equal(knn([0.1, 0.1]).support, [0, 1])
    assert knn.method == "knn"
