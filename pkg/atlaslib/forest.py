"""Multivariate random forest with Mahalanobis splits and leaf-sharing weights."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from . import task
from .errors import ShapeError, ValidationError
from .weights import Method, WeightVector, as_point, as_sample

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

log = logging.getLogger("forest")

FORMAT = "atlaslib-forest"
FORMAT_VERSION = 1
LEAF = -1


@dataclass(frozen=True, slots=True)
class ForestParams:
    """Growth parameters shared by every tree of a forest."""

    n_trees: int = 200
    min_leaf: int = 5
    mtry: int | None = None  # None means ceil(m / 3)
    bootstrap: bool = True
    max_depth: int | None = None

    def __post_init__(self) -> None:
        """Validate the parameter ranges."""
        if self.n_trees < 1:
            raise ValidationError(f"forest needs B >= 1 trees, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ValidationError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.mtry is not None and self.mtry < 1:
            raise ValidationError(f"mtry must be >= 1, got {self.mtry}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError(f"max_depth must be >= 0, got {self.max_depth}")

    def resolved_mtry(self, m: int) -> int:
        """Number of candidate features per split for an m-dimensional covariate."""
        mtry = self.mtry if self.mtry is not None else max(1, math.ceil(m / 3))
        if mtry > m:
            raise ValidationError(f"mtry={mtry} exceeds covariate dimension {m}")
        return mtry


@dataclass(frozen=True, slots=True)
class Tree:
    """A binary partition stored as parallel node arrays.

    Internal nodes send x left when x[feature] <= threshold. Leaves have
    feature == -1 and hold the (bootstrap) training rows that reached them.
    """

    feature: NDArray[np.intp]
    threshold: NDArray[np.float64]
    left: NDArray[np.intp]
    right: NDArray[np.intp]
    members: tuple[NDArray[np.intp], ...]

    @property
    def n_leaves(self) -> int:
        """Number of leaves."""
        return int(np.count_nonzero(self.feature == LEAF))

    def leaf(self, x: NDArray[np.float64]) -> int:
        """Index of the leaf containing `x`."""
        node = 0
        while self.feature[node] != LEAF:
            if x[self.feature[node]] <= self.threshold[node]:
                node = int(self.left[node])
            else:
                node = int(self.right[node])
        return node


@dataclass(frozen=True, slots=True)
class ForestModel:
    """A fitted forest over n training samples of covariate dimension m."""

    trees: tuple[Tree, ...]
    params: ForestParams
    seed: int
    n_train: int
    dimension: int


def _whiten(responses: NDArray[np.float64]) -> NDArray[np.float64] | None:
    """Map responses so squared Euclidean scatter is the Mahalanobis scatter.

    Uses the node covariance regularised by 1e-6 * trace / d. Returns None
    for a zero-variance node.
    """
    d = responses.shape[1]
    cov = np.atleast_2d(np.cov(responses, rowvar=False))
    trace = float(np.trace(cov))
    if not trace > 0:
        return None
    precision = np.linalg.inv(cov + (1e-6 * trace / d) * np.eye(d))
    return responses @ np.linalg.cholesky(precision)


def _best_split(
    covariates: NDArray[np.float64],
    responses: NDArray[np.float64],
    features: NDArray[np.intp],
    min_leaf: int,
) -> tuple[int, float] | None:
    """Exhaustive search over midpoints of the candidate features."""
    z = _whiten(responses)
    if z is None:
        return None

    n = z.shape[0]
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    best_score = np.inf
    best: tuple[int, float] | None = None

    for f in features:
        order = np.argsort(covariates[:, f], kind="stable")
        xs = covariates[order, f]
        zs = z[order]
        sums = np.cumsum(zs, axis=0)
        squares = np.cumsum(np.sum(zs**2, axis=1))

        left = squares[:-1] - np.sum(sums[:-1] ** 2, axis=1) / n_left
        right_sums = sums[-1] - sums[:-1]
        right = (squares[-1] - squares[:-1]) - np.sum(right_sums**2, axis=1) / n_right

        valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not np.any(valid):
            continue
        score = np.where(valid, left + right, np.inf)
        i = int(np.argmin(score))
        if score[i] < best_score:
            best_score = float(score[i])
            best = (int(f), float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _grow_tree(
    covariates: NDArray[np.float64],
    responses: NDArray[np.float64],
    params: ForestParams,
    rng: np.random.Generator,
) -> Tree:
    n, m = covariates.shape
    mtry = params.resolved_mtry(m)
    rows = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)

    feature: list[int] = [LEAF]
    threshold: list[float] = [np.nan]
    left: list[int] = [LEAF]
    right: list[int] = [LEAF]
    members: dict[int, NDArray[np.intp]] = {}

    stack = [(0, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        split = None
        deep_enough = params.max_depth is not None and depth >= params.max_depth
        if idx.shape[0] >= 2 * params.min_leaf and not deep_enough:
            candidates = rng.choice(m, size=mtry, replace=False)
            split = _best_split(
                covariates[idx], responses[idx], candidates, params.min_leaf
            )
        if split is None:
            members[node] = np.sort(idx)
            continue

        f, thr = split
        goes_left = covariates[idx, f] <= thr
        children = []
        for _ in range(2):
            children.append(len(feature))
            feature.append(LEAF)
            threshold.append(np.nan)
            left.append(LEAF)
            right.append(LEAF)
        feature[node], threshold[node] = f, thr
        left[node], right[node] = children
        stack.append((children[1], idx[~goes_left], depth + 1))
        stack.append((children[0], idx[goes_left], depth + 1))

    empty = np.empty(0, dtype=np.intp)
    return Tree(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        members=tuple(members.get(i, empty) for i in range(len(feature))),
    )


def fit_forest(
    covariates: ArrayLike,
    responses: ArrayLike,
    params: ForestParams,
    seed: int,
    *,
    workers: int = 1,
) -> ForestModel:
    """Grow `params.n_trees` trees, tree b drawing from stream (seed, b)."""
    x = as_sample(covariates)
    y = np.asarray(responses, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[1] == 0:  # noqa: PLR2004
        raise ValidationError(f"responses must be n x d with d >= 1, got {y.shape}")
    if y.shape[0] != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} covariate rows but {y.shape[0]} responses")
    n, m = x.shape
    if n < params.min_leaf:
        raise ValidationError(f"need n >= min_leaf={params.min_leaf}, got n={n}")
    params.resolved_mtry(m)

    def grow(b: int) -> Tree:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        return _grow_tree(x, y, params, rng)

    log.debug("Growing %d trees on n=%d, m=%d", params.n_trees, n, m)
    trees = task.run_tasks(grow, range(params.n_trees), workers=workers)
    return ForestModel(tuple(trees), params, seed, n, m)


def forest_weights(model: ForestModel, x: ArrayLike) -> WeightVector:
    """Average over trees of the uniform distribution on x's leaf members."""
    point = as_point(x, model.dimension)
    weights = np.zeros(model.n_train)
    for tree in model.trees:
        members = tree.members[tree.leaf(point)]
        weights += np.bincount(members, minlength=model.n_train) / members.shape[0]
    return WeightVector(weights / len(model.trees), "forest", point)


@dataclass(frozen=True, slots=True)
class ForestWeighting:
    """Forest weights from a fitted model."""

    model: ForestModel
    method: Method = "forest"

    @property
    def dimension(self) -> int:
        """Covariate dimension."""
        return self.model.dimension

    def __call__(self, x: ArrayLike) -> WeightVector:
        """Forest weights at `x`."""
        return forest_weights(self.model, x)


# --- serialization ---


def _tree_to_dict(tree: Tree) -> dict[str, Any]:
    return {
        "feature": tree.feature.tolist(),
        "threshold": [None if np.isnan(t) else t for t in tree.threshold.tolist()],
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "members": [m.tolist() for m in tree.members],
    }


def _tree_from_dict(data: dict[str, Any]) -> Tree:
    return Tree(
        feature=np.asarray(data["feature"], dtype=np.intp),
        threshold=np.asarray(
            [np.nan if t is None else t for t in data["threshold"]], dtype=float
        ),
        left=np.asarray(data["left"], dtype=np.intp),
        right=np.asarray(data["right"], dtype=np.intp),
        members=tuple(np.asarray(m, dtype=np.intp) for m in data["members"]),
    )


def save_forest(model: ForestModel, path: Path) -> None:
    """Write a fitted forest as JSON."""
    document = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "seed": model.seed,
        "n_train": model.n_train,
        "dimension": model.dimension,
        "params": asdict(model.params),
        "trees": [_tree_to_dict(t) for t in model.trees],
    }
    path.write_text(json.dumps(document), encoding="utf-8")
    log.debug("Saved forest of %d trees to %s", len(model.trees), path)


def load_forest(path: Path) -> ForestModel:
    """Read a forest written by `save_forest`."""
    if not path.exists():
        raise ValidationError(f"forest file `{path}` does not exist")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"forest file `{path}` is not valid JSON: {e}") from e
    if document.get("format") != FORMAT or document.get("version") != FORMAT_VERSION:
        raise ValidationError(f"`{path}` is not a version {FORMAT_VERSION} forest")
    return ForestModel(
        trees=tuple(_tree_from_dict(t) for t in document["trees"]),
        params=ForestParams(**document["params"]),
        seed=int(document["seed"]),
        n_train=int(document["n_train"]),
        dimension=int(document["dimension"]),
    )
