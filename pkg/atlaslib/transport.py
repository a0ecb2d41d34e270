"""Discrete center-outward quantiles by exact optimal transport to a ball grid.

A weighted sample {(Y_j, w_j)} is coupled with a uniform discretisation of the
unit ball; each gridpoint's image is the sample point receiving the most mass
from it. Contours, regions and tubes are read off the resulting atlas.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
import ot
from scipy.spatial.distance import cdist

from . import task
from .errors import DomainError, ShapeError, SolverError, ValidationError, check_level
from .hull import min_norm_point
from .weights import SUM_TOL, WeightVector, as_point, as_sample

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from .weights import Weighting

log = logging.getLogger("transport")

MARGINAL_TOL = 1e-9
DUAL_TOL = 1e-9
TIE_TOL = 1e-12
MAX_ITER = 10_000_000
ORIGIN = 0


@dataclass(frozen=True, slots=True)
class GridSpec:
    """Shape of the ball grid: N = n_r * n_s + n_0 points in R^d."""

    d: int
    n_r: int
    n_s: int
    n_0: int = 0

    def __post_init__(self) -> None:
        """Validate the grid factorisation."""
        if self.d < 1 or self.n_r < 1 or self.n_s < 1:
            raise ValidationError(f"grid needs d, n_r, n_s >= 1, got {self}")
        if not 0 <= self.n_0 < min(self.n_r, self.n_s):
            raise ValidationError(
                f"origin copies must satisfy 0 <= n_0 < min(n_r, n_s), got {self.n_0}"
            )
        if self.d == 1 and self.n_s > 2:  # noqa: PLR2004
            raise ValidationError("the unit sphere in R^1 has only 2 directions")

    @property
    def size(self) -> int:
        """Total number of gridpoints N."""
        return self.n_r * self.n_s + self.n_0

    def level(self, j: int) -> float:
        """Radius j / (n_r + 1) of the j-th sphere."""
        return j / (self.n_r + 1)


@dataclass(frozen=True, slots=True)
class SphericalGrid:
    """Gridpoints ordered radius-major: point (j, s) sits at (j-1)*n_s + s."""

    spec: GridSpec
    points: NDArray[np.float64]
    radii: NDArray[np.float64]
    directions: NDArray[np.float64]
    level_index: NDArray[np.intp]  # 1..n_r, or 0 for origin copies
    direction_index: NDArray[np.intp]  # 0..n_s-1, or -1 for origin copies

    @property
    def size(self) -> int:
        """Number of gridpoints."""
        return self.points.shape[0]

    @property
    def levels(self) -> NDArray[np.float64]:
        """Radius level of every gridpoint, 0 for origin copies."""
        return self.level_index / (self.spec.n_r + 1)


def _directions(spec: GridSpec, seed: int) -> NDArray[np.float64]:
    match spec.d:
        case 1:
            return np.array([[1.0], [-1.0]])[: spec.n_s]
        case 2:
            angles = 2.0 * np.pi * np.arange(spec.n_s) / spec.n_s
            return np.column_stack([np.cos(angles), np.sin(angles)])
        case _:
            rng = np.random.default_rng(seed)
            raw = rng.standard_normal((spec.n_s, spec.d))
            return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def build_grid(spec: GridSpec, seed: int = 0) -> SphericalGrid:
    """Radii j/(n_r+1) times n_s directions, then n_0 origin copies.

    Directions are equal angles for d = 2 and seeded uniform draws on the
    sphere for d >= 3; the seed is unused for d <= 2.
    """
    radii = np.arange(1, spec.n_r + 1) / (spec.n_r + 1)
    directions = _directions(spec, seed)
    shells = (radii[:, None, None] * directions[None, :, :]).reshape(-1, spec.d)
    points = np.vstack([shells, np.zeros((spec.n_0, spec.d))])

    level_index = np.concatenate(
        [np.repeat(np.arange(1, spec.n_r + 1), spec.n_s), np.full(spec.n_0, ORIGIN)]
    )
    direction_index = np.concatenate(
        [np.tile(np.arange(spec.n_s), spec.n_r), np.full(spec.n_0, -1)]
    )
    return SphericalGrid(
        spec=spec,
        points=points,
        radii=radii,
        directions=directions,
        level_index=level_index.astype(np.intp),
        direction_index=direction_index.astype(np.intp),
    )


def level_index(tau: float, n_r: int) -> int:
    """The sphere j with j / (n_r + 1) == tau."""
    tau = check_level(tau)
    j = round(tau * (n_r + 1))
    if not 1 <= j <= n_r or abs(j / (n_r + 1) - tau) > 1e-9:
        raise DomainError(f"level {tau} is not a grid radius j/{n_r + 1}")
    return j


@dataclass(frozen=True, slots=True)
class TransportPlan:
    """Sparse optimal coupling between N gridpoints and n weighted samples."""

    rows: NDArray[np.intp]
    cols: NDArray[np.intp]
    mass: NDArray[np.float64]
    objective: float
    n_grid: int
    col_weights: NDArray[np.float64] = field(repr=False)

    @property
    def support_size(self) -> int:
        """Number of positive entries."""
        return self.mass.shape[0]

    @property
    def row_marginal(self) -> NDArray[np.float64]:
        """Mass leaving each gridpoint."""
        return np.bincount(self.rows, weights=self.mass, minlength=self.n_grid)

    @property
    def col_marginal(self) -> NDArray[np.float64]:
        """Mass arriving at each sample."""
        return np.bincount(
            self.cols, weights=self.mass, minlength=self.col_weights.shape[0]
        )

    def dense(self) -> NDArray[np.float64]:
        """The full N x n coupling matrix."""
        out = np.zeros((self.n_grid, self.col_weights.shape[0]))
        out[self.rows, self.cols] = self.mass
        return out


def _weight_array(weights: WeightVector | ArrayLike, n: int) -> NDArray[np.float64]:
    if isinstance(weights, WeightVector):
        w = weights.weights
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > SUM_TOL:
            raise ValidationError("sample weights must be >= 0 and sum to 1")
    if w.shape[0] != n:
        raise ShapeError(f"{w.shape[0]} weights for {n} samples")
    return w


def solve_ot(
    grid: SphericalGrid,
    samples: ArrayLike,
    weights: WeightVector | ArrayLike,
    *,
    max_iter: int = MAX_ITER,
) -> TransportPlan:
    """Exact optimal coupling of uniform grid mass with the weighted sample.

    Cost is half the squared Euclidean distance. Zero-weight samples are
    dropped before solving. The network simplex solution is checked against
    both marginals and against dual feasibility of its potentials.
    """
    ys = as_sample(samples)
    if ys.shape[1] != grid.spec.d:
        raise ShapeError(f"samples live in R^{ys.shape[1]}, grid in R^{grid.spec.d}")
    w = _weight_array(weights, ys.shape[0])
    support = np.flatnonzero(w > 0)

    n_grid = grid.size
    a = np.full(n_grid, 1.0 / n_grid)
    b = w[support]
    cost = 0.5 * cdist(grid.points, ys[support], "sqeuclidean")

    log.debug("Solving OT with N=%d gridpoints and %d sinks", n_grid, len(support))
    plan, info = ot.emd(a, b, cost, numItermax=max_iter, log=True)
    if info["result_code"] != 1:
        raise SolverError(
            f"network simplex ended with code {info['result_code']} "
            f"(limit {max_iter} iterations): {info['warning']}"
        )

    plan = np.asarray(plan, dtype=float)
    row_gap = float(np.max(np.abs(plan.sum(axis=1) - a)))
    col_gap = float(np.max(np.abs(plan.sum(axis=0) - b)))
    if max(row_gap, col_gap) > MARGINAL_TOL:
        raise SolverError(
            f"coupling violates its marginals (row {row_gap:.2e}, col {col_gap:.2e})"
        )

    scale = max(1.0, float(cost.max()))
    reduced = cost - np.asarray(info["u"])[:, None] - np.asarray(info["v"])[None, :]
    slack = float(np.max(np.abs(reduced[plan > 0]))) if np.any(plan > 0) else 0.0
    if reduced.min() < -DUAL_TOL * scale or slack > DUAL_TOL * scale:
        raise SolverError(
            f"coupling failed its dual certificate (min reduced cost "
            f"{reduced.min():.2e}, slackness {slack:.2e})"
        )

    rows, local_cols = np.nonzero(plan > 0)
    return TransportPlan(
        rows=rows.astype(np.intp),
        cols=support[local_cols].astype(np.intp),
        mass=plan[rows, local_cols],
        objective=float(np.sum(plan * cost)),
        n_grid=n_grid,
        col_weights=w,
    )


@dataclass(frozen=True, slots=True)
class QuantileAtlas:
    """Image of every gridpoint under the empirical quantile map."""

    images: NDArray[np.float64]
    level_index: NDArray[np.intp]
    direction_index: NDArray[np.intp]
    n_r: int
    conditioning_point: NDArray[np.float64] | None = None

    @property
    def levels(self) -> NDArray[np.float64]:
        """Radius level of every gridpoint, 0 for origin copies."""
        return self.level_index / (self.n_r + 1)


def extract_quantile_map(
    plan: TransportPlan,
    grid: SphericalGrid,
    samples: ArrayLike,
    conditioning_point: ArrayLike | None = None,
) -> QuantileAtlas:
    """Send each gridpoint to the sample receiving most of its mass.

    Masses within 1e-12 of the row maximum tie, and a tie resolves to the
    minimum-norm point of the convex hull of the tied samples.
    """
    ys = as_sample(samples)
    order = np.lexsort((plan.cols, plan.rows))
    rows, cols, mass = plan.rows[order], plan.cols[order], plan.mass[order]
    bounds = np.searchsorted(rows, np.arange(grid.size + 1))

    images = np.empty((grid.size, ys.shape[1]))
    for i in range(grid.size):
        lo, hi = bounds[i], bounds[i + 1]
        if lo == hi:
            raise SolverError(f"gridpoint {i} sends no mass")
        row_mass = mass[lo:hi]
        tied = cols[lo:hi][row_mass >= row_mass.max() - TIE_TOL]
        images[i] = ys[tied[0]] if tied.shape[0] == 1 else min_norm_point(ys[tied])

    point = None
    if conditioning_point is not None:
        point = np.atleast_1d(np.asarray(conditioning_point, dtype=float))
    return QuantileAtlas(
        images=images,
        level_index=grid.level_index,
        direction_index=grid.direction_index,
        n_r=grid.spec.n_r,
        conditioning_point=point,
    )


def _check_contour_index(atlas: QuantileAtlas, j: int) -> None:
    if not 1 <= j <= atlas.n_r:
        raise DomainError(f"contour index must lie in 1..{atlas.n_r}, got {j}")


def contour(atlas: QuantileAtlas, j: int) -> NDArray[np.float64]:
    """Images of the j-th sphere, in direction order."""
    _check_contour_index(atlas, j)
    mask = np.flatnonzero(atlas.level_index == j)
    mask = mask[np.argsort(atlas.direction_index[mask], kind="stable")]
    return atlas.images[mask]


def region(atlas: QuantileAtlas, j: int) -> NDArray[np.float64]:
    """Images of spheres 1..j together with the origin copies."""
    _check_contour_index(atlas, j)
    return atlas.images[atlas.level_index <= j]


def quantile_atlas(
    grid: SphericalGrid,
    samples: ArrayLike,
    weights: WeightVector,
) -> QuantileAtlas:
    """Solve and extract the atlas for one conditional distribution."""
    plan = solve_ot(grid, samples, weights)
    return extract_quantile_map(plan, grid, samples, weights.conditioning_point)


# --- tubes ---


@dataclass(frozen=True, slots=True)
class TubeSlice:
    """Contours of one conditional distribution."""

    x: NDArray[np.float64]
    atlas: QuantileAtlas
    contours: dict[float, NDArray[np.float64]]


@dataclass(frozen=True, slots=True)
class Tube:
    """Contours indexed by conditioning point and level.

    For a bivariate response the tube is drawn in (x1, y1, y2) coordinates.
    """

    slices: tuple[TubeSlice, ...]
    levels: tuple[float, ...]
    projection: tuple[str, ...] | None

    def project(self, tau: float) -> NDArray[np.float64]:
        """Stack the tau-contours as (x1, y1, y2) rows for plotting."""
        if self.projection is None:
            raise ValidationError("tube projection is defined for d = 2 only")
        parts = []
        for piece in self.slices:
            points = piece.contours[tau]
            parts.append(np.column_stack([np.full(len(points), piece.x[0]), points]))
        return np.vstack(parts)


def quantile_tube(
    x_list: Sequence[ArrayLike],
    weighting: Weighting,
    grid_spec: GridSpec,
    levels: Sequence[float],
    responses: ArrayLike,
    *,
    seed: int = 0,
    workers: int = 1,
) -> Tube:
    """Conditional contours at every x and level, one OT solve per x."""
    if not x_list:
        raise ValidationError("a tube needs at least one conditioning point")
    ys = as_sample(responses)
    points = [as_point(x, weighting.dimension) for x in x_list]
    indices = {tau: level_index(tau, grid_spec.n_r) for tau in levels}
    grid = build_grid(grid_spec, seed)

    def one(x: NDArray[np.float64]) -> TubeSlice:
        atlas = quantile_atlas(grid, ys, weighting(x))
        contours = {tau: contour(atlas, j) for tau, j in indices.items()}
        return TubeSlice(x, atlas, contours)

    slices = task.run_tasks(one, points, workers=workers)
    projection = ("x1", "y1", "y2") if grid_spec.d == 2 else None  # noqa: PLR2004
    return Tube(tuple(slices), tuple(levels), projection)


def atlas_records(atlas: QuantileAtlas) -> list[dict[str, Any]]:
    """One record per gridpoint: x, level, direction_index, q1..qd."""
    x = (
        ""
        if atlas.conditioning_point is None
        else ",".join(repr(float(v)) for v in atlas.conditioning_point)
    )
    records = []
    for i, image in enumerate(atlas.images):
        record: dict[str, Any] = {
            "x": x,
            "level": float(atlas.levels[i]),
            "direction_index": int(atlas.direction_index[i]),
        }
        record |= {f"q{k + 1}": float(v) for k, v in enumerate(image)}
        records.append(record)
    return records
