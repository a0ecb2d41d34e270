"""Check loss and an exact weighted linear quantile-regression solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg, sparse
from scipy.optimize import linprog

from .errors import (
    ShapeError,
    SingularityError,
    SolverError,
    ValidationError,
    check_level,
)

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

log = logging.getLogger("qr")

OPTIMALITY_TOL = 1e-8
# residuals within this share of max|y| count as interpolated
ZERO_RESIDUAL_TOL = 1e-7
# dual simplex first, then whatever HiGHS picks
_LP_METHODS = ("highs-ds", "highs")


@dataclass(frozen=True, slots=True)
class CheckLossParams:
    """The level `tau` of a check function."""

    tau: float

    def __post_init__(self) -> None:
        """Reject levels outside (0, 1)."""
        check_level(self.tau)

    def __call__(self, u: ArrayLike) -> float | NDArray[np.float64]:
        """Evaluate the check function at `u`."""
        return check_loss(u, self.tau)


def check_loss(u: ArrayLike, tau: float) -> float | NDArray[np.float64]:
    """Evaluate u * (tau - 1{u < 0}), elementwise for arrays."""
    tau = check_level(tau)
    arr = np.asarray(u, dtype=float)
    loss = arr * (tau - (arr < 0))
    if loss.ndim == 0:
        return float(loss)
    return loss


def weighted_check_loss(
    residuals: NDArray[np.float64], weights: NDArray[np.float64], tau: float
) -> float:
    """Sum of weighted check losses of a residual vector."""
    return float(np.sum(weights * check_loss(residuals, tau)))


@dataclass(frozen=True, slots=True)
class RegressionProblem:
    """A weighted linear quantile regression of `response` on `design`."""

    design: NDArray[np.float64]
    response: NDArray[np.float64]
    tau: float
    weights: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        """Coerce arrays and check the problem invariants."""
        design = np.atleast_2d(np.asarray(self.design, dtype=float))
        response = np.asarray(self.response, dtype=float).ravel()
        n, q = design.shape
        if self.weights is None:
            weights = np.ones(n)
        else:
            weights = np.asarray(self.weights, dtype=float).ravel()

        if response.shape[0] != n or weights.shape[0] != n:
            raise ShapeError(
                f"design has {n} rows but response has {response.shape[0]} "
                f"and weights have {weights.shape[0]}"
            )
        if not n >= q >= 1:
            raise ValidationError(f"need n >= q >= 1, got n={n}, q={q}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValidationError("observation weights must be finite and >= 0")
        if np.count_nonzero(weights > 0) < q:
            raise ValidationError(f"at least q={q} weights must be strictly positive")
        check_level(self.tau)

        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        """Number of observations."""
        return self.design.shape[0]

    @property
    def q(self) -> int:
        """Number of coefficients."""
        return self.design.shape[1]


@dataclass(frozen=True, slots=True)
class QuantileFit:
    """The solution of a `RegressionProblem`."""

    theta: NDArray[np.float64]
    objective: float
    active_set: NDArray[np.intp] = field(repr=False)


def directional_derivatives(
    design: NDArray[np.float64],
    response: NDArray[np.float64],
    weights: NDArray[np.float64],
    tau: float,
    theta: NDArray[np.float64],
) -> NDArray[np.float64]:
    """One-sided derivatives of the weighted check loss at `theta`.

    Row 0 holds the derivative along +e_j, row 1 along -e_j.
    """
    residuals = response - design @ theta
    scale = max(1.0, float(np.max(np.abs(response), initial=0.0)))
    zero = np.abs(residuals) <= ZERO_RESIDUAL_TOL * scale
    slope = np.where(residuals > 0, tau, tau - 1.0)

    out = np.empty((2, design.shape[1]))
    for row, sign in enumerate((1.0, -1.0)):
        delta = -sign * design
        smooth = slope[:, None] * delta
        kink = np.maximum(tau * delta, (tau - 1.0) * delta)
        contrib = np.where(zero[:, None], kink, smooth)
        out[row] = weights @ contrib
    return out


def _independent_rows(
    design: NDArray[np.float64], order: NDArray[np.intp]
) -> list[int]:
    """Greedily pick up to q linearly independent rows, in `order`."""
    q = design.shape[1]
    basis: list[int] = []
    for i in order:
        if np.linalg.matrix_rank(design[[*basis, int(i)]]) > len(basis):
            basis.append(int(i))
            if len(basis) == q:
                break
    return basis


def _to_vertex(
    design: NDArray[np.float64],
    response: NDArray[np.float64],
    theta: NDArray[np.float64],
    scale: float,
) -> NDArray[np.float64]:
    """Move an optimal `theta` onto the vertex spanned by q interpolated rows.

    Near-zero rows are ranked by residual size and the first q independent
    ones are solved exactly, so extra rows of a degenerate vertex are never
    averaged in. Without q such rows, `theta` slides along a null direction of
    the interpolated rows; the loss is linear there with slope zero at an
    optimum, so the slide keeps optimality.
    """
    q = design.shape[1]
    for _ in range(q + 1):
        residuals = response - design @ theta
        active = np.abs(residuals) <= ZERO_RESIDUAL_TOL * scale
        candidates = np.flatnonzero(active)
        order = candidates[np.argsort(np.abs(residuals[candidates]), kind="stable")]
        basis = _independent_rows(design, order)
        if len(basis) == q:
            return np.linalg.solve(design[basis], response[basis])
        null = np.eye(q) if not basis else linalg.null_space(design[basis])
        direction = null[:, 0]
        moves = design @ direction
        movable = (~active) & (np.abs(moves) > 1e-12)
        if not np.any(movable):
            break
        steps = residuals[movable] / moves[movable]
        theta = theta + steps[np.argmin(np.abs(steps))] * direction
    return theta


def fit_weighted_qr(problem: RegressionProblem) -> QuantileFit:
    """Minimise sum_i w_i rho_tau(y_i - u_i'theta) exactly as a linear program.

    Zero-weight rows are dropped before solving. The LP splits every residual
    into positive and negative parts and HiGHS dual simplex returns an optimal
    basic solution, falling back to the default HiGHS method on a nonzero
    status. The solution is polished to a vertex and certified by its
    directional derivatives.
    """
    assert problem.weights is not None
    keep = problem.weights > 0
    rows = np.flatnonzero(keep)
    x = problem.design[keep]
    y = problem.response[keep]
    w = problem.weights[keep]
    n, q = x.shape
    tau = problem.tau

    if np.linalg.matrix_rank(x) < q:
        raise SingularityError(
            f"design restricted to the {n} positive-weight rows has rank < {q}"
        )

    cost = np.concatenate([np.zeros(q), tau * w, (1.0 - tau) * w])
    identity = sparse.identity(n, format="csr")
    constraints = sparse.hstack([sparse.csr_matrix(x), identity, -identity], "csr")
    bounds = [(None, None)] * q + [(0.0, None)] * (2 * n)

    log.debug("Solving quantile LP with n=%d, q=%d, tau=%s", n, q, tau)
    for method in _LP_METHODS:
        result = linprog(cost, A_eq=constraints, b_eq=y, bounds=bounds, method=method)
        if result.status == 0:
            break
        log.debug("HiGHS %s gave status %d: %s", method, result.status, result.message)
    else:
        raise SolverError(
            f"quantile LP failed (status {result.status}) after "
            f"{result.nit} iterations: {result.message}"
        )

    scale = max(1.0, float(np.max(np.abs(y), initial=0.0)))
    theta = _to_vertex(x, y, np.asarray(result.x[:q]), scale)
    residuals = y - x @ theta
    objective = weighted_check_loss(residuals, w, tau)

    derivs = directional_derivatives(x, y, w, tau, theta)
    worst = float(derivs.min())
    if worst < -OPTIMALITY_TOL * max(1.0, abs(objective)):
        raise SolverError(
            f"quantile LP solution failed its optimality certificate "
            f"(directional derivative {worst:.3e}, {result.nit} iterations)"
        )

    active = rows[np.abs(residuals) <= ZERO_RESIDUAL_TOL * scale]
    return QuantileFit(theta=theta, objective=objective, active_set=active)


@dataclass(frozen=True, slots=True)
class StationaryAsyVar:
    """Ingredients of the stationary autoregression-quantile variance."""

    gamma: NDArray[np.float64]
    tau: float
    density_at_quantile: float

    def __post_init__(self) -> None:
        """Check symmetry of gamma and positivity of the density."""
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if gamma.shape[0] != gamma.shape[1]:
            raise ShapeError(f"gamma must be square, got shape {gamma.shape}")
        if not np.allclose(gamma, gamma.T):
            raise ValidationError("gamma must be symmetric")
        if not self.density_at_quantile > 0:
            raise ValidationError("density at the quantile must be positive")
        check_level(self.tau)
        object.__setattr__(self, "gamma", gamma)


def invert_gamma(gamma: NDArray[np.float64]) -> NDArray[np.float64]:
    """Invert a moment matrix, raising `SingularityError` when it is singular."""
    if np.linalg.matrix_rank(gamma) < gamma.shape[0]:
        raise SingularityError("moment matrix gamma is singular")
    try:
        return np.linalg.inv(gamma)
    except np.linalg.LinAlgError as e:
        raise SingularityError(f"moment matrix gamma is singular: {e}") from e


def stationary_asy_var(spec: StationaryAsyVar) -> NDArray[np.float64]:
    """Gamma^-1 * tau(1 - tau) / f(F^-1(tau))^2."""
    factor = spec.tau * (1.0 - spec.tau) / spec.density_at_quantile**2
    return invert_gamma(spec.gamma) * factor
