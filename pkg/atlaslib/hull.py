"""Minimum-norm point of the convex hull of a finite point set (Wolfe)."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from .errors import ShapeError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

MAX_ITER = 100
TOL = 1e-12


def _affine_minimizer(points: NDArray[np.float64]) -> NDArray[np.float64]:
    """Barycentric weights of the min-norm point of the affine hull of `points`."""
    k = points.shape[0]
    system = np.zeros((k + 1, k + 1))
    system[:k, :k] = points @ points.T
    system[:k, k] = 1.0
    system[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    solution, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    return solution[:k]


def min_norm_point(
    points: ArrayLike, *, tol: float = TOL, max_iter: int = MAX_ITER
) -> NDArray[np.float64]:
    """Return argmin{|y| : y in conv(points)} for a k x d array of points.

    Major cycles add the point most aligned against the current iterate; minor
    cycles move toward the affine minimiser of the corral and drop points whose
    weight would turn negative. Stops once the norm no longer decreases by more
    than `tol` or after `max_iter` major cycles.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ShapeError("need at least one point")
    if pts.shape[0] == 1:
        return pts[0].copy()

    scale = max(1.0, float(np.max(np.sum(pts**2, axis=1))))
    start = int(np.argmin(np.sum(pts**2, axis=1)))
    corral = [start]
    lam = np.array([1.0])
    x = pts[start].copy()

    for _ in range(max_iter):
        before = float(x @ x)
        j = int(np.argmin(pts @ x))
        if before - float(pts[j] @ x) <= tol * scale or j in corral:
            break
        corral.append(j)
        lam = np.append(lam, 0.0)

        while True:
            alpha = _affine_minimizer(pts[corral])
            if np.all(alpha > tol):
                lam = alpha
                break
            shrinking = alpha < lam
            ratios = lam[shrinking] / (lam[shrinking] - alpha[shrinking])
            step = min(1.0, float(ratios.min())) if ratios.size else 1.0
            lam = lam + step * (alpha - lam)
            keep = lam > tol
            corral = [c for c, kept in zip(corral, keep, strict=True) if kept]
            lam = lam[keep] / lam[keep].sum()
            if len(corral) == 1:
                break

        x = lam @ pts[corral]
        if before - float(x @ x) <= tol * scale:
            break
    return x
