"""Time-varying AR(p) processes and local polynomial quantile regression.

Observation i of a series of length n lives at rescaled time i/n. A local fit at
time u weights observation i by K((i/n - u)/b) and expands the coefficient
function around u in a Taylor polynomial of order k.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy import integrate, signal, stats

from . import qr
from .errors import (
    DegenerateWindowError,
    DomainError,
    ShapeError,
    ValidationError,
    check_level,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    CoefficientFn = Callable[[NDArray[np.float64]], NDArray[np.float64] | float]
    InterceptFn = Callable[[NDArray[np.float64], float], NDArray[np.float64] | float]

log = logging.getLogger("locstat")

KernelName = Literal["epanechnikov", "triangular", "quartic", "uniform"]

_STABILITY_GRID = 1000
_QUAD_TOL = 1e-12
_GAMMA_BURN_IN = 1000


# --- Kernels ---


def _kernel_density(name: KernelName, v: NDArray[np.float64]) -> NDArray[np.float64]:
    inside = np.abs(v) <= 1.0
    match name:
        case "epanechnikov":
            values = 0.75 * (1.0 - v**2)
        case "triangular":
            values = 1.0 - np.abs(v)
        case "quartic":
            values = 15.0 / 16.0 * (1.0 - v**2) ** 2
        case "uniform":
            values = np.full_like(v, 0.5)
        case _:
            raise ValidationError(f"Unknown kernel: {name}")
    return np.where(inside, values, 0.0)


@functools.cache
def _integral(name: KernelName, power: int, *, squared: bool = False) -> float:
    def integrand(v: float) -> float:
        k = float(_kernel_density(name, np.asarray(v)))
        return v**power * (k * k if squared else k)

    value, _ = integrate.quad(
        integrand, -1.0, 1.0, points=[0.0], epsabs=_QUAD_TOL, epsrel=_QUAD_TOL
    )
    return value


@dataclass(frozen=True, slots=True)
class Kernel:
    """A symmetric smoothing kernel supported on [-1, 1]."""

    name: KernelName = "epanechnikov"

    def __post_init__(self) -> None:
        """Check that the kernel integrates to one."""
        total = _integral(self.name, 0)
        if abs(total - 1.0) > 1e-10:
            raise ValidationError(f"kernel {self.name} integrates to {total}, not 1")

    def __call__(self, v: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the kernel density."""
        return _kernel_density(self.name, np.asarray(v, dtype=float))

    def moment(self, power: int) -> float:
        """The integral of v**power * K(v); odd moments vanish by symmetry."""
        if power % 2:
            return 0.0
        return _integral(self.name, power)

    @property
    def kappa2(self) -> float:
        """The integral of K(v)**2."""
        return _integral(self.name, 0, squared=True)


# --- Innovations ---


@dataclass(frozen=True, slots=True)
class Innovation:
    """An iid innovation law given by its quantile function."""

    name: str
    ppf: Callable[[NDArray[np.float64]], NDArray[np.float64]]
    pdf: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None

    @classmethod
    def standard_normal(cls) -> Innovation:
        """The standard Gaussian law."""
        return cls("standard-normal", stats.norm.ppf, stats.norm.pdf)

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """Draw `size` iid innovations."""
        if self.name == "standard-normal":
            return rng.standard_normal(size)
        return np.asarray(self.ppf(rng.random(size)), dtype=float)

    def quantile(self, tau: float) -> float:
        """F^-1(tau)."""
        return float(self.ppf(np.asarray(check_level(tau))))

    def density_at_quantile(self, tau: float) -> float:
        """f(F^-1(tau)), by finite differences of the quantile function when no
        density is supplied.
        """
        if self.pdf is not None:
            return float(self.pdf(np.asarray(self.quantile(tau))))
        h = 1e-5 * min(tau, 1.0 - tau)
        slope = (self.quantile(tau + h) - self.quantile(tau - h)) / (2.0 * h)
        return 1.0 / slope


# --- Series ---


def _evaluate(fn: CoefficientFn, u: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.broadcast_to(np.asarray(fn(u), dtype=float), u.shape)


def _quantile_intercept(spec_innovation: Innovation) -> InterceptFn:
    return lambda u, tau: np.full_like(u, spec_innovation.quantile(tau))


@dataclass(frozen=True, slots=True)
class TvARSpec:
    """A time-varying AR(p) process with coefficient functions of rescaled time.

    Coefficient functions must accept numpy arrays. `alpha_fn(u, tau)` is the
    tau-th conditional quantile intercept; innovations are shifted so their
    tau-th quantile is zero.
    """

    phi_fns: tuple[CoefficientFn, ...]
    n: int
    alpha_fn: InterceptFn = field(default=lambda u, _tau: np.zeros_like(u))
    innovation: Innovation = field(default_factory=Innovation.standard_normal)
    tau: float = 0.5
    burn_in: int = 0

    def __post_init__(self) -> None:
        """Validate sizes and the stability condition sup_u sum_j |phi_j(u)| < 1."""
        if self.p < 1:
            raise ValidationError("AR order p must be at least 1")
        if self.n < 1 or self.burn_in < 0:
            raise ValidationError(f"need n >= 1 and burn_in >= 0, got {self}")
        check_level(self.tau)
        grid = np.linspace(0.0, 1.0, _STABILITY_GRID)
        total = sum(np.abs(_evaluate(fn, grid)) for fn in self.phi_fns)
        worst = float(np.max(total))
        if worst >= 1.0:
            raise ValidationError(
                f"unstable coefficients: sup_u sum_j |phi_j(u)| = {worst:.4f} >= 1"
            )

    @property
    def p(self) -> int:
        """AR order."""
        return len(self.phi_fns)

    def theta(self, u: float, tau: float | None = None) -> NDArray[np.float64]:
        """The true coefficient vector (alpha(u|tau), phi_1(u), ..., phi_p(u))."""
        tau = self.tau if tau is None else tau
        point = np.asarray([u], dtype=float)
        alpha = _evaluate(lambda v: self.alpha_fn(v, tau), point)
        return np.concatenate([alpha, *(_evaluate(fn, point) for fn in self.phi_fns)])


@dataclass(frozen=True, slots=True)
class TimeSeries:
    """One path of a `TvARSpec`, with the p values that precede it."""

    values: NDArray[np.float64]
    presample: NDArray[np.float64]
    spec: TvARSpec
    seed: int

    @property
    def n(self) -> int:
        """Length of the path."""
        return self.values.shape[0]

    @property
    def times(self) -> NDArray[np.float64]:
        """Rescaled times i/n, i = 1..n."""
        return np.arange(1, self.n + 1) / self.n

    def lags(self) -> NDArray[np.float64]:
        """The regressors U_i = (1, X_{i-1}, ..., X_{i-p}) as an n x (p+1) matrix."""
        return _lag_matrix(np.concatenate([self.presample, self.values]), self.spec.p)


def _lag_matrix(full: NDArray[np.float64], p: int) -> NDArray[np.float64]:
    """Rows (1, x_{t-1}, ..., x_{t-p}) for every t past the first p values."""
    n = full.shape[0] - p
    design = np.ones((n, p + 1))
    for j in range(1, p + 1):
        design[:, j] = full[p - j : p - j + n]
    return design


def simulate_tvar(spec: TvARSpec, seed: int) -> TimeSeries:
    """Simulate X_i = alpha(i/n|tau) + sum_j phi_j(i/n) X_{i-j} + eps_i.

    Values before the first step are zero; burn-in steps use the coefficients
    frozen at u = 0 and are discarded.
    """
    rng = np.random.default_rng(seed)
    p, n, burn = spec.p, spec.n, spec.burn_in
    total = burn + n

    times = np.concatenate([np.zeros(burn), np.arange(1, n + 1) / n])
    shift = spec.innovation.quantile(spec.tau)
    drift = _evaluate(lambda v: spec.alpha_fn(v, spec.tau), times)
    eps = spec.innovation.sample(rng, total) - shift
    phis = np.stack([_evaluate(fn, times) for fn in spec.phi_fns])

    forcing = (drift + eps).tolist()
    coefs = phis.T.tolist()
    x = [0.0] * (p + total)
    for t in range(total):
        value = forcing[t]
        row = coefs[t]
        for j in range(p):
            value += row[j] * x[p + t - 1 - j]
        x[p + t] = value

    path = np.asarray(x)
    log.debug("Simulated %d steps (burn-in %d) with seed %d", total, burn, seed)
    return TimeSeries(
        values=path[p + burn :],
        presample=path[burn : burn + p],
        spec=spec,
        seed=seed,
    )


def stationary_gamma(
    spec: TvARSpec, u: float, *, steps: int = 100_000, seed: int = 0
) -> NDArray[np.float64]:
    """Estimate Gamma(u) = E[U_i(u) U_i(u)'] of the process frozen at time u."""
    rng = np.random.default_rng(seed)
    theta = spec.theta(u)
    total = steps + _GAMMA_BURN_IN + spec.p
    eps = spec.innovation.sample(rng, total) - spec.innovation.quantile(spec.tau)
    path = signal.lfilter([1.0], np.concatenate([[1.0], -theta[1:]]), theta[0] + eps)

    design = _lag_matrix(path[_GAMMA_BURN_IN:], spec.p)
    return design.T @ design / steps


# --- Local fits ---


@dataclass(frozen=True, slots=True)
class LocalFitConfig:
    """Where and how to localise a quantile regression in time."""

    u: float
    tau: float
    k: int = 0
    bandwidth: float = 0.1
    kernel: Kernel = field(default_factory=Kernel)

    def __post_init__(self) -> None:
        """Validate the configuration."""
        if not 0.0 < self.u < 1.0:
            raise DomainError(f"rescaled time u must lie in (0, 1), got {self.u}")
        check_level(self.tau)
        if self.k < 0:
            raise ValidationError(f"polynomial order k must be >= 0, got {self.k}")
        if not self.bandwidth > 0:
            raise ValidationError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def interior(self) -> bool:
        """True when u lies in [b, 1 - b]."""
        return self.bandwidth <= self.u <= 1.0 - self.bandwidth


@dataclass(frozen=True, slots=True)
class LocalPolyFit:
    """Estimated coefficient stack theta_0, theta', ..., theta^(k) at (u, tau)."""

    theta_stack: NDArray[np.float64]
    u: float
    tau: float
    k: int
    bandwidth: float
    effective_n: int
    boundary: bool = False

    @property
    def theta(self) -> NDArray[np.float64]:
        """The plug-in conditional quantile coefficients theta_0(u|tau)."""
        return self.theta_stack[0]


def local_poly_fit(series: TimeSeries, config: LocalFitConfig) -> LocalPolyFit:
    """Solve the kernel-weighted check-loss problem over a Taylor expansion.

    Block m of the design is ((i/n - u)/b)^m / m! * U_i; solving in these scaled
    units and multiplying block m by b^-m recovers the derivatives theta^(m).
    """
    p, k, b = series.spec.p, config.k, config.bandwidth
    if series.n < p + 1:
        raise ShapeError(f"series of length {series.n} is too short for AR({p})")

    z = (series.times - config.u) / b
    weights = config.kernel(z)
    window = weights > 0
    effective_n = int(np.count_nonzero(window))
    needed = (k + 1) * (p + 1)
    if effective_n < needed:
        raise DegenerateWindowError(
            f"only {effective_n} observations carry kernel weight at u={config.u}, "
            f"need at least {needed}"
        )

    lags = series.lags()[window]
    zw = z[window]
    design = np.hstack(
        [(zw**m / math.factorial(m))[:, None] * lags for m in range(k + 1)]
    )
    problem = qr.RegressionProblem(
        design, series.values[window], config.tau, weights[window]
    )
    fit = qr.fit_weighted_qr(problem)

    stack = fit.theta.reshape(k + 1, p + 1) / (b ** np.arange(k + 1))[:, None]
    if not config.interior:
        log.debug("Boundary fit at u=%.3f with effective n=%d", config.u, effective_n)
    return LocalPolyFit(
        theta_stack=stack,
        u=config.u,
        tau=config.tau,
        k=k,
        bandwidth=b,
        effective_n=effective_n,
        boundary=not config.interior,
    )


def u_grid(points: int = 100) -> NDArray[np.float64]:
    """`points` equidistant interior times (j + 1/2) / points."""
    return (np.arange(points) + 0.5) / points


def fit_curve(
    series: TimeSeries,
    grid: Sequence[float],
    *,
    tau: float,
    k: int = 0,
    bandwidth: float = 0.1,
    kernel: Kernel | None = None,
) -> list[LocalPolyFit]:
    """Local fits at every time of a grid."""
    kernel = kernel or Kernel()
    return [
        local_poly_fit(series, LocalFitConfig(float(u), tau, k, bandwidth, kernel))
        for u in grid
    ]


def constant_fit(series: TimeSeries, tau: float) -> qr.QuantileFit:
    """The time-constant autoregression quantile over the whole sample."""
    return qr.fit_weighted_qr(qr.RegressionProblem(series.lags(), series.values, tau))


def theta_interpolator(
    fits: Sequence[LocalPolyFit],
) -> Callable[[float], NDArray[np.float64]]:
    """Linear interpolation of theta_0 between grid fits, constant beyond."""
    grid = np.array([f.u for f in fits])
    thetas = np.stack([f.theta for f in fits])

    def theta_fn(u: float) -> NDArray[np.float64]:
        return np.array([np.interp(u, grid, col) for col in thetas.T])

    return theta_fn


# --- Asymptotics ---


@dataclass(frozen=True, slots=True)
class Theorem2Asymptotics:
    """Leading bias and variance of the local polynomial estimator of theta_0."""

    bias: NDArray[np.float64]
    variance: NDArray[np.float64]
    kappa2: float
    kernel_moment: float


def theorem2_asymptotics(
    config: LocalFitConfig,
    gamma_u: NDArray[np.float64],
    f_tau_0: float,
    theta_deriv: NDArray[np.float64],
    n: int,
) -> Theorem2Asymptotics:
    """Bias b^(k+1) theta^(k+1) / (k+1)! * int v^(k+1) K and variance
    Gamma(u)^-1 tau(1 - tau) kappa2 / (f_tau(0)^2 n b).
    """
    if not f_tau_0 > 0:
        raise ValidationError(f"f_tau(0) must be positive, got {f_tau_0}")
    gamma_u = np.atleast_2d(np.asarray(gamma_u, dtype=float))
    theta_deriv = np.asarray(theta_deriv, dtype=float)
    if theta_deriv.shape[0] != gamma_u.shape[0]:
        raise ShapeError("theta derivative and gamma(u) dimensions differ")

    order = config.k + 1
    b = config.bandwidth
    moment = config.kernel.moment(order)
    kappa2 = config.kernel.kappa2
    bias = b**order * theta_deriv / math.factorial(order) * moment
    scale = config.tau * (1.0 - config.tau) / f_tau_0**2 * kappa2 / (n * b)
    variance = qr.invert_gamma(gamma_u) * scale
    return Theorem2Asymptotics(bias, variance, kappa2, moment)


# --- Evaluation ---


@dataclass(frozen=True, slots=True)
class MseCurve:
    """Monte Carlo mean squared error of theta_0 along a time grid."""

    u: NDArray[np.float64]
    per_coefficient: NDArray[np.float64]  # grid x (p+1)

    @property
    def aggregate(self) -> NDArray[np.float64]:
        """MSE averaged over coefficients."""
        return self.per_coefficient.mean(axis=1)


def mse_curve(
    fits: Sequence[Sequence[LocalPolyFit]],
    truth_fn: Callable[[float], NDArray[np.float64]],
) -> MseCurve:
    """Mean over runs of (theta_hat_j(u) - theta_j(u))^2 at every grid time."""
    if not fits or not fits[0]:
        raise ShapeError("need at least one run with at least one fit")
    grid = np.array([f.u for f in fits[0]])
    for run in fits:
        if not np.array_equal(np.array([f.u for f in run]), grid):
            raise ShapeError("all runs must share the same u grid")

    estimates = np.array([[f.theta for f in run] for run in fits])
    truth = np.stack([np.asarray(truth_fn(float(u)), dtype=float) for u in grid])
    if truth.shape != estimates.shape[1:]:
        raise ShapeError(
            f"truth has shape {truth.shape}, estimates {estimates.shape[1:]}"
        )
    return MseCurve(grid, np.mean((estimates - truth) ** 2, axis=0))


def conditional_quantile_path(
    series: TimeSeries,
    theta_fn: Callable[[float], NDArray[np.float64]],
    tau: float,
) -> NDArray[np.float64]:
    """theta(i/n|tau)' U_i for every observation."""
    check_level(tau)
    design = series.lags()
    thetas = np.stack(
        [np.asarray(theta_fn(float(u)), dtype=float) for u in series.times]
    )
    if thetas.shape != design.shape:
        raise ShapeError(
            f"theta_fn returns {thetas.shape[1]} coefficients, need {design.shape[1]}"
        )
    return np.einsum("ij,ij->i", design, thetas)


# --- Reference processes ---


def motivating_spec(n: int = 4000, *, stationary: bool, tau: float = 0.5) -> TvARSpec:
    """AR(1) with phi_1 = 0.5, or phi_1(u) = 0.1 u + 0.85 u^2.5 when nonstationary."""
    if stationary:
        phi: CoefficientFn = lambda u: np.full_like(u, 0.5)  # noqa: E731
    else:
        phi = lambda u: 0.1 * u + 0.85 * u**2.5  # noqa: E731
    innovation = Innovation.standard_normal()
    return TvARSpec(
        (phi,), n, _quantile_intercept(innovation), innovation, tau=tau
    )


def ar3_phi2(u: NDArray[np.float64]) -> NDArray[np.float64]:
    """phi_2(u) = 0.2 + 0.2 sin(18u) + 0.608u - 0.032(u + 1)^3."""
    return 0.2 + 0.2 * np.sin(18.0 * u) + 0.608 * u - 0.032 * (u + 1.0) ** 3


def ar3_spec(n: int = 3000, *, tau: float = 0.5) -> TvARSpec:
    """AR(3) with phi_1 = phi_2 / 10, phi_3 = phi_2 / 3."""
    innovation = Innovation.standard_normal()
    return TvARSpec(
        (lambda u: ar3_phi2(u) / 10.0, ar3_phi2, lambda u: ar3_phi2(u) / 3.0),
        n,
        _quantile_intercept(innovation),
        innovation,
        tau=tau,
    )


def smooth_ar1_spec(n: int = 8000, *, tau: float = 0.5) -> TvARSpec:
    """AR(1) with phi_1(u) = 0.3 + 0.2 sin(2 pi u)."""
    innovation = Innovation.standard_normal()
    return TvARSpec(
        (lambda u: 0.3 + 0.2 * np.sin(2.0 * np.pi * u),),
        n,
        _quantile_intercept(innovation),
        innovation,
        tau=tau,
    )
