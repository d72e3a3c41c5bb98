"""One-dimensional parametric families.

A family bundles the negative log-likelihood ``l(x, theta)`` and its first
three ``theta``-derivatives, the Fisher information, a sampler and the
Lipschitz envelope ``c(x)`` with
``|ldot(x, t) - ldot(x, s)| <= c(x) |t - s|`` for ``t, s`` in Theta.

Because Theta is an interval, the smallest such envelope is
``sup_{theta in Theta} |lddot(x, theta)|`` (mean value theorem); it is found
by a 257-point grid scan followed by golden-section refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, ClassVar, Optional

import numpy as np
from scipy import integrate, stats
from scipy.special import expit, gammaln

from .errors import ConfigurationError, DomainError, MomentNonexistenceError, NumericError, UsageError
from .norms import MomentOracle, gaussian_oracle, laplace_oracle, quadrature_oracle

SUP_GRID = 257
QUAD_EPSABS = 1e-8

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_BATCH = 2048


@dataclass(frozen=True)
class ParameterSpace:
    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ConfigurationError(f"Theta bounds must be finite, got [{self.lower}, {self.upper}]")
        if not self.lower < self.upper:
            raise ConfigurationError(f"Theta needs lower < upper, got [{self.lower}, {self.upper}]")

    def contains(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        return bool(np.all((t >= self.lower) & (t <= self.upper)))

    def contains_zero(self) -> bool:
        return self.lower <= 0.0 <= self.upper

    def clip(self, theta):
        return np.clip(theta, self.lower, self.upper)

    def grid(self, m: int = SUP_GRID) -> np.ndarray:
        return np.linspace(self.lower, self.upper, m)

    @property
    def width(self) -> float:
        return self.upper - self.lower


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-12, maxiter: int = 200):
    """Maximise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def sup_abs_batch(g: Callable, xs: np.ndarray, lower: float, upper: float, m: int = SUP_GRID, iters: int = 80) -> np.ndarray:
    """Row-wise ``sup_t |g(x, t)|`` for many ``x`` at once.

    Same recipe as :func:`sup_abs_over_interval`: a grid scan, then golden
    section on the two cells around each row's grid maximum.
    """
    xs = np.asarray(xs, dtype=float)
    ts = np.linspace(lower, upper, m)
    vals = np.abs(g(xs[:, None], ts[None, :]))
    i = np.argmax(vals, axis=1)
    best = vals[np.arange(xs.size), i]
    a = ts[np.maximum(i - 1, 0)]
    b = ts[np.minimum(i + 1, m - 1)]
    f = lambda t: np.abs(g(xs, t))
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc > fd
        # keep [a, d] where the left probe wins, else [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c, d = np.where(left, b - _GOLDEN * (b - a), d), np.where(left, c, a + _GOLDEN * (b - a))
        fc, fd = np.where(left, f(c), fd), np.where(left, fc, f(d))
    return np.maximum(best, f(0.5 * (a + b)))


def sup_abs_over_interval(g: Callable[[np.ndarray], np.ndarray], lower: float, upper: float, m: int = SUP_GRID) -> float:
    """``sup_{t in [lower, upper]} |g(t)|`` by grid scan plus golden refinement."""
    ts = np.linspace(lower, upper, m)
    vals = np.abs(g(ts))
    i = int(np.argmax(vals))
    a, b = ts[max(i - 1, 0)], ts[min(i + 1, m - 1)]
    _, refined = golden_section_max(lambda t: float(np.abs(g(np.array([t])))[0]), a, b)
    return float(max(vals[i], refined, abs(float(g(np.array([lower]))[0])), abs(float(g(np.array([upper]))[0]))))


@dataclass(frozen=True)
class ModelFamily:
    """Base class; subclasses fill in the likelihood pieces.

    Derivative methods broadcast over ``x`` and ``theta`` and do not check
    domains; the module-level functions and :meth:`derivatives` do.
    """

    theta_space: ParameterSpace

    name: ClassVar[str] = "abstract"
    requires_nonzero_theta: ClassVar[bool] = False
    constant_c: ClassVar[bool] = False
    discrete: ClassVar[bool] = False

    def __post_init__(self):
        if self.requires_nonzero_theta and self.theta_space.contains_zero():
            raise ConfigurationError(f"{self.name}: Theta must exclude 0, got {self.theta_space}")

    # -- support -----------------------------------------------------------
    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def in_support(self, x) -> np.ndarray:
        lo, hi = self.support
        x = np.asarray(x, dtype=float)
        ok = np.isfinite(x) & (x >= lo) & (x <= hi)
        if self.discrete:
            ok &= x == np.round(x)
        return ok

    def check_support(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not np.all(self.in_support(x)):
            bad = x[~self.in_support(x)].ravel()[0]
            raise DomainError(f"{self.name}: observation {bad} outside support {self.support}")
        return x

    def check_theta(self, theta):
        if not np.all(np.isfinite(theta)) or not self.theta_space.contains(theta):
            raise DomainError(
                f"{self.name}: theta={theta} outside Theta=[{self.theta_space.lower}, {self.theta_space.upper}]"
            )
        return theta

    # -- likelihood pieces (override) ---------------------------------------
    def l(self, x, theta):
        raise NotImplementedError

    def ldot(self, x, theta):
        raise NotImplementedError

    def lddot(self, x, theta):
        raise NotImplementedError

    def ldddot(self, x, theta):
        raise NotImplementedError

    def logpdf(self, x, theta):
        return -self.l(x, theta)

    def pdf(self, x, theta):
        return np.exp(self.logpdf(x, theta))

    def mean(self, theta) -> float:
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, theta: float, size) -> np.ndarray:
        raise NotImplementedError

    # -- optional closed forms ----------------------------------------------
    def fisher_closed(self, theta) -> Optional[float]:
        return None

    def kappa_closed(self, theta) -> Optional[float]:
        return None

    def mle_closed(self, x: np.ndarray) -> Optional[float]:
        return None

    def moment_limit(self, theta) -> float:
        """Orders ``p`` with ``E|X|^p = inf`` are exactly ``p >= moment_limit``."""
        return math.inf

    def envelope_growth(self) -> float:
        """Exponent ``r`` with ``c(x) = O(|x|^r)``."""
        return 0.0

    # -- generic machinery --------------------------------------------------
    def derivatives(self, x, theta):
        self.check_theta(theta)
        x = self.check_support(x)
        return self.l(x, theta), self.ldot(x, theta), self.lddot(x, theta), self.ldddot(x, theta)

    def expect(self, func: Callable[[np.ndarray], np.ndarray], theta: float) -> float:
        """``E_theta func(X)`` by adaptive quadrature (or summation when discrete)."""
        lo, hi = self.support
        if self.discrete:
            return _discrete_expectation(lambda x: func(x), lambda x: self.logpdf(x, theta), lo, hi)

        def integrand(x):
            return float(func(np.array([x]))[0] * self.pdf(np.array([x]), theta)[0])

        val, _ = integrate.quad(integrand, lo, hi, epsabs=QUAD_EPSABS, limit=500)
        if not math.isfinite(val):
            raise NumericError(f"{self.name}: non-finite expectation at theta={theta}")
        return float(val)

    def lipschitz_c(self, x) -> np.ndarray:
        """Envelope ``c(x) = sup_{theta in Theta} |lddot(x, theta)|``."""
        x = self.check_support(x)
        if self.constant_c:
            return np.full(np.shape(x), self._constant_c_value) if np.ndim(x) else np.float64(self._constant_c_value)
        lo, hi = self.theta_space.lower, self.theta_space.upper
        flat = np.atleast_1d(x).ravel()
        out = np.concatenate(
            [sup_abs_batch(self.lddot, flat[i : i + _BATCH], lo, hi) for i in range(0, flat.size, _BATCH)]
        )
        return out.reshape(np.shape(x)) if np.ndim(x) else np.float64(out[0])

    @cached_property
    def _constant_c_value(self) -> float:
        lo, hi = self.theta_space.lower, self.theta_space.upper
        x0 = self._reference_point()
        return sup_abs_over_interval(lambda t: self.lddot(x0, t), lo, hi)

    def _reference_point(self) -> float:
        lo, hi = self.support
        if math.isfinite(lo):
            return float(lo) + 1.0
        return 0.0

    def centered_moment_oracle(self, theta) -> MomentOracle:
        """Oracle for ``|X - E X|`` under ``theta``."""
        return quadrature_oracle(
            lambda x: self.logpdf(x, theta),
            self.support,
            center=self.mean(theta),
            max_order=self.moment_limit(theta),
            discrete=self.discrete,
            label=f"{self.name}(theta={theta}) centered",
        )

    def difference_moment_oracle(self, theta) -> MomentOracle:
        """Oracle for ``|X - Y|`` with ``Y`` an independent copy of ``X``."""
        return _difference_oracle(self, theta)


def _discrete_expectation(func, logpmf, lo, hi) -> float:
    lo = int(math.ceil(lo))
    stop = int(hi) + 1 if math.isfinite(hi) else lo + 200
    total = 0.0
    while True:
        xs = np.arange(lo, stop, dtype=float)
        w = np.exp(logpmf(xs))
        total += float(np.sum(func(xs) * w))
        if math.isfinite(hi) and stop > hi:
            break
        if w[-1] < 1e-300 or (w.size > 10 and np.all(w[-10:] < 1e-20) and np.all(np.diff(w[-10:]) <= 0)):
            break
        lo, stop = stop, stop + 200
    return total


def _difference_oracle(model: ModelFamily, theta) -> MomentOracle:
    """Generic ``E|X-Y|^p`` by nested quadrature / summation."""
    lim = model.moment_limit(theta)
    inner_cache = {}

    def lm(p):
        def inner(y):
            key = (p, float(y))
            if key not in inner_cache:
                orc = quadrature_oracle(
                    lambda x: model.logpdf(x, theta), model.support, center=float(y), discrete=model.discrete
                )
                inner_cache[key] = orc.log_absolute_moment(p)
            return inner_cache[key]

        # log E|X-Y|^p = log E_Y exp(inner(Y)); outer integral as a log-moment of order 0
        def outer_log(y):
            y = np.atleast_1d(y)
            return np.array([inner(v) for v in y]) + model.logpdf(y, theta)

        lo, hi = model.support
        if model.discrete:
            ys = np.arange(int(math.ceil(lo)), int(hi) + 1 if math.isfinite(hi) else int(model.mean(theta) * 10 + 200))
            vals = outer_log(ys.astype(float))
            from scipy.special import logsumexp

            return float(logsumexp(vals))
        ys = np.linspace(*_bulk_window(model, theta), 401)
        vals = outer_log(ys)
        peak = float(np.max(vals))
        val, _ = integrate.quad(
            lambda y: math.exp(float(outer_log(y)[0]) - peak), ys[0], ys[-1], limit=200, epsrel=1e-10
        )
        if not (val > 0 and math.isfinite(val)):
            raise NumericError(f"{model.name}: E|X-Y|^{p} quadrature failed at theta={theta}")
        return math.log(val) + peak

    return MomentOracle(lm, kind="quadrature", label=f"{model.name}(theta={theta}) X-Y", max_order=lim)


def _bulk_window(model, theta):
    lo, hi = model.support
    q = model.quantile(np.array([1e-12, 1.0 - 1e-12]), theta)
    return max(lo, float(q[0])), min(hi, float(q[1]))


# ---------------------------------------------------------------------------
# concrete families


@dataclass(frozen=True)
class GaussianVariance(ModelFamily):
    """``X ~ N(0, theta)`` with ``theta = sigma^2``."""

    name: ClassVar[str] = "gaussian_variance"
    requires_nonzero_theta: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if self.theta_space.lower <= 0:
            raise ConfigurationError("gaussian_variance: Theta must lie in (0, inf)")

    def l(self, x, theta):
        return 0.5 * np.log(2 * np.pi * theta) + x**2 / (2 * theta)

    def ldot(self, x, theta):
        return 1 / (2 * theta) - x**2 / (2 * theta**2)

    def lddot(self, x, theta):
        return -1 / (2 * theta**2) + x**2 / theta**3

    def ldddot(self, x, theta):
        return 1 / theta**3 - 3 * x**2 / theta**4

    def mean(self, theta):
        return 0.0

    def quantile(self, q, theta):
        return stats.norm.ppf(q, scale=math.sqrt(theta))

    def draw(self, rng, theta, size):
        return rng.normal(0.0, math.sqrt(theta), size=size)

    def fisher_closed(self, theta):
        return 1 / (2 * theta**2)

    def kappa_closed(self, theta):
        # E[ldot lddot] = -1/theta^3, E[ldddot] = -2/theta^3
        return 2 * (-1 / theta**3) - (-2 / theta**3)

    def mle_closed(self, x):
        return float(np.mean(x**2))

    def envelope_growth(self):
        return 2.0

    def centered_moment_oracle(self, theta):
        return gaussian_oracle(math.sqrt(theta))

    def difference_moment_oracle(self, theta):
        return gaussian_oracle(math.sqrt(2 * theta))


@dataclass(frozen=True)
class GaussianMean(ModelFamily):
    """``X ~ N(theta, sigma^2)`` with ``sigma`` known."""

    sigma: float = 1.0

    name: ClassVar[str] = "gaussian_mean"
    constant_c: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if not self.sigma > 0:
            raise ConfigurationError("gaussian_mean: sigma must be positive")

    def l(self, x, theta):
        return 0.5 * np.log(2 * np.pi * self.sigma**2) + (x - theta) ** 2 / (2 * self.sigma**2)

    def ldot(self, x, theta):
        return (theta - x) / self.sigma**2

    def lddot(self, x, theta):
        return np.zeros(np.broadcast(x, theta).shape) + 1 / self.sigma**2

    def ldddot(self, x, theta):
        return np.zeros(np.broadcast(x, theta).shape)

    def mean(self, theta):
        return float(theta)

    def quantile(self, q, theta):
        return stats.norm.ppf(q, loc=theta, scale=self.sigma)

    def draw(self, rng, theta, size):
        return rng.normal(theta, self.sigma, size=size)

    def fisher_closed(self, theta):
        return 1 / self.sigma**2

    def kappa_closed(self, theta):
        return 0.0

    def mle_closed(self, x):
        return float(np.mean(x))

    def centered_moment_oracle(self, theta):
        return gaussian_oracle(self.sigma)

    def difference_moment_oracle(self, theta):
        return gaussian_oracle(math.sqrt(2) * self.sigma)


@dataclass(frozen=True)
class ParetoShape(ModelFamily):
    """Pareto law with known ``x_min`` and shape ``theta = k``."""

    x_min: float = 1.0

    name: ClassVar[str] = "pareto_shape"
    requires_nonzero_theta: ClassVar[bool] = True
    constant_c: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if self.theta_space.lower <= 0 or not self.x_min > 0:
            raise ConfigurationError("pareto_shape: need Theta in (0, inf) and x_min > 0")

    @property
    def support(self):
        return (self.x_min, math.inf)

    def _reference_point(self):
        return self.x_min * math.e

    def l(self, x, theta):
        return -np.log(theta) - theta * np.log(self.x_min) + (theta + 1) * np.log(x)

    def ldot(self, x, theta):
        return -1 / theta + np.log(x / self.x_min)

    def lddot(self, x, theta):
        return np.zeros(np.broadcast(x, theta).shape) + 1 / np.asarray(theta, dtype=float) ** 2

    def ldddot(self, x, theta):
        return np.zeros(np.broadcast(x, theta).shape) - 2 / np.asarray(theta, dtype=float) ** 3

    def mean(self, theta):
        if theta <= 1:
            raise MomentNonexistenceError(f"pareto_shape: mean is infinite for k={theta} <= 1", order=1)
        return theta * self.x_min / (theta - 1)

    def moment_limit(self, theta):
        return float(theta)

    def quantile(self, q, theta):
        return self.x_min * (1 - np.asarray(q)) ** (-1 / theta)

    def draw(self, rng, theta, size):
        # inversion: 1 - U is uniform on (0, 1]
        return self.x_min * (1.0 - rng.random(size)) ** (-1.0 / theta)

    def fisher_closed(self, theta):
        return 1 / theta**2

    def kappa_closed(self, theta):
        return 2 / theta**3

    def mle_closed(self, x):
        return float(x.size / np.sum(np.log(x / self.x_min)))


@dataclass(frozen=True)
class WeibullScale(ModelFamily):
    """Weibull law with known integer shape ``k >= 2`` and scale ``theta = lambda``."""

    shape: int = 2

    name: ClassVar[str] = "weibull_scale"
    requires_nonzero_theta: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if self.theta_space.lower <= 0:
            raise ConfigurationError("weibull_scale: Theta must lie in (0, inf)")
        if int(self.shape) != self.shape or self.shape < 2:
            raise ConfigurationError(f"weibull_scale: shape must be an integer >= 2, got {self.shape}")

    @property
    def support(self):
        return (0.0, math.inf)

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        return np.isfinite(x) & (x > 0)

    def l(self, x, theta):
        k = self.shape
        return -np.log(k) + k * np.log(theta) - (k - 1) * np.log(x) + (x / theta) ** k

    def ldot(self, x, theta):
        k = self.shape
        return k / theta - k * x**k / theta ** (k + 1)

    def lddot(self, x, theta):
        k = self.shape
        return -k / theta**2 + k * (k + 1) * x**k / theta ** (k + 2)

    def ldddot(self, x, theta):
        k = self.shape
        return 2 * k / theta**3 - k * (k + 1) * (k + 2) * x**k / theta ** (k + 3)

    def logpdf(self, x, theta):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -self.l(x, theta)
        return np.where(x > 0, out, -np.inf)

    def mean(self, theta):
        return theta * math.gamma(1 + 1 / self.shape)

    def quantile(self, q, theta):
        return theta * (-np.log1p(-np.asarray(q))) ** (1 / self.shape)

    def draw(self, rng, theta, size):
        return theta * rng.weibull(self.shape, size=size)

    def fisher_closed(self, theta):
        return self.shape**2 / theta**2

    def kappa_closed(self, theta):
        # with Y = (X/theta)^k ~ Exp(1): E[ldot lddot] = -k^2 (k+1) / theta^3,
        # E[ldddot] = k (2 - (k+1)(k+2)) / theta^3
        k = self.shape
        return -(k**2) * (k - 1) / theta**3

    def envelope_growth(self):
        return float(self.shape)

    def mle_closed(self, x):
        return float(np.mean(x**self.shape) ** (1 / self.shape))


@dataclass(frozen=True)
class ExponentialRate(ModelFamily):
    """``X ~ Exp(theta)`` with density ``theta exp(-theta x)``."""

    name: ClassVar[str] = "exponential_rate"
    requires_nonzero_theta: ClassVar[bool] = True
    constant_c: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if self.theta_space.lower <= 0:
            raise ConfigurationError("exponential_rate: Theta must lie in (0, inf)")

    @property
    def support(self):
        return (0.0, math.inf)

    def l(self, x, theta):
        return -np.log(theta) + theta * x

    def ldot(self, x, theta):
        return -1 / theta + x

    def lddot(self, x, theta):
        return np.zeros(np.broadcast(x, theta).shape) + 1 / np.asarray(theta, dtype=float) ** 2

    def ldddot(self, x, theta):
        return np.zeros(np.broadcast(x, theta).shape) - 2 / np.asarray(theta, dtype=float) ** 3

    def logpdf(self, x, theta):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, np.log(theta) - theta * x, -np.inf)

    def mean(self, theta):
        return 1 / theta

    def quantile(self, q, theta):
        return -np.log1p(-np.asarray(q)) / theta

    def draw(self, rng, theta, size):
        return rng.exponential(1 / theta, size=size)

    def fisher_closed(self, theta):
        return 1 / theta**2

    def kappa_closed(self, theta):
        return 2 / theta**3

    def mle_closed(self, x):
        return float(1 / np.mean(x))

    def difference_moment_oracle(self, theta):
        return laplace_oracle(1 / theta)


# ---------------------------------------------------------------------------
# natural-parameter exponential families


@dataclass(frozen=True)
class ExponentialFamilySpec:
    """Density ``h(x) exp(theta T(x) - A(theta))`` in natural parametrisation."""

    log_h: Callable
    T: Callable
    A: Callable
    Adot: Callable
    Addot: Callable
    Adddot: Callable
    support: tuple
    discrete: bool
    sampler: Callable  # (rng, theta, size) -> array
    Adot_inverse: Optional[Callable] = None
    ppf: Optional[Callable] = None  # (q, theta) -> quantiles

    def h(self, x):
        return np.exp(self.log_h(x))

    def normalization(self, theta: float) -> float:
        """Total mass of the density at ``theta`` (should be 1)."""
        lo, hi = self.support
        logp = lambda x: self.log_h(x) + theta * self.T(x) - self.A(theta)
        if self.discrete:
            return _discrete_expectation(lambda x: np.ones_like(x), logp, lo, hi)
        val, _ = integrate.quad(lambda x: math.exp(float(logp(np.array([x]))[0])), lo, hi, epsabs=1e-12)
        return float(val)


@dataclass(frozen=True)
class ExponentialFamily(ModelFamily):
    spec: ExponentialFamilySpec = None
    family_name: str = "expfam"

    constant_c: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if self.spec is None:
            raise ConfigurationError("exponential family needs a spec")

    @property
    def name(self):  # type: ignore[override]
        return self.family_name

    @property
    def discrete(self):  # type: ignore[override]
        return self.spec.discrete

    @property
    def support(self):
        return self.spec.support

    def l(self, x, theta):
        return -self.spec.log_h(x) - theta * self.spec.T(x) + self.spec.A(theta)

    def ldot(self, x, theta):
        return -self.spec.T(x) + self.spec.Adot(theta)

    def lddot(self, x, theta):
        return np.zeros(np.broadcast(x, theta).shape) + self.spec.Addot(theta)

    def ldddot(self, x, theta):
        return np.zeros(np.broadcast(x, theta).shape) + self.spec.Adddot(theta)

    def mean(self, theta):
        return float(self.expect(lambda x: x, theta))

    def quantile(self, q, theta):
        if self.spec.ppf is None:
            raise NotImplementedError(f"{self.name}: no quantile function")
        return self.spec.ppf(np.asarray(q, dtype=float), theta)

    def draw(self, rng, theta, size):
        return self.spec.sampler(rng, theta, size)

    def fisher_closed(self, theta):
        return float(self.spec.Addot(theta))

    def kappa_closed(self, theta):
        # E[ldot] = 0 and lddot is free of x, so kappa = -A'''(theta)
        return -float(self.spec.Adddot(theta))

    def mle_closed(self, x):
        if self.spec.Adot_inverse is None:
            return None
        tbar = float(np.mean(self.spec.T(x)))
        lo, hi = self.theta_space.lower, self.theta_space.upper
        if tbar <= self.spec.Adot(lo):
            return lo
        if tbar >= self.spec.Adot(hi):
            return hi
        return float(self.spec.Adot_inverse(tbar))

    @cached_property
    def _constant_c_value(self) -> float:
        return sup_abs_over_interval(self.spec.Addot, self.theta_space.lower, self.theta_space.upper)


def poisson_spec() -> ExponentialFamilySpec:
    return ExponentialFamilySpec(
        log_h=lambda x: -gammaln(np.asarray(x, dtype=float) + 1),
        T=lambda x: np.asarray(x, dtype=float),
        A=np.exp,
        Adot=np.exp,
        Addot=np.exp,
        Adddot=np.exp,
        support=(0, math.inf),
        discrete=True,
        sampler=lambda rng, theta, size: rng.poisson(math.exp(theta), size=size).astype(float),
        Adot_inverse=math.log,
        ppf=lambda q, theta: stats.poisson.ppf(q, math.exp(theta)),
    )


def bernoulli_spec() -> ExponentialFamilySpec:
    def addot(t):
        s = expit(t)
        return s * (1 - s)

    def adddot(t):
        s = expit(t)
        return s * (1 - s) * (1 - 2 * s)

    return ExponentialFamilySpec(
        log_h=lambda x: np.zeros(np.shape(x)),
        T=lambda x: np.asarray(x, dtype=float),
        A=lambda t: np.logaddexp(0.0, t),
        Adot=expit,
        Addot=addot,
        Adddot=adddot,
        support=(0, 1),
        discrete=True,
        sampler=lambda rng, theta, size: (rng.random(size) < expit(theta)).astype(float),
        Adot_inverse=lambda m: math.log(m / (1 - m)),
        ppf=lambda q, theta: stats.bernoulli.ppf(q, expit(theta)),
    )


# ---------------------------------------------------------------------------
# registry

DEFAULT_THETA = {
    "gaussian_variance": (0.5, 2.0),
    "gaussian_mean": (-10.0, 10.0),
    "pareto_shape": (1.0, 2.0),
    "weibull_scale": (0.5, 2.0),
    "exponential_rate": (0.5, 2.0),
    "expfam_poisson": (-1.0, 1.0),
    "expfam_bernoulli": (-2.0, 2.0),
}

FAMILY_PARAMS = {
    "gaussian_variance": {},
    "gaussian_mean": {"sigma": float},
    "pareto_shape": {"x_min": float},
    "weibull_scale": {"shape": int},
    "exponential_rate": {},
    "expfam_poisson": {},
    "expfam_bernoulli": {},
}


def get_family(name: str, theta_lower: Optional[float] = None, theta_upper: Optional[float] = None, **params) -> ModelFamily:
    """Build a family by its registry name."""
    if name not in DEFAULT_THETA:
        raise ConfigurationError(f"unknown family {name!r}; known: {', '.join(sorted(DEFAULT_THETA))}")
    lo, hi = DEFAULT_THETA[name]
    space = ParameterSpace(lo if theta_lower is None else float(theta_lower), hi if theta_upper is None else float(theta_upper))
    unknown = set(params) - set(FAMILY_PARAMS[name])
    if unknown:
        raise ConfigurationError(f"{name}: unknown parameters {sorted(unknown)}")
    params = {k: FAMILY_PARAMS[name][k](v) for k, v in params.items()}
    if name == "gaussian_variance":
        return GaussianVariance(space)
    if name == "gaussian_mean":
        return GaussianMean(space, **params)
    if name == "pareto_shape":
        return ParetoShape(space, **params)
    if name == "weibull_scale":
        return WeibullScale(space, **params)
    if name == "exponential_rate":
        return ExponentialRate(space)
    if name == "expfam_poisson":
        return ExponentialFamily(space, spec=poisson_spec(), family_name=name)
    return ExponentialFamily(space, spec=bernoulli_spec(), family_name=name)


# ---------------------------------------------------------------------------
# operations


def score_derivatives(model: ModelFamily, x, theta):
    """``(l, ldot, lddot, ldddot)`` at ``(x, theta)``; raises DomainError off-domain."""
    out = model.derivatives(x, theta)
    if not all(np.all(np.isfinite(v)) for v in out):
        raise NumericError(f"{model.name}: non-finite derivative at x={x}, theta={theta}")
    return out


def fisher_information(model: ModelFamily, theta: float, method: str = "auto") -> float:
    """``I(theta) = E lddot(X, theta)``; closed form when known, else quadrature."""
    model.check_theta(theta)
    closed = model.fisher_closed(theta) if method != "quadrature" else None
    if closed is not None:
        val = float(closed)
    else:
        val = model.expect(lambda x: model.lddot(x, theta), theta)
    if not math.isfinite(val):
        raise NumericError(f"{model.name}: non-finite Fisher information at {theta}")
    return max(val, 0.0)


def lipschitz_envelope(model: ModelFamily, x):
    return model.lipschitz_c(x)


def c_moments(model: ModelFamily, theta_star: float) -> tuple[float, float]:
    """``(E c(X), E c(X)^2)`` under ``theta_star``."""
    model.check_theta(theta_star)
    if model.constant_c:
        c = model._constant_c_value
        return float(c), float(c * c)
    # c(x) grows like |x|^r, so its square needs the 2r-th moment
    growth = model.envelope_growth()
    if 2 * growth >= model.moment_limit(theta_star):
        raise MomentNonexistenceError(f"{model.name}: E c^2(X) diverges", order=2 * growth)
    m1 = model.expect(lambda x: model.lipschitz_c(x), theta_star)
    m2 = model.expect(lambda x: model.lipschitz_c(x) ** 2, theta_star)
    if not (math.isfinite(m1) and math.isfinite(m2)):
        raise MomentNonexistenceError(f"{model.name}: c-moments diverge at theta*={theta_star}")
    return m1, m2


def sample(model: ModelFamily, theta: float, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws at ``theta``; deterministic in ``seed``."""
    if n < 1:
        raise UsageError("n must be at least 1")
    model.check_theta(theta)
    return model.draw(np.random.default_rng(seed), theta, n)
