"""Moment oracles and the moment-ratio norms ``theta1`` and ``theta2``.

For a centered random variable ``X``::

    ||X||_theta1 = sup_{p >= 1} (E|X|^p / p!) ** (1/p)
    ||X||_theta2 = sup_{p >= 1} (E X^{2p} / (2p-1)!!) ** (1/(2p))

The supremum is taken over integer orders ``1..p_max``. Everything is done
in log space so factorials never overflow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

from .errors import HighVarianceWarning, MomentNonexistenceError, UsageError

DEFAULT_P_MAX = 50
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class MomentOracle:
    """Source of absolute moments ``p -> E|X|^p``.

    ``log_moment`` returns ``log E|X|^p``; ``-inf`` encodes a zero moment and
    ``+inf`` a divergent one. Orders at or above ``max_order`` are treated as
    divergent without calling ``log_moment``.
    """

    log_moment: Callable[[float], float]
    kind: str
    label: str = ""
    max_order: float = math.inf
    sample_size: Optional[int] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def log_absolute_moment(self, p: float) -> float:
        if p <= 0:
            raise UsageError(f"moment order must be positive, got {p}")
        if p >= self.max_order:
            return math.inf
        if p not in self._cache:
            self._cache[p] = float(self.log_moment(p))
        return self._cache[p]

    def absolute_moment(self, p: float) -> float:
        return math.exp(self.log_absolute_moment(p))

    def high_variance(self, p: float) -> bool:
        return self.kind == "empirical" and p > 10 and (self.sample_size or 0) < 100_000

    def scaled(self, c: float) -> "MomentOracle":
        """Oracle for ``c * X``."""
        if c == 0:
            return degenerate_oracle()
        logc = math.log(abs(c))
        return MomentOracle(
            lambda p: self.log_absolute_moment(p) + p * logc,
            kind=self.kind,
            label=f"{c}*({self.label})",
            max_order=self.max_order,
            sample_size=self.sample_size,
        )


@dataclass(frozen=True)
class NormResult:
    value: float
    p_star: int
    truncated: bool
    regime: str
    p_max: int

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "norm": self.value,
            "p_star": self.p_star,
            "truncated": self.truncated,
            "p_max": self.p_max,
        }


def log_double_factorial_odd(p: int) -> float:
    """``log((2p-1)!!)``."""
    return float(gammaln(2 * p + 1) - p * math.log(2.0) - gammaln(p + 1))


def _scan(ratios: list[float], regime: str, p_max: int) -> NormResult:
    arr = np.asarray(ratios)
    if np.all(np.isneginf(arr)):
        return NormResult(0.0, 1, False, regime, p_max)
    best = float(arr.max())
    p_star = int(np.argmax(arr >= best - _TIE_TOL * max(1.0, abs(best)))) + 1
    return NormResult(math.exp(best), p_star, p_star == p_max, regime, p_max)


def _check_p_max(p_max: int) -> None:
    if p_max < 20:
        raise UsageError(f"p_max must be at least 20, got {p_max}")


def _maybe_warn(oracle: MomentOracle, top: int) -> None:
    if oracle.high_variance(top):
        warnings.warn(
            f"empirical moments above order 10 from n={oracle.sample_size} draws are high-variance",
            HighVarianceWarning,
            stacklevel=3,
        )


def _precheck(oracle: MomentOracle, orders: list[int]) -> None:
    # a known moment limit settles nonexistence without any quadrature
    for q in orders:
        if q >= oracle.max_order:
            raise MomentNonexistenceError(f"E|X|^{q} is not finite ({oracle.label})", order=q)


def theta1_norm(oracle: MomentOracle, p_max: int = DEFAULT_P_MAX) -> NormResult:
    """``sup_p (E|X|^p / p!)^(1/p)`` over integer ``p`` in ``[1, p_max]``."""
    _check_p_max(p_max)
    _maybe_warn(oracle, p_max)
    _precheck(oracle, [p for p in range(1, p_max + 1)])
    ratios = []
    for p in range(1, p_max + 1):
        lm = oracle.log_absolute_moment(p)
        if not (lm < math.inf):
            raise MomentNonexistenceError(f"E|X|^{p} is not finite", order=p)
        ratios.append((lm - float(gammaln(p + 1))) / p)
    return _scan(ratios, "theta1", p_max)


def theta2_norm(oracle: MomentOracle, p_max: int = DEFAULT_P_MAX) -> NormResult:
    """``sup_p (E X^{2p} / (2p-1)!!)^(1/(2p))`` over integer ``p`` in ``[1, p_max]``."""
    _check_p_max(p_max)
    _maybe_warn(oracle, 2 * p_max)
    _precheck(oracle, [2 * p for p in range(1, p_max + 1)])
    ratios = []
    for p in range(1, p_max + 1):
        lm = oracle.log_absolute_moment(2 * p)
        if not (lm < math.inf):
            raise MomentNonexistenceError(f"E X^{2 * p} is not finite", order=2 * p)
        ratios.append((lm - log_double_factorial_odd(p)) / (2 * p))
    return _scan(ratios, "theta2", p_max)


def norm(oracle: MomentOracle, regime: str, p_max: int = DEFAULT_P_MAX) -> NormResult:
    if regime == "theta1":
        return theta1_norm(oracle, p_max)
    if regime == "theta2":
        return theta2_norm(oracle, p_max)
    raise UsageError(f"unknown norm regime {regime!r}")


# ---------------------------------------------------------------------------
# oracle constructors


def gaussian_oracle(sigma: float) -> MomentOracle:
    """``X ~ N(0, sigma^2)``: ``E|X|^p = sigma^p 2^{p/2} Gamma((p+1)/2) / sqrt(pi)``."""
    if sigma == 0:
        return degenerate_oracle()
    ls = math.log(abs(sigma))

    def lm(p):
        return p * ls + 0.5 * p * math.log(2.0) + float(gammaln((p + 1) / 2)) - 0.5 * math.log(math.pi)

    return MomentOracle(lm, kind="analytic", label=f"N(0,{sigma}^2)")


def laplace_oracle(scale: float) -> MomentOracle:
    """``X ~ Laplace(0, scale)``: ``E|X|^p = Gamma(p+1) scale^p``."""
    if scale == 0:
        return degenerate_oracle()
    ls = math.log(abs(scale))
    return MomentOracle(
        lambda p: float(gammaln(p + 1)) + p * ls, kind="analytic", label=f"Laplace(0,{scale})"
    )


def rademacher_oracle() -> MomentOracle:
    return MomentOracle(lambda p: 0.0, kind="analytic", label="Rademacher")


def degenerate_oracle() -> MomentOracle:
    return MomentOracle(lambda p: -math.inf, kind="analytic", label="0")


def empirical_moment_oracle(sample) -> MomentOracle:
    """Plug-in oracle: ``E|X|^p`` is the sample mean of ``|x_i|^p``."""
    x = np.abs(np.asarray(sample, dtype=float).ravel())
    if x.size == 0:
        raise UsageError("empirical moment oracle needs a nonempty sample")
    if not np.all(np.isfinite(x)):
        raise UsageError("sample contains non-finite values")
    n = x.size
    with np.errstate(divide="ignore"):
        logx = np.log(x)

    def lm(p):
        return float(logsumexp(p * logx)) - math.log(n)

    return MomentOracle(lm, kind="empirical", label=f"empirical(n={n})", sample_size=n)


def quadrature_oracle(
    logpdf: Callable[[np.ndarray], np.ndarray],
    support: tuple[float, float],
    center: float = 0.0,
    max_order: float = math.inf,
    discrete: bool = False,
    label: str = "",
) -> MomentOracle:
    """Oracle for ``|X - center|`` where ``X`` has log-density ``logpdf``.

    Continuous laws are integrated piecewise with adaptive Gauss-Kronrod over
    a window that captures the bulk of ``|x-center|^p f(x)``; discrete laws
    (integer support) are summed.
    """

    def lm(p):
        if discrete:
            return _log_moment_discrete(logpdf, support, center, p)
        return _log_moment_continuous(logpdf, support, center, p)

    return MomentOracle(lm, kind="quadrature", label=label, max_order=max_order)


def _log_integrand(logpdf, center, p):
    def g(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = p * np.log(np.abs(x - center)) + logpdf(x)
        return np.where(np.isnan(out), -np.inf, out)

    return g


def _log_moment_continuous(logpdf, support, center, p) -> float:
    lo, hi = support
    g = _log_integrand(logpdf, center, p)
    # locate the mass on a geometric grid on each side of the center
    offsets = np.geomspace(1e-8, 1e8, 4001)
    pts = np.concatenate([center - offsets[::-1], [center], center + offsets])
    pts = pts[(pts > lo) & (pts < hi)]
    vals = g(pts)
    peak = float(np.max(vals))
    if not np.isfinite(peak):
        return -math.inf
    keep = pts[vals > peak - 80.0]
    a = max(lo, float(keep.min()) - 1e-8) if keep.size else lo
    b = min(hi, float(keep.max()) + 1e-8) if keep.size else hi
    # pad the window by a step so tails of the integrand are not cut sharply
    width = b - a
    a = max(lo, a - 0.05 * width)
    b = min(hi, b + 0.05 * width)
    breaks = sorted({a, b, *(c for c in (center, float(pts[np.argmax(vals)])) if a < c < b)})

    def f(x):
        return math.exp(float(g(np.array([x]))[0]) - peak)

    total = 0.0
    for u, v in zip(breaks[:-1], breaks[1:]):
        val, _ = integrate.quad(f, u, v, limit=200, epsabs=1e-13, epsrel=1e-11)
        total += val
    if total <= 0:
        return -math.inf
    return math.log(total) + peak


def _log_moment_discrete(logpdf, support, center, p) -> float:
    lo, hi = support
    lo = int(math.ceil(lo))
    g = _log_integrand(logpdf, center, p)
    chunk = 4096
    start = lo
    terms = []
    best = -math.inf
    while True:
        stop = start + chunk if math.isinf(hi) else min(int(hi) + 1, start + chunk)
        xs = np.arange(start, stop, dtype=float)
        vals = g(xs)
        terms.append(vals)
        best = max(best, float(np.max(vals)))
        if stop > hi or (np.isfinite(best) and vals[-1] < best - 80.0 and np.all(np.diff(vals[-16:]) < 0)):
            break
        start = stop
    allv = np.concatenate(terms)
    if not np.isfinite(best):
        return -math.inf
    return float(logsumexp(allv))
