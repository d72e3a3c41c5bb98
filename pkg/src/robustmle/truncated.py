"""Log-truncated Z-estimation.

The estimator is the root in Theta of the truncated score

    Z_beta(theta) = 1/(n beta) * sum_i psi(beta * ldot(X_i, theta)),
    psi(x) = sign(x) * log(1 + |x| + x^2/2).

Interval half-widths and tuning rules come in two cases: ``general_c`` uses
the moments ``E c(X)`` and ``E c(X)^2`` of the Lipschitz envelope, and
``constant_c`` applies when ``c(x)`` is a constant ``c``.

With ``a = n beta^2 Ec2``, ``b = n beta Ec`` and ``c0 = n beta^2 I + log(1/delta)``
the general half-width is the smaller root of ``a t^2 - b t + c0``, written in
the rationalised form ``2 c0 / (b (1 + sqrt(1 - 4 a c0 / b^2)))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InfeasibleError, MonotonicityWarning, NoRootError, UsageError
from .families import ModelFamily, ParameterSpace, c_moments, fisher_information
from .mle import fit_mle

ROOT_TOL = 1e-10
CASES = ("general_c", "constant_c")
MODES = ("theoretical", "practical")


def psi(x):
    """Log-truncation ``sign(x) log(1 + |x| + x^2/2)``; odd and increasing, ``|psi(x)| <= |x|``."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.sign(x) * np.log1p(ax + 0.5 * ax * ax)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TruncatedScoreConfig:
    beta: float
    delta: float
    theta_space: ParameterSpace

    def __post_init__(self):
        if not self.beta > 0:
            raise UsageError(f"beta must be positive, got {self.beta}")
        if not 0 < self.delta < 0.5:
            raise UsageError(f"delta must lie in (0, 1/2), got {self.delta}")


@dataclass(frozen=True)
class TheoryConstants:
    """Population quantities at ``theta*``: Fisher information and envelope moments."""

    fisher: float
    c_mean: float
    c_sq_mean: float
    constant_c: bool = False

    @classmethod
    def from_model(cls, model: ModelFamily, theta_star: float) -> "TheoryConstants":
        m1, m2 = c_moments(model, theta_star)
        return cls(fisher_information(model, theta_star), m1, m2, model.constant_c)


@dataclass(frozen=True)
class SampleSizeRequirement:
    n_min: Optional[int]
    case: str

    @property
    def satisfiable(self) -> bool:
        return self.n_min is not None

    def ok(self, n: int) -> bool:
        return self.n_min is not None and n >= self.n_min


@dataclass(frozen=True)
class RobustEstimate:
    theta_hat: float
    beta: float
    delta: float
    half_width: Optional[float]
    interval: Optional[tuple]
    n_condition_ok: bool
    case: str
    mode: str

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "beta": self.beta,
            "delta": self.delta,
            "half_width": self.half_width,
            "interval": list(self.interval) if self.interval is not None else None,
            "mode": self.mode,
            "n_condition_ok": self.n_condition_ok,
            "case": self.case,
        }


Source = Union[ModelFamily, TheoryConstants]


def _constants(source: Source, theta_star: Optional[float]) -> TheoryConstants:
    if isinstance(source, TheoryConstants):
        return source
    if theta_star is None:
        raise UsageError("theta_star is required when passing a model")
    return TheoryConstants.from_model(source, theta_star)


def default_case(source: Source) -> str:
    return "constant_c" if getattr(source, "constant_c", False) else "general_c"


def _check_case(case: str) -> str:
    if case not in CASES:
        raise UsageError(f"case must be one of {CASES}, got {case!r}")
    return case


def _log_inv(delta: float) -> float:
    if not 0 < delta < 1:
        raise UsageError(f"delta must lie in (0, 1), got {delta}")
    return math.log(1.0 / delta)


# ---------------------------------------------------------------------------
# estimating equation


def z_hat(model: ModelFamily, sample, theta: float, beta: float) -> float:
    if not beta > 0:
        raise UsageError("beta must be positive")
    model.check_theta(theta)
    x = model.check_support(np.asarray(sample, dtype=float).ravel())
    return float(np.sum(psi(beta * model.ldot(x, theta))) / (x.size * beta))


def _z_rows(model: ModelFamily, X: np.ndarray, theta: np.ndarray, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    b = beta[:, None] if beta.ndim else beta
    return np.sum(psi(b * model.ldot(X, theta[:, None])), axis=1) / (X.shape[1] * beta)


@dataclass(frozen=True)
class BatchRoots:
    roots: np.ndarray
    ok: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray


def solve_batch(model: ModelFamily, X, beta, tol: float = ROOT_TOL) -> BatchRoots:
    """Bisection for every row of ``X`` at once.

    ``beta`` is a scalar or one value per row. Rows without an endpoint sign
    change get ``ok=False`` and a NaN root.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    lo = np.full(m, model.theta_space.lower)
    hi = np.full(m, model.theta_space.upper)
    zl = _z_rows(model, X, lo, beta)
    zh = _z_rows(model, X, hi, beta)
    z_lower, z_upper = zl.copy(), zh.copy()
    ok = (np.sign(zl) * np.sign(zh)) <= 0
    done = zl == 0
    hi = np.where(done, lo, hi)
    lo = np.where(zh == 0, hi, lo)
    done |= zh == 0
    iters = int(math.ceil(math.log2(max(model.theta_space.width / tol, 2.0)))) + 1
    for _ in range(iters):
        active = ok & ~done & (hi - lo > tol)
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        zm = _z_rows(model, X, mid, beta)
        hit = active & (zm == 0)
        same = np.sign(zm) == np.sign(zl)
        lo = np.where(active & ~hit & same, mid, lo)
        zl = np.where(active & ~hit & same, zm, zl)
        hi = np.where(active & ~hit & ~same, mid, hi)
        lo = np.where(hit, mid, lo)
        hi = np.where(hit, mid, hi)
        done |= hit
    roots = np.where(ok, 0.5 * (lo + hi), np.nan)
    return BatchRoots(roots, ok, z_lower, z_upper)


def monotone_sign_pattern(model: ModelFamily, sample, beta: float, points: int = 33) -> bool:
    """True when ``Z_beta`` changes sign at most once on a probe grid of Theta."""
    x = np.asarray(sample, dtype=float).ravel()
    ts = model.theta_space.grid(points)
    z = _z_rows(model, np.broadcast_to(x, (points, x.size)), ts, beta)
    s = np.sign(z)
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1])) <= 1


def solve(model: ModelFamily, sample, config: TruncatedScoreConfig) -> float:
    """Root of ``Z_beta`` in Theta to absolute tolerance 1e-10.

    Works for either monotone orientation; raises :class:`NoRootError` when
    the endpoint values share a sign.
    """
    if config.theta_space != model.theta_space:
        model = _with_space(model, config.theta_space)
    x = model.check_support(np.asarray(sample, dtype=float).ravel())
    if x.size == 0:
        raise UsageError("empty sample")
    res = solve_batch(model, x[None, :], config.beta)
    if not res.ok[0]:
        raise NoRootError(
            f"{model.name}: Z_beta has no sign change on Theta "
            f"(Z(lower)={res.z_lower[0]:.6g}, Z(upper)={res.z_upper[0]:.6g})",
            lower_value=float(res.z_lower[0]),
            upper_value=float(res.z_upper[0]),
        )
    if not monotone_sign_pattern(model, x, config.beta):
        warnings.warn(f"{model.name}: Z_beta changes sign more than once on Theta", MonotonicityWarning, stacklevel=2)
    return float(res.roots[0])


def _with_space(model: ModelFamily, space: ParameterSpace) -> ModelFamily:
    import dataclasses

    return dataclasses.replace(model, theta_space=space)


# ---------------------------------------------------------------------------
# theory: sample size, tuning, half-widths


def min_sample_size(source: Source, theta_star=None, beta: float = 0.0, delta: float = 0.05, case: Optional[str] = None) -> SampleSizeRequirement:
    """Smallest ``n`` for which the interval guarantee holds at this ``beta``.

    ``general_c``: ``n >= 4 Ec2 L / (Ec^2 - 4 beta^2 Ec2 I)``;
    ``constant_c``: ``n >= 2 L / (1 - beta^2 I)``, with ``L = log(1/delta)``.
    """
    k = _constants(source, theta_star)
    case = _check_case(case or default_case(k))
    L = _log_inv(delta)
    if case == "general_c":
        num = 4 * k.c_sq_mean * L
        den = k.c_mean**2 - 4 * beta**2 * k.c_sq_mean * k.fisher
    else:
        num = 2 * L
        den = 1 - beta**2 * k.fisher
    if den <= 0:
        return SampleSizeRequirement(None, case)
    return SampleSizeRequirement(int(math.ceil(num / den)), case)


def tune_beta(source: Source, theta_star=None, n: int = 1, delta: float = 0.05, case: Optional[str] = None) -> float:
    """The ``beta`` minimising the half-width."""
    k = _constants(source, theta_star)
    case = _check_case(case or default_case(k))
    L = _log_inv(delta)
    if k.fisher <= 0:
        raise InfeasibleError("Fisher information must be positive")
    if case == "general_c":
        gap = n * k.c_mean**2 - 4 * k.c_sq_mean * L
        if gap <= 0:
            raise InfeasibleError(
                f"tuning needs n [Ec]^2 > 4 Ec^2 log(1/delta): {n * k.c_mean**2:.6g} <= {4 * k.c_sq_mean * L:.6g}"
            )
        inflate = 1 + 4 * k.c_sq_mean * L / gap
        return math.sqrt(L / (k.fisher * n * inflate))
    gap = n - 2 * L
    if gap <= 0:
        raise InfeasibleError(f"tuning needs n > 2 log(1/delta): n={n}, 2 log(1/delta)={2 * L:.6g}")
    return math.sqrt(2 * L / (k.fisher * n * (1 + 2 * L / gap)))


def half_width(source: Source, theta_star=None, beta: float = 1.0, n: int = 1, delta: float = 0.05, case: Optional[str] = None) -> float:
    """Distance from ``theta*`` to the interval endpoints at a given ``beta``."""
    k = _constants(source, theta_star)
    case = _check_case(case or default_case(k))
    L = _log_inv(delta)
    if not beta > 0:
        raise UsageError("beta must be positive")
    if case == "general_c":
        disc = 1 - 4 * beta**2 * k.c_sq_mean * k.fisher / k.c_mean**2 - 4 * k.c_sq_mean * L / (n * k.c_mean**2)
        num = beta * k.fisher + L / (n * beta)
        scale = k.c_mean
        violated = "n >= 4 Ec^2 log(1/delta) / ([Ec]^2 - 4 beta^2 Ec^2 I)"
    else:
        disc = 1 - beta**2 * k.fisher - 2 * L / n
        num = beta * k.fisher / 2 + L / (n * beta)
        scale = k.c_mean
        violated = "beta^2 I + 2 log(1/delta)/n <= 1"
    if disc < 0:
        raise InfeasibleError(f"negative discriminant {disc:.6g}: violates {violated}")
    return num / (0.5 * scale * (1 + math.sqrt(disc)))


def deviation_bound(source: Source, theta_star=None, n: int = 1, delta: float = 0.05, case: Optional[str] = None) -> float:
    """Half-width at the tuned ``beta``, in closed form."""
    k = _constants(source, theta_star)
    case = _check_case(case or default_case(k))
    L = _log_inv(delta)
    if case == "general_c":
        den = n * k.c_mean**2 - 4 * k.c_sq_mean * L
        if den <= 0:
            raise InfeasibleError("deviation bound needs n [Ec]^2 > 4 Ec^2 log(1/delta)")
        return 2 * math.sqrt(k.fisher * L / den)
    c2 = k.c_mean**2
    den = n * c2 - 2 * c2 * L
    if den <= 0:
        raise InfeasibleError("deviation bound needs n > 2 log(1/delta)")
    return math.sqrt(2 * k.fisher * L / den)


def interval(center: float, h: float, mode: str = "theoretical") -> tuple[float, float]:
    """``(center - h, center + h)``.

    ``mode`` only labels the center: ``theoretical`` means ``theta*``,
    ``practical`` means the estimate with plug-in constants.
    """
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    if not h > 0:
        raise UsageError("half-width must be positive")
    return (center - h, center + h)


def fit_robust(
    model: ModelFamily,
    sample,
    delta: float,
    beta: Union[float, str] = "auto",
    case: Optional[str] = None,
    mode: str = "practical",
    theta_star: Optional[float] = None,
) -> RobustEstimate:
    """Fit the truncated estimator and report its interval.

    In ``practical`` mode the unknown ``I``, ``Ec``, ``Ec2`` are plugged in:
    at the classical MLE for tuning ``beta``, then at the robust estimate for
    the half-width. ``theoretical`` mode uses ``theta_star`` throughout.
    """
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    if not 0 < delta < 0.5:
        raise UsageError(f"delta must lie in (0, 1/2), got {delta}")
    case = _check_case(case or default_case(model))
    x = model.check_support(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if mode == "theoretical":
        if theta_star is None:
            raise UsageError("theoretical mode needs theta_star")
        pilot = theta_star
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pilot = fit_mle(model, x)
    if beta == "auto":
        b = tune_beta(model, pilot, n, delta, case)
    else:
        b = float(beta)
    theta_hat = solve(model, x, TruncatedScoreConfig(b, delta, model.theta_space))
    center = theta_star if mode == "theoretical" else theta_hat
    consts = TheoryConstants.from_model(model, center)
    req = min_sample_size(consts, beta=b, delta=delta, case=case)
    try:
        h = half_width(consts, beta=b, n=n, delta=delta, case=case)
        iv = interval(center, h, mode)
    except InfeasibleError:
        h, iv = None, None
    return RobustEstimate(theta_hat, b, delta, h, iv, req.ok(n) and h is not None, case, mode)
