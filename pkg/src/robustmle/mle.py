"""Classical maximum likelihood: fitting, bias, concentration and oracle bounds.

The concentration results assume, on the region where the data live,

* a Hessian floor ``inf_theta lddot(x, theta) >= c_H > 0`` and
* a data-Lipschitz score ``|ldot(x, theta) - ldot(y, theta)| <= c_l d(x, y)``,

with ``d`` the absolute difference. Neither holds globally for every family
(Gaussian variance violates both on the real line), so the constants are
certified on a user-declared box and the box is reported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .concentration import REGIMES, TailBound, TailClass
from .errors import BoundaryWarning, ConfigurationError, NumericError, UsageError
from .families import ModelFamily, fisher_information
from .norms import DEFAULT_P_MAX, norm

MLE_XTOL = 1e-10


@dataclass(frozen=True)
class LipschitzProfile:
    c_H: float
    c_l: float
    d_norms: np.ndarray
    regime: str
    box: Optional[tuple] = None  # (x_lo, x_hi, theta_lo, theta_hi) when certified

    def __post_init__(self):
        if not (self.c_H > 0 and self.c_l > 0):
            raise ConfigurationError(f"need c_H > 0 and c_l > 0, got c_H={self.c_H}, c_l={self.c_l}")
        if self.regime not in REGIMES:
            raise UsageError(f"unknown regime {self.regime!r}")
        arr = np.asarray(self.d_norms, dtype=float).ravel()
        if arr.size == 0:
            raise UsageError("profile needs at least one d-norm")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise UsageError("d-norms must be finite and nonnegative")
        object.__setattr__(self, "d_norms", arr)

    @property
    def sum_sq(self) -> float:
        return math.fsum(self.d_norms**2)

    @property
    def max_norm(self) -> float:
        return float(self.d_norms.max())


@dataclass(frozen=True)
class BiasEstimate:
    kappa: float
    fisher: float
    n: int
    bias: float


def fit_mle(model: ModelFamily, sample, method: str = "auto") -> float:
    """Minimise the mean negative log-likelihood over Theta.

    Uses the family's closed form unless ``method="numeric"``; the numeric
    route is bounded Brent followed by a bracketed root of the mean score,
    which pins the optimum to ``MLE_XTOL``. An optimum outside Theta is
    projected onto the nearest endpoint with a :class:`BoundaryWarning`.
    """
    x = model.check_support(np.asarray(sample, dtype=float).ravel())
    if x.size == 0:
        raise UsageError("empty sample")
    space = model.theta_space
    est = model.mle_closed(x) if method != "numeric" else None
    if est is None:
        est = _numeric_mle(model, x)
    if not math.isfinite(est):
        raise NumericError(f"{model.name}: non-finite MLE")
    score = lambda t: float(np.mean(model.ldot(x, t)))
    exterior = est < space.lower or est > space.upper
    if not exterior and est == space.upper:
        exterior = score(space.upper) < 0
    if not exterior and est == space.lower:
        exterior = score(space.lower) > 0
    if exterior:
        warnings.warn(f"{model.name}: likelihood optimum lies outside Theta; projected onto the boundary", BoundaryWarning, stacklevel=2)
        est = float(space.clip(est))
    return float(est)


def _numeric_mle(model: ModelFamily, x: np.ndarray) -> float:
    space = model.theta_space

    def objective(t):
        val = float(np.mean(model.l(x, t)))
        if not math.isfinite(val):
            raise NumericError(f"{model.name}: non-finite likelihood at theta={t}")
        return val

    res = optimize.minimize_scalar(objective, bounds=(space.lower, space.upper), method="bounded", options={"xatol": MLE_XTOL})
    est = float(res.x)
    # bounded Brent stops near sqrt(eps) relative accuracy and never evaluates
    # the endpoints; settle both with the score
    score = lambda t: float(np.mean(model.ldot(x, t)))
    if score(space.upper) <= 0:
        return space.upper
    if score(space.lower) >= 0:
        return space.lower
    step = 1e-6 * space.width
    lo, hi = max(space.lower, est - step), min(space.upper, est + step)
    if score(lo) > 0 or score(hi) < 0:
        lo, hi = space.lower, space.upper
    return float(optimize.brentq(score, lo, hi, xtol=MLE_XTOL * 1e-2, rtol=4 * np.finfo(float).eps))


def certify_profile(
    model: ModelFamily,
    theta_star: float,
    n: int,
    regime: str = "theta2",
    x_box: Optional[tuple] = None,
    grid: int = 257,
    p_max: int = DEFAULT_P_MAX,
    c_H: Optional[float] = None,
    c_l: Optional[float] = None,
) -> LipschitzProfile:
    """Grid-certify ``(c_H, c_l)`` on ``x_box x Theta`` and attach the d-norms.

    Explicit ``c_H`` / ``c_l`` override the grid candidates. A nonpositive
    Hessian floor on the box aborts with the location of the violation.
    """
    if x_box is None:
        q = model.quantile(np.array([1e-6, 1 - 1e-6]), theta_star)
        x_box = (float(q[0]), float(q[1]))
    lo, hi = x_box
    if model.discrete:
        xs = np.arange(math.ceil(lo), math.floor(hi) + 1, dtype=float)
    else:
        xs = np.linspace(lo, hi, grid)
    xs = xs[model.in_support(xs)]
    if xs.size < 2:
        raise ConfigurationError(f"x box {x_box} has fewer than two support points")
    thetas = model.theta_space.grid(grid)
    X, T = np.meshgrid(xs, thetas, indexing="ij")

    if c_H is None:
        H = model.lddot(X, T)
        i = np.unravel_index(np.argmin(H), H.shape)
        c_H = float(H[i])
        if not c_H > 0:
            raise ConfigurationError(
                f"{model.name}: Hessian floor c_H={c_H:.6g} <= 0 at x={X[i]:.6g}, theta={T[i]:.6g} "
                f"on box x in [{lo}, {hi}]; the concentration bounds do not apply"
            )
    if c_l is None:
        S = model.ldot(X, T)
        slopes = np.abs(np.diff(S, axis=0)) / np.diff(xs)[:, None]
        coarse = np.linspace(0, xs.size - 1, min(xs.size, 65)).astype(int)
        Sc = S[coarse]
        dx = np.abs(xs[coarse][:, None] - xs[coarse][None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            pair = np.abs(Sc[:, None, :] - Sc[None, :, :]) / dx[:, :, None]
        c_l = float(max(np.max(slopes), np.nanmax(np.where(dx[:, :, None] > 0, pair, np.nan))))
        if not c_l > 0:
            raise ConfigurationError(f"{model.name}: score does not vary with x on the box")

    d = norm(model.difference_moment_oracle(theta_star), regime, p_max).value
    return LipschitzProfile(c_H, c_l, np.full(n, d), regime, box=(lo, hi, model.theta_space.lower, model.theta_space.upper))


def perturbation_bound(profile: LipschitzProfile, n: int, d_value: float) -> float:
    """Change of the MLE when one of ``n`` observations moves by ``d_value``."""
    if n < 1 or d_value < 0:
        raise UsageError("need n >= 1 and d_value >= 0")
    return profile.c_l * d_value / (n * profile.c_H)


def mle_concentration(profile: LipschitzProfile, n: int, t: float) -> TailBound:
    """Two-sided bound on ``P(|theta_hat - E theta_hat| > t)``, capped at 1."""
    if profile.d_norms.size != n:
        raise UsageError(f"profile has {profile.d_norms.size} d-norms but n={n}")
    if t < 0:
        raise UsageError("t must be nonnegative")
    L = profile.c_l / (profile.c_H * n)
    if profile.regime == "theta2":
        cls = TailClass("subG", (8 * L * L * profile.sum_sq,))
        denom = 16 * L * L * profile.sum_sq
    else:
        cls = TailClass("subGamma", (2 * L * L * profile.sum_sq, L * profile.max_norm))
        denom = 4 * L * L * profile.sum_sq + 2 * L * profile.max_norm * t
    if t == 0:
        return TailBound(t, 1.0, cls)
    bound = 0.0 if denom == 0 else min(1.0, 2.0 * math.exp(-t * t / denom))
    return TailBound(t, bound, cls)


def kappa(model: ModelFamily, theta_star: float, method: str = "auto") -> float:
    """``2 E[ldot lddot] - E[ldddot]`` at ``theta_star``."""
    model.check_theta(theta_star)
    closed = model.kappa_closed(theta_star) if method != "quadrature" else None
    if closed is not None:
        return float(closed)
    a = model.expect(lambda x: model.ldot(x, theta_star) * model.lddot(x, theta_star), theta_star)
    b = model.expect(lambda x: model.ldddot(x, theta_star), theta_star)
    val = 2 * a - b
    if not math.isfinite(val):
        raise NumericError(f"{model.name}: kappa diverges at {theta_star}")
    return val


def bias_estimate(model: ModelFamily, theta_star: float, n: int) -> BiasEstimate:
    """First-order bias ``kappa / (2 n I^2)``; the o(1/n) remainder is not tracked."""
    if n < 1:
        raise UsageError("n must be at least 1")
    info = fisher_information(model, theta_star)
    if info <= 0:
        raise NumericError(f"{model.name}: zero Fisher information at {theta_star}")
    k = kappa(model, theta_star)
    return BiasEstimate(k, info, n, k / (2 * n * info * info))


def oracle_bound(
    profile: LipschitzProfile,
    model: Optional[ModelFamily],
    theta_star: float,
    n: int,
    delta: float,
    kappa_value: Optional[float] = None,
    fisher_value: Optional[float] = None,
) -> float:
    """First-order high-probability radius for ``|theta_hat - theta*|``.

    Concentration radius plus the absolute first-order bias. ``kappa_value``
    and ``fisher_value`` override the model's values; ``model`` may be None
    when both are given.
    """
    if not 0 < delta < 1:
        raise UsageError("delta must lie in (0, 1)")
    if profile.d_norms.size != n:
        raise UsageError(f"profile has {profile.d_norms.size} d-norms but n={n}")
    k = kappa(model, theta_star) if kappa_value is None else kappa_value
    info = fisher_information(model, theta_star) if fisher_value is None else fisher_value
    if info <= 0:
        raise NumericError("zero Fisher information")
    ratio = profile.c_l / profile.c_H
    mean_sq = profile.sum_sq / n
    if profile.regime == "theta2":
        radius = 4 * ratio / math.sqrt(n) * math.sqrt(mean_sq * math.log(2 / delta))
        return radius + abs(k) / (2 * n * info * info)
    log1 = math.log(1 / delta)
    radius = 2 * ratio / math.sqrt(n) * math.sqrt(mean_sq * log1)
    return radius + (profile.max_norm * log1 * ratio + abs(k) / (2 * info * info)) / n
