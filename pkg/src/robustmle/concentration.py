"""McDiarmid-type tail bounds with explicit constants.

Given per-coordinate norms ``||D_k||`` of the centered conditional
increments of ``f(Z)``:

* theta2 norms give ``f - Ef ~ subG(8 sum ||D_k||^2)`` and
  ``P(f - Ef > t) <= exp(-t^2 / (16 sum ||D_k||^2))``;
* theta1 norms give ``f - Ef ~ subGamma(eta, M)`` with
  ``eta = 2 sum ||D_k||^2`` and ``M = max ||D_k||``, hence
  ``P(f - Ef > sqrt(2 eta t) + M t) <= exp(-t)`` and
  ``P(f - Ef > t) <= exp(-t^2 / (2 eta + 2 M t))``.

For ``f = sum`` the increment is ``X_k - E X_k`` whatever the other
coordinates, so the supremum over ``z`` is vacuous; for any other ``f`` the
caller supplies already-supremised norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import UsageError
from .families import ModelFamily
from .norms import DEFAULT_P_MAX, MomentOracle, norm

REGIMES = ("theta1", "theta2")


@dataclass(frozen=True)
class DeviationNormSet:
    norms: np.ndarray
    regime: str

    def __post_init__(self):
        arr = np.asarray(self.norms, dtype=float).ravel()
        if arr.size < 1:
            raise UsageError("a deviation norm set needs at least one entry")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise UsageError("deviation norms must be finite and nonnegative")
        if self.regime not in REGIMES:
            raise UsageError(f"unknown regime {self.regime!r}")
        object.__setattr__(self, "norms", arr)

    @property
    def n(self) -> int:
        return self.norms.size

    @property
    def sum_sq(self) -> float:
        return math.fsum(self.norms**2)

    @property
    def max(self) -> float:
        return float(self.norms.max())


@dataclass(frozen=True)
class TailClass:
    """``subG`` (params ``(sigma2,)``), ``subE`` (``(lam, alpha)``) or ``subGamma`` (``(eta, M)``)."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("subG", "subE", "subGamma"):
            raise UsageError(f"unknown tail class {self.kind!r}")
        if any(p < 0 or not math.isfinite(p) for p in self.params):
            raise UsageError("tail-class parameters must be finite and nonnegative")

    @property
    def degenerate(self) -> bool:
        return any(p == 0 for p in self.params)


@dataclass(frozen=True)
class TailBound:
    t: float
    bound: float
    tail_class: TailClass


def _require(norms: DeviationNormSet, regime: str) -> None:
    if norms.regime != regime:
        raise UsageError(f"expected {regime} norms, got {norms.regime}")


def subg_params_prop2(norms: DeviationNormSet) -> TailClass:
    _require(norms, "theta2")
    return TailClass("subG", (8.0 * norms.sum_sq,))


def subgamma_params_cor3(norms: DeviationNormSet) -> TailClass:
    _require(norms, "theta1")
    return TailClass("subGamma", (2.0 * norms.sum_sq, norms.max))


def subg_tail_prob(params: TailClass, t: float) -> float:
    """``min(1, exp(-t^2 / (2 sigma2)))``; with ``sigma2 = 8 sum`` this is the ``16 sum`` form."""
    if params.kind != "subG":
        raise UsageError("subg_tail_prob needs a subG class")
    if t < 0:
        raise UsageError("t must be nonnegative")
    (sigma2,) = params.params
    if t == 0:
        return 1.0
    if sigma2 == 0:
        return 0.0
    return min(1.0, math.exp(-t * t / (2.0 * sigma2)))


def subgamma_quantile(params: TailClass, t: float) -> float:
    """Deviation level ``sqrt(2 eta t) + M t`` exceeded with probability at most ``e^{-t}``."""
    if params.kind != "subGamma":
        raise UsageError("subgamma_quantile needs a subGamma class")
    if t < 0:
        raise UsageError("t must be nonnegative")
    eta, M = params.params
    return math.sqrt(2.0 * eta * t) + M * t


def subgamma_tail_prob(params: TailClass, t: float) -> float:
    """``min(1, exp(-t^2 / (2 eta + 2 M t)))``."""
    if params.kind != "subGamma":
        raise UsageError("subgamma_tail_prob needs a subGamma class")
    if t < 0:
        raise UsageError("t must be nonnegative")
    if t == 0:
        return 1.0
    eta, M = params.params
    denom = 2.0 * eta + 2.0 * M * t
    if denom == 0:
        return 0.0
    return min(1.0, math.exp(-t * t / denom))


def tail_bound(norms: DeviationNormSet, t: float, two_sided: bool = False) -> TailBound:
    """The regime-appropriate one-sided (or doubled and capped) tail bound."""
    if norms.regime == "theta2":
        cls = subg_params_prop2(norms)
        p = subg_tail_prob(cls, t)
    else:
        cls = subgamma_params_cor3(norms)
        p = subgamma_tail_prob(cls, t)
    if two_sided:
        p = min(1.0, 2.0 * p)
    return TailBound(t, p, cls)


def tail_curve(norms: DeviationNormSet, ts, two_sided: bool = False) -> np.ndarray:
    return np.array([tail_bound(norms, float(t), two_sided).bound for t in ts])


# ---------------------------------------------------------------------------


def _sup_scan(expr, p_max: int = 200) -> float:
    return max(expr(p) for p in range(1, p_max + 1))


@dataclass(frozen=True)
class ConstantComparison:
    distribution: str
    old: float
    new: float

    @property
    def ratio(self) -> float:
        return self.old / self.new


def remark1_constants(dist: str, n: int, scale: float = 1.0) -> ConstantComparison:
    """Tail-exponent denominators of the psi-norm bounds against the theta-norm bounds.

    ``dist="gaussian"`` takes ``scale = sigma^2``; ``dist="laplace"`` takes
    ``scale = lambda``. The suprema over ``p`` that multiply the older
    constants are evaluated by a scan over ``p = 1..200`` (each is 1, at
    ``p = 1``).
    """
    if n < 1:
        raise UsageError("n must be at least 1")
    if dist == "gaussian":
        sigma2 = scale
        sup_g = _sup_scan(lambda p: math.exp(2.0 / p * math.lgamma((p + 1) / 2)) / p)
        old = 64.0 * math.e * n * sigma2 / math.sqrt(math.pi) * sup_g
        new = 16.0 * n * sigma2
    elif dist == "laplace":
        lam = scale
        sup_sq = _sup_scan(lambda p: math.exp(2.0 / p * math.lgamma(p + 1)) / p**2)
        sup_lin = _sup_scan(lambda p: math.exp(1.0 / p * math.lgamma(p + 1)) / p)
        old = 4.0 * math.e**2 * n * lam**2 * sup_sq + 2.0 * math.e * lam * sup_lin
        new = 4.0 * n * lam**2 + 2.0 * lam
    else:
        raise UsageError(f"unknown distribution {dist!r}")
    return ConstantComparison(dist, old, new)


def sum_deviation_norms(
    source: Union[ModelFamily, MomentOracle],
    n: int,
    regime: str,
    theta_star: float | None = None,
    p_max: int = DEFAULT_P_MAX,
) -> DeviationNormSet:
    """Norms of ``X_k - E X_k`` for ``f = X_1 + ... + X_n`` with i.i.d. summands.

    ``source`` is either a family (evaluated at ``theta_star``) or an oracle
    for the centered summand itself.
    """
    if n < 1:
        raise UsageError("n must be at least 1")
    if isinstance(source, ModelFamily):
        if theta_star is None:
            raise UsageError("theta_star is required when the source is a family")
        oracle = source.centered_moment_oracle(theta_star)
    else:
        oracle = source
    value = norm(oracle, regime, p_max).value
    return DeviationNormSet(np.full(n, value), regime)
