"""Tail-bound calculators and the constant comparison."""

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmle.concentration import (
    DeviationNormSet,
    TailClass,
    remark1_constants,
    subg_params_prop2,
    subg_tail_prob,
    subgamma_params_cor3,
    subgamma_quantile,
    subgamma_tail_prob,
    sum_deviation_norms,
    tail_bound,
    tail_curve,
)
from robustmle.errors import MomentNonexistenceError, UsageError
from robustmle.families import get_family
from robustmle.norms import gaussian_oracle, laplace_oracle


def norms2(values):
    return DeviationNormSet(np.asarray(values, dtype=float), "theta2")


def norms1(values):
    return DeviationNormSet(np.asarray(values, dtype=float), "theta1")


def test_subgaussian_parameters_for_sums():
    assert subg_params_prop2(norms2([1, 1, 1, 1])).params == (32.0,)
    assert subg_params_prop2(norms2([0, 0])).params == (0.0,)
    n, sigma = 50, 1.3
    cls = subg_params_prop2(sum_deviation_norms(gaussian_oracle(sigma), n, "theta2"))
    assert cls.params[0] == pytest.approx(8 * n * sigma**2, rel=1e-10)
    # tail exponent denominator 2 * sigma2 = 16 n sigma^2
    t = 3.0
    assert subg_tail_prob(cls, t) == pytest.approx(math.exp(-(t**2) / (16 * n * sigma**2)), rel=1e-10)


def test_subgamma_parameters_for_sums():
    assert subgamma_params_cor3(norms1([3.0])).params == (18.0, 3.0)
    deg = subgamma_params_cor3(norms1([0.0, 0.0]))
    assert deg.params == (0.0, 0.0)
    assert deg.degenerate
    n, lam = 20, 0.8
    cls = subgamma_params_cor3(sum_deviation_norms(laplace_oracle(lam), n, "theta1"))
    assert cls.params[0] == pytest.approx(2 * n * lam**2, rel=1e-10)
    assert cls.params[1] == pytest.approx(lam, rel=1e-10)
    t = 5.0
    expected = math.exp(-(t**2) / (4 * n * lam**2 + 2 * lam * t))
    assert subgamma_tail_prob(cls, t) == pytest.approx(expected, rel=1e-10)


def test_wrong_regime_rejected():
    with pytest.raises(UsageError):
        subg_params_prop2(norms1([1.0]))
    with pytest.raises(UsageError):
        subgamma_params_cor3(norms2([1.0]))
    with pytest.raises(UsageError):
        DeviationNormSet(np.array([]), "theta1")
    with pytest.raises(UsageError):
        DeviationNormSet(np.array([-1.0]), "theta1")


def test_quantile_examples():
    assert subgamma_quantile(TailClass("subGamma", (2.0, 1.0)), 1.0) == pytest.approx(3.0)
    assert subgamma_quantile(TailClass("subGamma", (2.0, 1.0)), 0.0) == 0.0
    assert subgamma_quantile(TailClass("subGamma", (8.0, 2.0)), 4.0) == pytest.approx(16.0)


def test_tail_prob_examples():
    # sum of squares 1 -> eta = 2
    assert subgamma_tail_prob(TailClass("subGamma", (2.0, 0.0)), 2.0) == pytest.approx(math.exp(-1))
    assert subgamma_tail_prob(TailClass("subGamma", (2.0, 0.0)), 0.0) == 1.0
    assert subgamma_tail_prob(TailClass("subGamma", (0.0, 1.0)), 1.0) == pytest.approx(math.exp(-0.5))


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 4.0])
def test_quantile_tail_consistency_without_scale_term(t):
    cls = TailClass("subGamma", (3.0, 0.0))
    assert subgamma_tail_prob(cls, subgamma_quantile(cls, t)) <= math.exp(-t) * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(eta=st.floats(1e-3, 50), M=st.floats(0.0, 10), s=st.floats(1e-3, 100))
def test_quantile_inverts_tail_form_conservatively(eta, M, s):
    # the level whose guaranteed tail is tail_prob(s) never exceeds s
    cls = TailClass("subGamma", (eta, M))
    p = subgamma_tail_prob(cls, s)
    if p >= 1.0 - 1e-6 or p <= 0.0:
        return  # -log(p) loses relative precision next to 1
    assert subgamma_quantile(cls, -math.log(p)) <= s * (1 + 1e-9)


@settings(max_examples=100, deadline=None)
@given(
    values=st.lists(st.floats(0.0, 5.0), min_size=1, max_size=8),
    regime=st.sampled_from(["theta1", "theta2"]),
    two_sided=st.booleans(),
)
def test_bounds_capped_and_nonincreasing(values, regime, two_sided):
    ns = DeviationNormSet(np.array(values), regime)
    ts = np.linspace(0, 20, 41)
    curve = tail_curve(ns, ts, two_sided)
    assert np.all(curve <= 1.0) and np.all(curve >= 0.0)
    assert np.all(np.diff(curve) <= 1e-15)
    assert tail_bound(ns, 0.0, two_sided).bound == 1.0


# ---------------------------------------------------------------------------
# constant comparison, against sympy


def _symbolic(dist, n, scale):
    n_, s_ = sp.Integer(n), sp.nsimplify(scale)
    if dist == "gaussian":
        old = 64 * sp.E * n_ * s_ / sp.sqrt(sp.pi)
        new = 16 * n_ * s_
    else:
        old = 4 * sp.E**2 * n_ * s_**2 + 2 * sp.E * s_
        new = 4 * n_ * s_**2 + 2 * s_
    return float(sp.N(old, 30)), float(sp.N(new, 30))


@pytest.mark.parametrize("dist", ["gaussian", "laplace"])
@pytest.mark.parametrize("n", [1, 10, 100])
@pytest.mark.parametrize("scale", [1.0, 0.25, 3.0])
def test_constant_comparison_symbolic(dist, n, scale):
    cmp = remark1_constants(dist, n, scale)
    old, new = _symbolic(dist, n, scale)
    assert abs(cmp.old - old) <= 1e-12 * old
    assert abs(cmp.new - new) <= 1e-12 * new


def test_constant_comparison_printed_values():
    g = remark1_constants("gaussian", 1)
    # 64e/sqrt(pi) = 98.152...
    assert g.old == pytest.approx(64 * math.e / math.sqrt(math.pi), rel=1e-15)
    assert g.old == pytest.approx(98.15, abs=5e-3)
    assert g.new == 16.0
    assert g.ratio == pytest.approx(6.13, abs=5e-3)
    lap = remark1_constants("laplace", 1)
    assert lap.old == pytest.approx(34.99, abs=5e-3)
    assert lap.new == 6.0
    with pytest.raises(UsageError):
        remark1_constants("gaussian", 0)


# ---------------------------------------------------------------------------


def test_sum_deviation_norms_from_families():
    gm = get_family("gaussian_mean", -5, 5, sigma=1.7)
    ns = sum_deviation_norms(gm, 7, "theta2", theta_star=0.5)
    assert ns.n == 7
    assert np.allclose(ns.norms, 1.7, rtol=1e-10)
    ns = sum_deviation_norms(laplace_oracle(0.4), 3, "theta1")
    assert np.allclose(ns.norms, 0.4, rtol=1e-10)
    par = get_family("pareto_shape", 1.0, 2.0, x_min=1.0)
    with pytest.raises(MomentNonexistenceError) as exc:
        sum_deviation_norms(par, 10, "theta1", theta_star=1.5)
    assert exc.value.order == 2
    with pytest.raises(UsageError):
        sum_deviation_norms(par, 10, "theta1")
