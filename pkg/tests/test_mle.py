"""Classical MLE: fitting, kappa and bias, concentration and oracle bounds."""

import math
import warnings

import numpy as np
import pytest
from scipy import stats

from robustmle.errors import BoundaryWarning, ConfigurationError, UsageError
from robustmle.families import get_family, sample
from robustmle.mle import (
    LipschitzProfile,
    bias_estimate,
    certify_profile,
    fit_mle,
    kappa,
    mle_concentration,
    oracle_bound,
    perturbation_bound,
)


def profile(c_H, c_l, norms, regime):
    return LipschitzProfile(c_H, c_l, np.asarray(norms, dtype=float), regime)


# ---------------------------------------------------------------------------
# fitting


def test_fit_examples():
    assert fit_mle(get_family("gaussian_variance", 0.5, 2.0), [1.0, -1.0]) == pytest.approx(1.0)
    assert fit_mle(get_family("pareto_shape", 0.5, 2.0, x_min=1.0), [math.e, math.e]) == pytest.approx(1.0)
    assert fit_mle(get_family("exponential_rate"), [0.5, 1.5]) == pytest.approx(1.0)


FAMILIES = [
    ("gaussian_variance", {}, (0.3, 3.0), 1.0),
    ("gaussian_mean", {"sigma": 2.0}, (-3.0, 3.0), 0.4),
    ("pareto_shape", {"x_min": 2.0}, (0.5, 4.0), 1.5),
    ("weibull_scale", {"shape": 3}, (0.3, 3.0), 1.2),
    ("exponential_rate", {}, (0.3, 3.0), 1.1),
    ("expfam_poisson", {}, (-2.0, 2.0), 0.3),
    ("expfam_bernoulli", {}, (-2.5, 2.5), -0.4),
]


@pytest.mark.parametrize("name,params,box,theta", FAMILIES)
def test_closed_form_matches_numeric_minimiser(name, params, box, theta):
    model = get_family(name, *box, **params)
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(100):
        x = model.draw(rng, theta, 60)
        closed = fit_mle(model, x)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryWarning)
            numeric = fit_mle(model, x, method="numeric")
        if box[0] < closed < box[1]:
            assert numeric == pytest.approx(closed, abs=1e-8)


def test_exterior_optimum_projected_with_warning():
    ex = get_family("exponential_rate", 0.5, 2.0)
    with pytest.warns(BoundaryWarning):
        assert fit_mle(ex, [0.01, 0.02], method="numeric") == 2.0
    with pytest.warns(BoundaryWarning):
        assert fit_mle(ex, [0.01, 0.02]) == 2.0


# ---------------------------------------------------------------------------
# perturbation and concentration


def test_perturbation_examples():
    p = profile(2.0, 2.0, [1.0], "theta2")
    assert perturbation_bound(p, 1, 1.0) == 1.0
    assert perturbation_bound(profile(4.0, 2.0, [1.0], "theta2"), 10, 5.0) == pytest.approx(0.25)
    assert perturbation_bound(p, 1, 0.0) == 0.0


def test_perturbation_matches_actual_change_for_gaussian_mean():
    gm = get_family("gaussian_mean", -100, 100, sigma=1.0)
    x = sample(gm, 0.0, 40, seed=3)
    y = x.copy()
    y[7] += 2.5
    change = abs(fit_mle(gm, y) - fit_mle(gm, x))
    assert change <= perturbation_bound(profile(1.0, 1.0, [1.0], "theta2"), 40, 2.5) * (1 + 1e-12)


def test_concentration_examples():
    p2 = profile(1.0, 1.0, [1.0], "theta2")
    assert mle_concentration(p2, 1, 4.0).bound == pytest.approx(min(1.0, 2 * math.exp(-1)))
    assert mle_concentration(p2, 1, 0.0).bound == 1.0
    p1 = profile(1.0, 1.0, [1.0], "theta1")
    assert mle_concentration(p1, 1, 2.0).bound == pytest.approx(min(1.0, 2 * math.exp(-0.5)))
    assert mle_concentration(p1, 1, 2.0).bound == 1.0
    # uncapped region: exponent -t^2 / (16 L^2 sum)
    p = profile(2.0, 1.0, [1.0] * 10, "theta2")
    L = 1.0 / (2.0 * 10)
    t = 1.0
    assert mle_concentration(p, 10, t).bound == pytest.approx(2 * math.exp(-(t**2) / (16 * L * L * 10)))
    with pytest.raises(UsageError):
        mle_concentration(p, 11, t)


def test_profile_validation():
    with pytest.raises(ConfigurationError):
        profile(0.0, 1.0, [1.0], "theta2")
    with pytest.raises(UsageError):
        profile(1.0, 1.0, [], "theta2")


# ---------------------------------------------------------------------------
# certification


def test_certify_gaussian_mean_and_exponential():
    gm = get_family("gaussian_mean", -2, 2, sigma=1.5)
    prof = certify_profile(gm, 0.0, 30, "theta2", x_box=(-6, 6))
    assert prof.c_H == pytest.approx(1 / 1.5**2)
    assert prof.c_l == pytest.approx(1 / 1.5**2, rel=1e-9)
    assert prof.max_norm == pytest.approx(math.sqrt(2) * 1.5, rel=1e-9)
    ex = get_family("exponential_rate", 0.5, 2.0)
    prof = certify_profile(ex, 1.0, 30, "theta1", x_box=(0.0, 10.0))
    assert prof.c_H == pytest.approx(0.25)
    assert prof.c_l == pytest.approx(1.0, rel=1e-9)
    assert prof.max_norm == pytest.approx(1.0, rel=1e-9)


def test_certify_rejects_gaussian_variance_hessian_floor():
    gv = get_family("gaussian_variance", 0.5, 2.0)
    with pytest.raises(ConfigurationError, match="x=") as exc:
        certify_profile(gv, 1.0, 10, "theta2", x_box=(-3, 3))
    assert "c_H" in str(exc.value)


def test_certified_constants_hold_on_random_pairs():
    wb = get_family("weibull_scale", 0.5, 2.0, shape=2)
    # Weibull lddot = -k/lam^2 + k(k+1) x^k / lam^(k+2) is negative near 0: certification must refuse
    with pytest.raises(ConfigurationError):
        certify_profile(wb, 1.0, 5, "theta1", x_box=(0.0, 3.0))
    ex = get_family("exponential_rate", 0.5, 2.0)
    prof = certify_profile(ex, 1.0, 5, "theta1", x_box=(0.0, 10.0))
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, 10, 1000), rng.uniform(0, 10, 1000)
    th = rng.uniform(0.5, 2.0, 1000)
    assert np.all(ex.lddot(x, th) >= prof.c_H * (1 - 1e-12))
    assert np.all(np.abs(ex.ldot(x, th) - ex.ldot(y, th)) <= prof.c_l * np.abs(x - y) * (1 + 1e-9))


@pytest.mark.parametrize("which", ["gaussian_mean", "exponential_rate"])
def test_mle_concentration_curve_dominates_simulation(which):
    n, trials = 40, 10**5
    rng = np.random.default_rng(2024)
    if which == "gaussian_mean":
        sigma = 1.0
        model = get_family("gaussian_mean", -3, 3, sigma=sigma)
        X = rng.normal(0.5, sigma, size=(trials, n))
        est = np.clip(X.mean(axis=1), -3, 3)
        prof = certify_profile(model, 0.5, n, "theta2", x_box=(-8, 8))
    else:
        model = get_family("exponential_rate", 0.5, 2.0)
        X = rng.exponential(1.0, size=(trials, n))
        est = np.clip(1 / X.mean(axis=1), 0.5, 2.0)
        prof = certify_profile(model, 1.0, n, "theta1", x_box=(0.0, 20.0))
    dev = np.abs(est - est.mean())
    scale = prof.c_l / (prof.c_H * n) * math.sqrt(prof.sum_sq)
    for t in np.linspace(0, 6 * scale, 20):
        p = np.mean(dev > t)
        se = math.sqrt(max(p * (1 - p), 0) / trials)
        assert p <= mle_concentration(prof, n, float(t)).bound + 3 * se


# ---------------------------------------------------------------------------
# kappa and bias


def test_kappa_examples_closed_and_quadrature():
    ex = get_family("exponential_rate", 0.5, 2.0)
    assert kappa(ex, 1.0) == pytest.approx(2.0)
    assert kappa(ex, 1.0, method="quadrature") == pytest.approx(2.0, rel=1e-7)
    gm = get_family("gaussian_mean", -1, 1, sigma=1.0)
    assert kappa(gm, 0.2) == 0.0
    par = get_family("pareto_shape", 1.0, 3.0, x_min=1.0)
    for k in (1.2, 2.0, 2.7):
        assert kappa(par, k) == pytest.approx(2 / k**3)
        assert kappa(par, k, method="quadrature") == pytest.approx(2 / k**3, rel=1e-6)
    wb = get_family("weibull_scale", 0.5, 2.0, shape=3)
    assert kappa(wb, 1.3, method="quadrature") == pytest.approx(kappa(wb, 1.3), rel=1e-6)
    gv = get_family("gaussian_variance", 0.5, 2.0)
    assert kappa(gv, 1.1, method="quadrature") == pytest.approx(kappa(gv, 1.1), abs=1e-7)


def test_kappa_monte_carlo_oracle_exponential():
    ex = get_family("exponential_rate", 0.5, 2.0)
    x = np.random.default_rng(8).exponential(1.0, 10**6)
    terms = 2 * ex.ldot(x, 1.0) * ex.lddot(x, 1.0) - ex.ldddot(x, 1.0)
    assert abs(terms.mean() - kappa(ex, 1.0)) <= 3 * terms.std() / 1e3


def test_bias_estimate_examples():
    ex = get_family("exponential_rate", 0.5, 2.0)
    b = bias_estimate(ex, 1.0, 50)
    assert b.bias == pytest.approx(0.02, rel=1e-14)
    assert abs(b.bias - 1 / 49) <= 0.1 * (1 / 49)
    gm = get_family("gaussian_mean", -1, 1, sigma=1.0)
    assert all(bias_estimate(gm, 0.0, n).bias == 0.0 for n in (1, 10, 1000))
    par = get_family("pareto_shape", 1.0, 3.0, x_min=1.0)
    b = bias_estimate(par, 2.0, 100)
    assert b.bias == pytest.approx(0.02, rel=1e-12)
    # exact: n/sum(log X) with sum(log X) ~ Gamma(n, 1/k) has mean k n/(n-1)
    exact = stats.invgamma(100, scale=2.0 * 100).mean() - 2.0
    assert exact == pytest.approx(2.0 / 99, rel=1e-12)
    assert abs(b.bias - exact) <= 0.1 * exact


@pytest.mark.parametrize("n", [1, 7, 50, 1000])
def test_bias_times_n_is_invariant(n):
    ex = get_family("exponential_rate", 0.5, 2.0)
    b = bias_estimate(ex, 1.3, n)
    assert b.bias * n == pytest.approx(b.kappa / (2 * b.fisher**2), rel=1e-12)


# ---------------------------------------------------------------------------
# oracle bound


def test_oracle_bound_examples():
    p = profile(1.0, 1.0, [1.0] * 100, "theta2")
    assert oracle_bound(p, None, 1.0, 100, 2 * math.exp(-1), kappa_value=0.0, fisher_value=1.0) == pytest.approx(0.4)
    p1 = profile(1.0, 1.0, [1.0] * 100, "theta1")
    assert oracle_bound(p1, None, 1.0, 100, 1 - 1e-15, kappa_value=0.0, fisher_value=1.0) < 1e-6
    ex = get_family("exponential_rate", 0.5, 2.0)
    with_bias = oracle_bound(p, ex, 1.0, 100, 2 * math.exp(-1))
    assert with_bias == pytest.approx(0.4 + 0.01)
    with pytest.raises(UsageError):
        oracle_bound(p, ex, 1.0, 100, 1.5)
