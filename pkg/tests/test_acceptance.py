"""Acceptance suite: one PASS/FAIL line per criterion, each at its stated tolerance."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
import sympy as sp

from robustmle.concentration import remark1_constants
from robustmle.errors import InfeasibleError, NoRootError
from robustmle.families import get_family, sample
from robustmle.norms import gaussian_oracle, laplace_oracle, theta1_norm, theta2_norm
from robustmle.simulate import ExperimentConfig, run_bias, run_coverage, run_deviation, run_tail_sum
from robustmle.truncated import (
    TheoryConstants,
    TruncatedScoreConfig,
    deviation_bound,
    half_width,
    psi,
    solve,
    tune_beta,
    z_hat,
)


@pytest.fixture
def verdict(capsys):
    def emit(k: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        assert ok, detail

    return emit


# ---------------------------------------------------------------------------


def test_criterion_01_psi_identities(verdict):
    x = np.linspace(-100, 100, 10_001)
    y = psi(x)
    odd = bool(np.array_equal(psi(-x), -y))
    mono = bool(np.all(np.diff(y) > 0))
    dominated = bool(np.all(np.abs(y) <= np.abs(x)))
    err = abs(psi(1.0) - math.log(2.5))
    ok = odd and mono and dominated and err <= 1e-12
    verdict(1, ok, f"odd={odd} increasing={mono} |psi|<=|x|={dominated} |psi(1)-log 2.5|={err:.1e}")


def test_criterion_02_constant_comparison(verdict):
    worst = 0.0
    for n in (1, 10, 100):
        for sigma2 in (1.0, 0.5, 4.0):
            g = remark1_constants("gaussian", n, sigma2)
            old = sp.N(64 * sp.E * n * sp.nsimplify(sigma2) / sp.sqrt(sp.pi), 40)
            new = sp.N(16 * n * sp.nsimplify(sigma2), 40)
            worst = max(worst, abs(g.old - float(old)) / float(old), abs(g.new - float(new)) / float(new))
        for lam in (1.0, 0.5, 3.0):
            l_ = sp.nsimplify(lam)
            c = remark1_constants("laplace", n, lam)
            old = sp.N(4 * sp.E**2 * n * l_**2 + 2 * sp.E * l_, 40)
            new = sp.N(4 * n * l_**2 + 2 * l_, 40)
            worst = max(worst, abs(c.old - float(old)) / float(old), abs(c.new - float(new)) / float(new))
    verdict(2, worst <= 1e-12, f"max relative deviation from symbolic values {worst:.2e} (tolerance 1e-12)")


def test_criterion_03_norm_closed_forms(verdict):
    worst = 0.0
    for sigma in (0.3, 1.0, 2.0, 10.0):
        worst = max(worst, abs(theta2_norm(gaussian_oracle(sigma), p_max=50).value - sigma) / sigma)
    for lam in (0.2, 1.0, 5.0):
        worst = max(worst, abs(theta1_norm(laplace_oracle(lam), p_max=50).value - lam) / lam)
    verdict(3, worst <= 1e-10, f"max relative error {worst:.2e} (tolerance 1e-10)")


def test_criterion_04_optimality_identity(verdict):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for case in ("general_c", "constant_c"):
        done = 0
        while done < 100:
            I = float(rng.uniform(0.05, 10))
            m1 = float(rng.uniform(0.1, 5))
            m2 = m1 * m1 if case == "constant_c" else m1 * m1 * float(rng.uniform(1, 4))
            k = TheoryConstants(I, m1, m2, case == "constant_c")
            n = int(rng.integers(5, 10**5))
            delta = float(rng.uniform(1e-4, 0.4999))
            try:
                b = tune_beta(k, n=n, delta=delta, case=case)
            except InfeasibleError:
                continue
            h = half_width(k, beta=b, n=n, delta=delta, case=case)
            d = deviation_bound(k, n=n, delta=delta, case=case)
            worst = max(worst, abs(h - d) / d)
            done += 1
    unit = TheoryConstants(1.0, 1.0, 1.0, True)
    worked = half_width(unit, beta=tune_beta(unit, n=100, delta=math.exp(-1), case="constant_c"), n=100, delta=math.exp(-1), case="constant_c")
    werr = abs(worked - math.sqrt(2 / 98))
    ok = worst <= 1e-9 and werr <= 1e-12
    verdict(4, ok, f"max relative gap over 200 tuples {worst:.1e}; worked case {worked:.6f} vs sqrt(2/98), error {werr:.1e}")


def _pareto_acceptance(kind):
    return ExperimentConfig(
        experiment=kind,
        family="pareto_shape",
        theta_star=1.5,
        n=500,
        trials=2000,
        delta=0.05,
        estimator="truncated",
        master_seed=1,
        family_params=(("x_min", 1.0),),
        theta_lower=1.0,
        theta_upper=2.0,
        case="constant_c",
    )


def test_criterion_05_coverage(verdict):
    t0 = time.perf_counter()
    rep = run_coverage(_pareto_acceptance("coverage"))
    elapsed = time.perf_counter() - t0
    cov = rep.empirical_coverage
    target = 1 - 2 * 0.05
    ok = cov.value >= target - 3 * cov.se and elapsed < 120 and rep.ok
    verdict(
        5,
        ok,
        f"coverage {cov.value:.4f} +- {cov.se:.4f} vs {target} - 3 SE; h={rep.theory['half_width']:.5f}, "
        f"n_condition_ok={rep.theory['n_condition_ok']}, failures={rep.failures}, {elapsed:.1f}s",
    )


def test_criterion_06_deviation(verdict):
    rep = run_deviation(_pareto_acceptance("deviation"))
    frac = rep.deviation_fraction_within_bound
    target = 1 - 2 * 0.05
    ok = frac.value >= target - 3 * frac.se and rep.ok
    verdict(6, ok, f"within bound {frac.value:.4f} +- {frac.se:.4f} vs {target} - 3 SE; bound={rep.theory['deviation_bound']:.5f}")


def test_criterion_07_bias(verdict):
    cfg = ExperimentConfig("bias", "exponential_rate", 1.0, 50, 10**5, estimator="mle", master_seed=7,
                           theta_lower=1e-3, theta_upper=1e3, block_size=10_000)
    t0 = time.perf_counter()
    rep = run_bias(cfg)
    elapsed = time.perf_counter() - t0
    b = rep.bias
    within = abs(b.value - 1 / 49) <= 3 * b.se
    exact = rep.theory["bias_estimate"] == 0.02 or abs(rep.theory["bias_estimate"] - 0.02) <= 1e-15
    ok = within and exact and elapsed < 60
    verdict(7, ok, f"MC bias {b.value:.5f} +- {b.se:.5f} vs 1/49={1/49:.5f}; formula {rep.theory['bias_estimate']!r}; {elapsed:.1f}s")


def test_criterion_08_tail_validity(verdict):
    gauss = ExperimentConfig("tail_sum", "gaussian_mean", 0.0, 50, 10**6, master_seed=8,
                             family_params=(("sigma", 1.0),), theta_lower=-1, theta_upper=1, block_size=50_000)
    lap = ExperimentConfig("tail_sum", "laplace", 0.0, 50, 10**6, master_seed=9,
                           family_params=(("scale", 1.0),), block_size=50_000)
    details, ok = [], True
    for cfg, label, form in ((gauss, "gaussian", lambda t: math.exp(-t * t / 800)),
                             (lap, "laplace", lambda t: math.exp(-t * t / (4 * 50 + 2 * t)))):
        rep = run_tail_sum(cfg)
        curve = rep.tail_curve
        good = len(curve) == 20 and all(r["empirical"] <= r["bound"] + 3 * r["se"] for r in curve)
        formula = all(abs(r["bound"] - min(1.0, form(r["t"]))) <= 1e-12 for r in curve)
        ok &= good and formula
        slack = min(r["bound"] - r["empirical"] for r in curve)
        details.append(f"{label}: dominated={good} formula={formula} min(bound-empirical)={slack:.4f}")
    verdict(8, ok, "; ".join(details))


FAMILIES = [
    ("gaussian_mean", {"sigma": 1.3}, (-4.0, 4.0)),
    ("gaussian_variance", {}, (0.2, 5.0)),
    ("pareto_shape", {"x_min": 1.0}, (0.3, 5.0)),
    ("weibull_scale", {"shape": 2}, (0.3, 5.0)),
    ("exponential_rate", {}, (0.2, 5.0)),
    ("expfam_poisson", {}, (-2.0, 2.0)),
    ("expfam_bernoulli", {}, (-2.5, 2.5)),
]


def _grid_scan(model, x, beta, points=10_000):
    ts = np.linspace(model.theta_space.lower, model.theta_space.upper, points)
    v = beta * model.ldot(x[None, :], ts[:, None])
    z = np.sum(np.sign(v) * np.log1p(np.abs(v) + 0.5 * v * v), axis=1)
    idx = np.nonzero(np.sign(z[:-1]) != np.sign(z[1:]))[0]
    if idx.size != 1:
        return None, ts[1] - ts[0]
    i = idx[0]
    return 0.5 * (ts[i] + ts[i + 1]), ts[1] - ts[0]


def test_criterion_09_root_solver_oracle(verdict):
    rng = np.random.default_rng(99)
    summary, ok = [], True
    for name, params, (lo, hi) in FAMILIES:
        model = get_family(name, lo, hi, **params)
        checked, worst, attempts = 0, 0.0, 0
        while checked < 50 and attempts < 500:
            attempts += 1
            theta = float(rng.uniform(lo + 0.3 * (hi - lo), hi - 0.3 * (hi - lo)))
            n = int(rng.integers(10, 300))
            beta = float(10 ** rng.uniform(-2, 0.5))
            x = sample(model, theta, n, seed=int(rng.integers(2**63)))
            try:
                root = solve(model, x, TruncatedScoreConfig(beta, 0.1, model.theta_space))
            except NoRootError:
                continue
            oracle, step = _grid_scan(model, x, beta)
            if oracle is None:
                continue
            worst = max(worst, abs(root - oracle) / step)
            checked += 1
        fam_ok = checked == 50 and worst <= 1.0
        ok &= fam_ok
        summary.append(f"{name} {checked}/50 max|err|/step={worst:.3f}")
    verdict(9, ok, "; ".join(summary))


SIM_CONFIGS = {
    "coverage": """
[run]
seed = 31
[family]
name = pareto_shape
x_min = 1.0
theta_lower = 1.0
theta_upper = 2.0
[estimate]
estimator = truncated
delta = 0.05
[simulate]
experiment = coverage
theta_star = 1.5
n = 300
trials = 800
block_size = 100
""",
    "tail_sum": """
[run]
seed = 32
[family]
name = laplace
scale = 1.0
[simulate]
experiment = tail_sum
theta_star = 0.0
n = 40
trials = 20000
block_size = 2500
""",
    "contamination": """
[run]
seed = 33
[family]
name = gaussian_variance
theta_lower = 0.1
theta_upper = 1000
[estimate]
delta = 0.05
[simulate]
experiment = contamination
theta_star = 1.0
n = 100
trials = 200
contamination = 0.1
outlier = 50
block_size = 50
""",
}


def test_criterion_10_determinism(verdict, tmp_path):
    same = []
    for kind, text in SIM_CONFIGS.items():
        cfg = tmp_path / f"{kind}.ini"
        cfg.write_text(text)
        outputs = []
        for workers in (1, 2, 4):
            out_dir = tmp_path / f"{kind}-{workers}"
            proc = subprocess.run(
                [sys.executable, "-m", "robustmle", "simulate", "--config", str(cfg), "--workers", str(workers), "--out", str(out_dir)],
                capture_output=True,
                check=False,
            )
            files = {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}
            outputs.append((proc.returncode, proc.stdout, files))
        same.append(all(o == outputs[0] for o in outputs[1:]) and outputs[0][0] == 0 and json.loads(outputs[0][1])["status"] == "ok")
    verdict(10, all(same), "byte-identical stdout and report files for workers 1/2/4: " + ", ".join(f"{k}={s}" for k, s in zip(SIM_CONFIGS, same)))


def test_criterion_11_small_beta(verdict):
    rows, ok = [], True
    betas = (1e-2, 1e-3, 1e-4, 1e-5)
    for name, params, (lo, hi), theta in (("gaussian_mean", {}, (-3, 3), 0.5), ("exponential_rate", {}, (0.3, 3), 1.2),
                                          ("pareto_shape", {"x_min": 1.0}, (0.5, 4.0), 1.5)):
        model = get_family(name, lo, hi, **params)
        x = sample(model, theta, 500, seed=5)
        mean_score = float(np.mean(model.ldot(x, theta)))
        gaps = [abs(z_hat(model, x, theta, b) - mean_score) for b in betas]
        C = gaps[0] / betas[0]
        linear = all(g <= C * b * (1 + 1e-6) for g, b in zip(gaps, betas))
        shrinks = all(gaps[i + 1] <= gaps[i] / 10 * (1 + 1e-6) for i in range(len(gaps) - 1))
        slope = math.log10(gaps[1] / gaps[2])
        ok &= linear and shrinks
        rows.append(f"{name}: C={C:.3g} gap<=C*beta={linear} per-decade slope {slope:.2f}")
    verdict(11, ok, "; ".join(rows))
