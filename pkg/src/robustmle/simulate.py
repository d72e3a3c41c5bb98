"""Deterministic Monte Carlo experiments.

Trials are grouped into fixed-size blocks. Block ``j`` draws from
``SeedSequence(master_seed, spawn_key=(j,))``, so a trial's data depend only
on the master seed and its index, never on how blocks are spread over
workers. Per-trial statistics are gathered back in trial order and reduced
with compensated summation, which makes reports byte-identical for any
worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from .concentration import DeviationNormSet, sum_deviation_norms, tail_curve
from .errors import ConfigurationError, InfeasibleError, MomentNonexistenceError, UsageError
from .families import ModelFamily, get_family
from .mle import bias_estimate
from .norms import laplace_oracle, norm
from .truncated import (
    TheoryConstants,
    deviation_bound,
    half_width,
    min_sample_size,
    solve_batch,
    tune_beta,
)

EXPERIMENTS = ("coverage", "deviation", "bias", "tail_sum", "contamination")
MAX_FAILURE_RATE = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    family: str
    theta_star: float
    n: int
    trials: int
    delta: float = 0.05
    estimator: str = "truncated"
    master_seed: int = 0
    family_params: tuple = ()
    theta_lower: Optional[float] = None
    theta_upper: Optional[float] = None
    case: Optional[str] = None
    beta: Optional[float] = None
    contamination: float = 0.0
    outlier: float = 0.0
    regime: Optional[str] = None
    t_points: int = 20
    t_max: Optional[float] = None
    block_size: int = 1000

    def __post_init__(self):
        errs = []
        if self.experiment not in EXPERIMENTS:
            errs.append(f"experiment must be one of {EXPERIMENTS}")
        if self.trials < 1:
            errs.append("trials must be at least 1")
        if self.n < 1:
            errs.append("n must be at least 1")
        if not 0 <= self.contamination < 1:
            errs.append("contamination fraction must lie in [0, 1)")
        if self.estimator not in ("mle", "truncated"):
            errs.append("estimator must be 'mle' or 'truncated'")
        if self.block_size < 1:
            errs.append("block_size must be positive")
        if errs:
            raise ConfigurationError("; ".join(errs))

    def build_model(self) -> ModelFamily:
        return get_family(self.family, self.theta_lower, self.theta_upper, **dict(self.family_params))


@dataclass
class Estimate:
    value: float
    se: float


@dataclass
class SimulationReport:
    experiment: str
    config: dict
    trials: int
    failures: int
    failure_rate: float
    ok: bool
    seeds_digest: str
    empirical_coverage: Optional[Estimate] = None
    deviation_fraction_within_bound: Optional[Estimate] = None
    bias: Optional[Estimate] = None
    rmse: Optional[float] = None
    tail_curve: list = field(default_factory=list)
    theory: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True)

    def tail_csv(self) -> str:
        lines = ["t,bound,empirical,se"]
        for row in self.tail_curve:
            lines.append(f"{row['t']!r},{row['bound']!r},{row['empirical']!r},{row['se']!r}")
        return "\n".join(lines) + "\n"


def binomial_se(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / trials)


def _block_rng(config: ExperimentConfig, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.master_seed, spawn_key=(block,)))


def _blocks(config: ExperimentConfig) -> list[tuple[int, int]]:
    out = []
    for j, start in enumerate(range(0, config.trials, config.block_size)):
        out.append((j, min(config.block_size, config.trials - start)))
    return out


def _seeds_digest(config: ExperimentConfig) -> str:
    h = hashlib.sha256()
    for j, size in _blocks(config):
        state = np.random.SeedSequence(config.master_seed, spawn_key=(j,)).generate_state(4)
        h.update(f"{j}:{size}:{','.join(map(str, state))};".encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# summand sources for sums


class _LaplaceSummand:
    name = "laplace"

    def __init__(self, scale: float):
        self.scale = scale

    def draw(self, rng, theta, size):
        return rng.laplace(theta, self.scale, size=size)

    def mean(self, theta):
        return theta

    def centered_moment_oracle(self, theta):
        return laplace_oracle(self.scale)


def _summand(config: ExperimentConfig):
    if config.family == "laplace":
        params = dict(config.family_params)
        return _LaplaceSummand(float(params.get("scale", 1.0)))
    return config.build_model()


def _sum_norms(config: ExperimentConfig, source) -> DeviationNormSet:
    """Norms for the summands: theta2 if its supremum is attained, else theta1.

    When neither supremum is attained below ``p_max`` the last candidate
    (theta1 by default) is used as is, a lower bound on the true supremum.
    """
    oracle = source.centered_moment_oracle(config.theta_star)
    regimes = [config.regime] if config.regime else ["theta2", "theta1"]
    last, fallback = None, None
    for regime in regimes:
        try:
            res = norm(oracle, regime)
        except MomentNonexistenceError as exc:
            last = exc
            continue
        if res.truncated and config.regime is None:
            fallback = regime
            continue
        return sum_deviation_norms(oracle, config.n, regime)
    if fallback is not None:
        return sum_deviation_norms(oracle, config.n, fallback)
    raise MomentNonexistenceError(f"{config.family}: no theta-norm exists for the summands", getattr(last, "order", None))


def _t_grid(config: ExperimentConfig, source) -> np.ndarray:
    if config.t_max is not None:
        t_max = config.t_max
    else:
        var = source.centered_moment_oracle(config.theta_star).absolute_moment(2)
        t_max = 4.0 * math.sqrt(config.n * var)
    return np.linspace(0.0, t_max, config.t_points)


# ---------------------------------------------------------------------------
# per-block work


def _estimate_rows(model: ModelFamily, X: np.ndarray, estimator: str, beta: Optional[float]):
    if estimator == "truncated":
        res = solve_batch(model, X, beta)
        return res.roots, res.ok
    from .mle import fit_mle

    vals = np.empty(X.shape[0])
    for i, row in enumerate(X):
        closed = model.mle_closed(row)
        if closed is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                closed = fit_mle(model, row)
        vals[i] = closed
    vals = model.theta_space.clip(vals)
    return vals, np.isfinite(vals)


def _contaminate(config: ExperimentConfig, X: np.ndarray) -> np.ndarray:
    k = int(math.floor(config.contamination * config.n))
    if k:
        X = X.copy()
        X[:, :k] = config.outlier
    return X


def _run_block(config: ExperimentConfig, beta: Optional[float], t_grid: Optional[np.ndarray], block: tuple[int, int]):
    j, size = block
    rng = _block_rng(config, j)
    if config.experiment == "tail_sum":
        source = _summand(config)
        X = source.draw(rng, config.theta_star, (size, config.n))
        S = X.sum(axis=1) - config.n * source.mean(config.theta_star)
        return {"exceed": np.array([(S > t).sum() for t in t_grid], dtype=np.int64)}
    model = config.build_model()
    X = model.draw(rng, config.theta_star, (size, config.n))
    if config.experiment == "contamination":
        X = _contaminate(config, X)
        mle_vals, mle_ok = _estimate_rows(model, X, "mle", None)
        tr_vals, tr_ok = _estimate_rows(model, X, "truncated", beta)
        return {"mle": mle_vals, "mle_ok": mle_ok, "trunc": tr_vals, "trunc_ok": tr_ok}
    vals, ok = _estimate_rows(model, X, config.estimator, beta)
    return {"theta_hat": vals, "ok": ok}


def _collect(config: ExperimentConfig, work, workers: int) -> list:
    blocks = _blocks(config)
    if workers <= 1 or len(blocks) == 1:
        return [work(b) for b in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, blocks, chunksize=max(1, len(blocks) // (4 * workers))))


def _fraction(hits: np.ndarray) -> Estimate:
    p = math.fsum(hits.astype(float)) / hits.size if hits.size else float("nan")
    return Estimate(p, binomial_se(p, hits.size) if hits.size else float("nan"))


def _mean_se(x: np.ndarray) -> Estimate:
    if x.size == 0:
        return Estimate(float("nan"), float("nan"))
    m = math.fsum(x) / x.size
    if x.size < 2:
        return Estimate(m, float("nan"))
    var = math.fsum((x - m) ** 2) / (x.size - 1)
    return Estimate(m, math.sqrt(var / x.size))


def _rmse(err: np.ndarray) -> float:
    if err.size == 0:
        return float("nan")
    return math.sqrt(math.fsum(err**2) / err.size)


# ---------------------------------------------------------------------------
# experiments


def _theory(config: ExperimentConfig, model: ModelFamily) -> tuple[dict, Optional[float]]:
    case = config.case or ("constant_c" if model.constant_c else "general_c")
    info = {"case": case}
    beta = config.beta
    consts = TheoryConstants.from_model(model, config.theta_star)
    info.update(fisher=consts.fisher, c_mean=consts.c_mean, c_sq_mean=consts.c_sq_mean)
    if beta is None:
        beta = tune_beta(consts, n=config.n, delta=config.delta, case=case)
    info["beta"] = beta
    req = min_sample_size(consts, beta=beta, delta=config.delta, case=case)
    info["n_min"] = req.n_min
    info["n_condition_ok"] = req.ok(config.n)
    try:
        info["half_width"] = half_width(consts, beta=beta, n=config.n, delta=config.delta, case=case)
    except InfeasibleError:
        info["half_width"] = None
    try:
        info["deviation_bound"] = deviation_bound(consts, n=config.n, delta=config.delta, case=case)
    except InfeasibleError:
        info["deviation_bound"] = None
    info["guarantee"] = 1 - 2 * config.delta
    return info, beta


def _estimator_report(config: ExperimentConfig, workers: int) -> SimulationReport:
    model = config.build_model()
    if config.estimator == "truncated" or config.experiment in ("coverage", "deviation"):
        info, beta = _theory(config, model)
    else:
        info, beta = {}, None
    results = _collect(config, partial(_run_block, config, beta, None), workers)
    theta_hat = np.concatenate([r["theta_hat"] for r in results])
    ok = np.concatenate([r["ok"] for r in results])
    failures = int((~ok).sum())
    good = theta_hat[ok]
    err = good - config.theta_star
    report = SimulationReport(
        experiment=config.experiment,
        config=asdict(config),
        trials=config.trials,
        failures=failures,
        failure_rate=failures / config.trials,
        ok=failures / config.trials <= MAX_FAILURE_RATE,
        seeds_digest=_seeds_digest(config),
        theory=info,
    )
    if good.size:
        report.bias = _mean_se(err)
        report.rmse = _rmse(err)
    h = info.get("half_width")
    if h is not None and good.size:
        report.empirical_coverage = _fraction(np.abs(err) <= h)
    bound = info.get("deviation_bound")
    if bound is not None and good.size:
        report.deviation_fraction_within_bound = _fraction(np.abs(err) < bound)
    if config.experiment == "bias":
        b = bias_estimate(model, config.theta_star, config.n)
        report.theory.update(kappa=b.kappa, bias_estimate=b.bias)
    return report


def run_coverage(config: ExperimentConfig, workers: int = 1) -> SimulationReport:
    """Fraction of trials with the estimate inside ``[theta* - h, theta* + h]``."""
    return _estimator_report(_as(config, "coverage"), workers)


def run_deviation(config: ExperimentConfig, workers: int = 1) -> SimulationReport:
    """Fraction of trials with ``|theta_hat - theta*|`` below the tuned deviation bound."""
    return _estimator_report(_as(config, "deviation"), workers)


def run_bias(config: ExperimentConfig, workers: int = 1) -> SimulationReport:
    """Monte Carlo mean error of the estimator next to the first-order bias formula."""
    return _estimator_report(_as(config, "bias"), workers)


def run_tail_sum(config: ExperimentConfig, workers: int = 1) -> SimulationReport:
    """Empirical upper tail of centered i.i.d. sums against the regime's bound."""
    config = _as(config, "tail_sum")
    source = _summand(config)
    norms = _sum_norms(config, source)
    ts = _t_grid(config, source)
    bounds = tail_curve(norms, ts)
    results = _collect(config, partial(_run_block, config, None, ts), workers)
    exceed = np.sum([r["exceed"] for r in results], axis=0)
    curve = []
    for t, b, k in zip(ts, bounds, exceed):
        p = int(k) / config.trials
        curve.append({"t": float(t), "bound": float(b), "empirical": p, "se": binomial_se(p, config.trials)})
    valid = all(row["empirical"] <= row["bound"] + 3 * row["se"] for row in curve)
    return SimulationReport(
        experiment="tail_sum",
        config=asdict(config),
        trials=config.trials,
        failures=0,
        failure_rate=0.0,
        ok=True,
        seeds_digest=_seeds_digest(config),
        tail_curve=curve,
        theory={"regime": norms.regime, "per_term_norm": float(norms.norms[0]), "sum_sq": norms.sum_sq},
        extra={"bound_holds_within_3se": valid},
    )


def run_contamination(config: ExperimentConfig, workers: int = 1) -> SimulationReport:
    """Paired RMSE of the MLE and the truncated estimator on contaminated samples."""
    config = _as(config, "contamination")
    model = config.build_model()
    info, beta = _theory(config, model)
    results = _collect(config, partial(_run_block, config, beta, None), workers)
    mle = np.concatenate([r["mle"] for r in results])
    trunc = np.concatenate([r["trunc"] for r in results])
    ok = np.concatenate([r["mle_ok"] & r["trunc_ok"] for r in results])
    failures = int((~ok).sum())
    e_m = mle[ok] - config.theta_star
    e_t = trunc[ok] - config.theta_star
    rm, rt = _rmse(e_m), _rmse(e_t)
    diff = _mean_se(e_t**2 - e_m**2)
    # delta method: d(sqrt(mse)) = d(mse) / (2 rmse)
    scale = 2 * max(0.5 * (rm + rt), 1e-300)
    extra = {
        "rmse_mle": rm,
        "rmse_truncated": rt,
        "rmse_mle_se": _mean_se(e_m**2).se / (2 * max(rm, 1e-300)),
        "rmse_truncated_se": _mean_se(e_t**2).se / (2 * max(rt, 1e-300)),
        "rmse_difference": rt - rm,
        "rmse_difference_se": diff.se / scale,
        "contaminated_per_sample": int(math.floor(config.contamination * config.n)),
    }
    return SimulationReport(
        experiment="contamination",
        config=asdict(config),
        trials=config.trials,
        failures=failures,
        failure_rate=failures / config.trials,
        ok=failures / config.trials <= MAX_FAILURE_RATE,
        seeds_digest=_seeds_digest(config),
        rmse=rt,
        theory=info,
        extra=extra,
    )


RUNNERS = {
    "coverage": run_coverage,
    "deviation": run_deviation,
    "bias": run_bias,
    "tail_sum": run_tail_sum,
    "contamination": run_contamination,
}


def run_experiment(config: ExperimentConfig, workers: int = 1) -> SimulationReport:
    if config.experiment not in RUNNERS:
        raise UsageError(f"unknown experiment {config.experiment!r}")
    return RUNNERS[config.experiment](config, workers)


def _as(config: ExperimentConfig, kind: str) -> ExperimentConfig:
    if config.experiment == kind:
        return config
    import dataclasses

    return dataclasses.replace(config, experiment=kind)
