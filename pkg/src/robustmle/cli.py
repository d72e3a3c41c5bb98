"""Command-line front end.

``robustmle {fit,bounds,tune,norms,simulate} --config PATH`` prints one JSON
document on standard output and writes curves as CSV under ``--out``.

Exit codes: 0 success, 1 invalid or infeasible configuration, 2 numeric
failure (bad data, diverging moments, solver trouble).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import replace
from typing import Optional

import numpy as np

from . import __version__
from .concentration import sum_deviation_norms, tail_curve
from .config import ConfigError, RunConfig, parse_config
from .errors import (
    ConfigurationError,
    DomainError,
    InfeasibleError,
    MomentNonexistenceError,
    NumericError,
    UsageError,
)
from .families import ModelFamily, fisher_information, get_family, sample
from .mle import bias_estimate, certify_profile, fit_mle, kappa, mle_concentration, oracle_bound
from .norms import empirical_moment_oracle, laplace_oracle, norm
from .simulate import ExperimentConfig, run_experiment
from .truncated import (
    TheoryConstants,
    default_case,
    deviation_bound,
    fit_robust,
    half_width,
    min_sample_size,
    tune_beta,
)

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def render(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def read_data(path: str) -> np.ndarray:
    """Newline-separated reals; blank lines are skipped, anything else must parse and be finite."""
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                v = float(s)
            except ValueError as exc:
                raise NumericError(f"{path}:{lineno}: not a real number: {s!r}") from exc
            if not math.isfinite(v):
                raise NumericError(f"{path}:{lineno}: non-finite value {s!r}")
            vals.append(v)
    if not vals:
        raise NumericError(f"{path}: no data")
    return np.array(vals)


def _model(cfg: RunConfig) -> ModelFamily:
    return get_family(cfg.family.name, cfg.family.theta_lower, cfg.family.theta_upper, **dict(cfg.family.params))


def _data(cfg: RunConfig, model: ModelFamily) -> Optional[np.ndarray]:
    if cfg.data.file is not None:
        return model.check_support(read_data(cfg.data.file))
    if cfg.data.simulate_n is not None:
        return sample(model, cfg.data.simulate_theta, cfg.data.simulate_n, cfg.master_seed)
    return None


def _write_csv(cfg: RunConfig, name: str, header: list[str], rows) -> Optional[str]:
    if cfg.out_dir is None:
        return None
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def _family_out(cfg: RunConfig, model: Optional[ModelFamily]) -> dict:
    out = {"name": cfg.family.name, "params": dict(cfg.family.params)}
    if model is not None:
        out["theta_space"] = [model.theta_space.lower, model.theta_space.upper]
    return out


def _profile(cfg: RunConfig, model: ModelFamily, theta: float, n: int, x_box):
    """Certified profile in the requested regime, else theta2 when its supremum is attained, else theta1."""
    regimes = [cfg.regime] if cfg.regime else ["theta2", "theta1"]
    notes = []
    for i, regime in enumerate(regimes):
        try:
            prof = certify_profile(model, theta, n, regime, x_box=x_box, p_max=cfg.p_max)
            last = i == len(regimes) - 1
            if not last and norm(model.difference_moment_oracle(theta), regime, cfg.p_max).truncated:
                notes.append(f"{regime}: supremum not attained by p_max={cfg.p_max}")
                continue
        except (ConfigurationError, NumericError, NotImplementedError) as exc:
            notes.append(f"{regime}: {exc}")
            continue
        return prof, notes
    return None, notes


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(cfg: RunConfig) -> dict:
    model = _model(cfg)
    x = _data(cfg, model)
    n = int(x.size)
    out = {"family": _family_out(cfg, model), "n": n, "estimator": cfg.estimator}
    if cfg.estimator == "truncated":
        res = fit_robust(model, x, cfg.delta, cfg.beta, cfg.case, cfg.mode, cfg.theta_star)
        out.update(res.to_dict())
        return out
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        theta_hat = fit_mle(model, x)
    out["theta_hat"] = theta_hat
    out["at_boundary"] = theta_hat in (model.theta_space.lower, model.theta_space.upper)
    out["warnings"] = sorted({str(w.message) for w in caught})
    info = fisher_information(model, theta_hat)
    k = kappa(model, theta_hat)
    out["fisher"] = info
    out["kappa"] = k
    out["bias_correction"] = k / (2 * n * info * info) if info > 0 else None
    out["delta"] = cfg.delta
    box = cfg.x_box or (float(x.min()), float(x.max()))
    prof, notes = _profile(cfg, model, theta_hat, n, box) if box[0] < box[1] else (None, ["degenerate data range"])
    if prof is None:
        out["oracle_bound"] = None
        out["profile"] = None
    else:
        out["oracle_bound"] = oracle_bound(prof, model, theta_hat, n, cfg.delta, k, info)
        out["oracle_bound_order"] = "first-order"
        out["profile"] = {"c_H": prof.c_H, "c_l": prof.c_l, "d_norm": prof.max_norm, "regime": prof.regime, "box": list(prof.box)}
    out["profile_notes"] = notes
    return out


def cmd_tune(cfg: RunConfig) -> dict:
    model = _model(cfg)
    x = _data(cfg, model)
    if x is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            theta = cfg.theta_star if cfg.theta_star is not None else fit_mle(model, x)
        n = int(x.size)
    else:
        theta, n = cfg.theta_star, cfg.n
    consts = TheoryConstants.from_model(model, theta)
    case = cfg.case or default_case(model)
    beta = tune_beta(consts, n=n, delta=cfg.delta, case=case)
    h = half_width(consts, beta=beta, n=n, delta=cfg.delta, case=case)
    req = min_sample_size(consts, beta=beta, delta=cfg.delta, case=case)
    return {
        "family": _family_out(cfg, model),
        "theta": theta,
        "n": n,
        "delta": cfg.delta,
        "case": case,
        "beta": beta,
        "half_width": h,
        "deviation_bound": deviation_bound(consts, n=n, delta=cfg.delta, case=case),
        "n_min": req.n_min,
        "n_condition_ok": req.ok(n),
        "constants": {"fisher": consts.fisher, "c_mean": consts.c_mean, "c_sq_mean": consts.c_sq_mean},
    }


def _norm_entry(oracle, regime, p_max) -> dict:
    try:
        return norm(oracle, regime, p_max).to_dict()
    except MomentNonexistenceError as exc:
        return {"value": None, "error": str(exc), "order": exc.order}


def cmd_norms(cfg: RunConfig) -> dict:
    model = _model(cfg)
    x = _data(cfg, model)
    out = {"family": _family_out(cfg, model), "p_max": cfg.p_max}
    if x is not None:
        oracle = empirical_moment_oracle(x - x.mean())
        out["source"] = {"kind": "sample", "n": int(x.size)}
    else:
        oracle = model.centered_moment_oracle(cfg.theta_star)
        out["source"] = {"kind": "family", "theta_star": cfg.theta_star}
    out["centered"] = {r: _norm_entry(oracle, r, cfg.p_max) for r in ("theta1", "theta2")}
    if x is None:
        diff = model.difference_moment_oracle(cfg.theta_star)
        out["difference"] = {r: _norm_entry(diff, r, cfg.p_max) for r in ("theta1", "theta2")}
    return out


def cmd_bounds(cfg: RunConfig, workers: int = 1) -> dict:
    n, theta = cfg.n, cfg.theta_star
    sim = cfg.simulate
    if cfg.family.name == "laplace":
        model = None
        oracle = laplace_oracle(float(dict(cfg.family.params).get("scale", 1.0)))
    else:
        model = _model(cfg)
        oracle = model.centered_moment_oracle(theta)
    regimes = [cfg.regime] if cfg.regime else ["theta2", "theta1"]
    chosen, notes = None, []
    for regime in regimes:
        try:
            res = norm(oracle, regime, cfg.p_max)
        except MomentNonexistenceError as exc:
            notes.append(f"{regime}: {exc}")
            continue
        if res.truncated:
            notes.append(f"{regime}: supremum not attained by p_max={cfg.p_max}; the value is a lower bound")
            chosen = regime
            if cfg.regime is None:
                continue
        chosen = regime
        break
    if chosen is None:
        raise MomentNonexistenceError("no theta-norm exists for the summands: " + "; ".join(notes))
    norms = sum_deviation_norms(oracle, n, chosen, p_max=cfg.p_max)
    var = oracle.absolute_moment(2)
    t_max = sim["t_max"] if sim.get("t_max") is not None else 4.0 * math.sqrt(n * var)
    ts = np.linspace(0.0, t_max, sim["t_points"])
    sum_curve = tail_curve(norms, ts)
    out = {
        "family": _family_out(cfg, model),
        "n": n,
        "theta_star": theta,
        "sum": {"regime": norms.regime, "norm": float(norms.norms[0]), "t": ts, "bound": sum_curve},
        "notes": notes,
    }
    if sim.get("trials"):
        exp = ExperimentConfig(
            experiment="tail_sum",
            family=cfg.family.name,
            theta_star=theta,
            n=n,
            trials=sim["trials"],
            master_seed=cfg.master_seed,
            family_params=cfg.family.params,
            theta_lower=cfg.family.theta_lower,
            theta_upper=cfg.family.theta_upper,
            regime=chosen,
            t_points=sim["t_points"],
            t_max=t_max,
            block_size=sim["block_size"],
        )
        rep = run_experiment(exp, workers=workers)
        rows = [(r["t"], r["bound"], r["empirical"], r["se"]) for r in rep.tail_curve]
        out["sum"]["empirical"] = [r[2] for r in rows]
        out["sum"]["se"] = [r[3] for r in rows]
        out["sum"]["trials"] = sim["trials"]
        out["sum"]["seeds_digest"] = rep.seeds_digest
        out["sum"]["csv"] = _write_csv(cfg, "sum_tail.csv", ["t", "bound", "empirical", "se"], rows)
    else:
        out["sum"]["csv"] = _write_csv(cfg, "sum_tail.csv", ["t", "bound"], zip(ts, sum_curve))
    if model is not None:
        prof, pnotes = _profile(cfg, model, theta, n, cfg.x_box)
        out["mle_notes"] = pnotes
        if prof is not None:
            scale = prof.c_l / (prof.c_H * n) * math.sqrt(prof.sum_sq)
            mts = np.linspace(0.0, 6.0 * scale, sim["t_points"])
            mle_curve = [mle_concentration(prof, n, float(t)).bound for t in mts]
            out["mle"] = {
                "regime": prof.regime,
                "c_H": prof.c_H,
                "c_l": prof.c_l,
                "d_norm": prof.max_norm,
                "t": mts,
                "bound": mle_curve,
                "oracle_bound": oracle_bound(prof, model, theta, n, cfg.delta),
                "bias_correction": bias_estimate(model, theta, n).bias,
                "csv": _write_csv(cfg, "mle_tail.csv", ["t", "bound"], zip(mts, mle_curve)),
            }
    return out


def cmd_simulate(cfg: RunConfig, workers: int) -> tuple[dict, bool]:
    sim = cfg.simulate
    exp = ExperimentConfig(
        experiment=sim["experiment"],
        family=cfg.family.name,
        theta_star=sim["theta_star"],
        n=sim["n"],
        trials=sim["trials"],
        delta=cfg.delta,
        estimator=cfg.estimator,
        master_seed=cfg.master_seed,
        family_params=cfg.family.params,
        theta_lower=cfg.family.theta_lower,
        theta_upper=cfg.family.theta_upper,
        case=cfg.case,
        beta=None if cfg.beta == "auto" else cfg.beta,
        contamination=sim["contamination"],
        outlier=sim["outlier"],
        regime=cfg.regime,
        t_points=sim["t_points"],
        t_max=sim["t_max"],
        block_size=sim["block_size"],
    )
    report = run_experiment(exp, workers=workers)
    out = {"report": report.to_dict()}
    if cfg.out_dir is not None:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(render(out["report"]))
        if report.tail_curve:
            with open(os.path.join(cfg.out_dir, "tail_curve.csv"), "w", encoding="utf-8") as fh:
                fh.write(report.tail_csv())
    return out, report.ok


# ---------------------------------------------------------------------------


def dispatch(cfg: RunConfig, workers: int = 1, stdout=None, stderr=None) -> int:
    """Run ``cfg`` and print its JSON result; return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    head = {"schema_version": SCHEMA_VERSION, "subcommand": cfg.subcommand}
    code = EXIT_OK
    try:
        with np.errstate(all="ignore"):
            if cfg.subcommand == "fit":
                result = cmd_fit(cfg)
            elif cfg.subcommand == "tune":
                result = cmd_tune(cfg)
            elif cfg.subcommand == "norms":
                result = cmd_norms(cfg)
            elif cfg.subcommand == "bounds":
                result = cmd_bounds(cfg, workers)
            else:
                result, ok = cmd_simulate(cfg, workers)
                if not ok:
                    code = EXIT_NUMERIC
                    stderr.write("error: simulation failure rate above threshold\n")
    except (ConfigurationError, InfeasibleError, UsageError) as exc:
        return _fail(head, exc, EXIT_CONFIG, stdout, stderr)
    except (NumericError, DomainError, ArithmeticError, NotImplementedError) as exc:
        return _fail(head, exc, EXIT_NUMERIC, stdout, stderr)
    stdout.write(render({**head, "status": "ok" if code == EXIT_OK else "failed", "result": result}))
    return code


def _fail(head: dict, exc: Exception, code: int, stdout, stderr) -> int:
    stderr.write(f"error: {exc}\n")
    payload = {**head, "status": "error", "error": {"type": type(exc).__name__, "message": str(exc)}}
    if isinstance(exc, ConfigError):
        payload["error"]["errors"] = exc.errors
    stdout.write(render(payload))
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustmle", description="Maximum likelihood with explicit concentration bounds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "fit": "fit the MLE (or the truncated estimator with --robust)",
        "bounds": "theoretical tail curves for sums and for the MLE",
        "tune": "tuned truncation level, interval half-width and sample-size condition",
        "norms": "theta1 and theta2 norms of a family or a sample",
        "simulate": "run a Monte Carlo experiment",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH", help="configuration file")
        p.add_argument("--out", metavar="DIR", help="directory for CSV output (overrides run.out)")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides run.seed)")
        p.add_argument("--workers", type=int, default=1, metavar="N", help="worker processes for simulate")
        if name == "fit":
            p.add_argument("--robust", action="store_true", help="use the truncated-score estimator")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    head = {"schema_version": SCHEMA_VERSION, "subcommand": args.subcommand}
    if args.workers < 1:
        return _fail(head, UsageError("--workers must be at least 1"), EXIT_CONFIG, sys.stdout, sys.stderr)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        return _fail(head, UsageError("--seed must be an unsigned 64-bit integer"), EXIT_CONFIG, sys.stdout, sys.stderr)
    try:
        cfg = parse_config(args.config, args.subcommand, robust=getattr(args, "robust", False))
    except ConfigError as exc:
        return _fail(head, exc, EXIT_CONFIG, sys.stdout, sys.stderr)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return dispatch(cfg, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
