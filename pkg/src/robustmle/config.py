"""Run configuration: a flat sectioned key-value file.

Every accepted key is declared once in :data:`SCHEMA`. The parser checks the
whole file and reports every problem it finds together, and the Markdown
reference under ``docs/`` is generated from the same table
(``python3 -m robustmle.config > docs/config_reference.md``).
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import ConfigurationError
from .families import DEFAULT_THETA, FAMILY_PARAMS
from .simulate import EXPERIMENTS
from .truncated import CASES, MODES

SUBCOMMANDS = ("fit", "bounds", "tune", "norms", "simulate")
PSEUDO_FAMILIES = {"laplace": {"scale": float}}


class ConfigError(ConfigurationError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: str  # int, float, str, path, choice, float_or_auto
    default: Any
    doc: str
    choices: tuple = ()
    used_by: tuple = SUBCOMMANDS


def _family_keys() -> list[Key]:
    keys = [
        Key("family", "name", "choice", None, "Model family.", tuple(sorted(DEFAULT_THETA)) + ("laplace",)),
        Key("family", "theta_lower", "float", None, "Lower end of the parameter interval (family default if omitted)."),
        Key("family", "theta_upper", "float", None, "Upper end of the parameter interval (family default if omitted)."),
    ]
    seen = {}
    for fam, params in list(FAMILY_PARAMS.items()) + list(PSEUDO_FAMILIES.items()):
        for p, typ in params.items():
            seen.setdefault(p, (typ, []))[1].append(fam)
    for p, (typ, fams) in sorted(seen.items()):
        kind = "int" if typ is int else "float"
        keys.append(Key("family", p, kind, None, f"Family parameter, accepted by: {', '.join(fams)}."))
    return keys


SCHEMA: tuple[Key, ...] = tuple(
    [
        Key("run", "seed", "int", 0, "Master seed (unsigned 64-bit). Overridden by --seed."),
        Key("run", "out", "str", None, "Directory for CSV curves and report files. Overridden by --out."),
    ]
    + _family_keys()
    + [
        Key("data", "file", "path", None, "File of newline-separated reals (UTF-8, no header).", used_by=("fit", "tune", "norms")),
        Key("data", "simulate_n", "int", None, "Draw this many observations instead of reading a file.", used_by=("fit", "tune", "norms")),
        Key("data", "simulate_theta", "float", None, "Parameter used for the simulated data.", used_by=("fit", "tune", "norms")),
        Key("estimate", "estimator", "choice", "mle", "Estimator; --robust selects truncated.", ("mle", "truncated")),
        Key("estimate", "delta", "float", 0.05, "Failure probability. Must lie in (0, 1/2) for the truncated estimator."),
        Key("estimate", "beta", "float_or_auto", "auto", "Truncation level, or auto for the tuned value."),
        Key("estimate", "case", "choice", "auto", "Envelope case for the truncated estimator.", ("auto",) + CASES),
        Key("estimate", "mode", "choice", "practical", "Plug-in point for interval constants.", MODES),
        Key("estimate", "theta_star", "float", None, "Reference parameter (theoretical mode, tune, bounds, norms)."),
        Key("estimate", "n", "int", None, "Sample size for tune and bounds when no data source is given.", used_by=("tune", "bounds")),
        Key("estimate", "regime", "choice", "auto", "Norm regime for concentration bounds.", ("auto", "theta1", "theta2")),
        Key("estimate", "x_lower", "float", None, "Lower end of the data box used to certify Lipschitz constants.", used_by=("fit", "bounds")),
        Key("estimate", "x_upper", "float", None, "Upper end of the data box used to certify Lipschitz constants.", used_by=("fit", "bounds")),
        Key("estimate", "p_max", "int", 50, "Largest moment order scanned by the norms.", used_by=("fit", "bounds", "norms")),
        Key("simulate", "experiment", "choice", None, "Experiment to run.", EXPERIMENTS, used_by=("simulate",)),
        Key("simulate", "theta_star", "float", None, "True parameter of the simulated data.", used_by=("simulate",)),
        Key("simulate", "n", "int", None, "Sample size per trial.", used_by=("simulate",)),
        Key("simulate", "trials", "int", None, "Number of Monte Carlo trials (optional for bounds: adds empirical columns).", used_by=("simulate", "bounds")),
        Key("simulate", "contamination", "float", 0.0, "Fraction of each sample replaced by the outlier value.", used_by=("simulate",)),
        Key("simulate", "outlier", "float", 0.0, "Value written into contaminated positions.", used_by=("simulate",)),
        Key("simulate", "t_points", "int", 20, "Number of grid points on tail curves.", used_by=("simulate", "bounds")),
        Key("simulate", "t_max", "float", None, "Right end of the tail-curve grid (default 4 standard deviations of the sum).", used_by=("simulate", "bounds")),
        Key("simulate", "block_size", "int", 1000, "Trials per seeding block; part of the seed contract.", used_by=("simulate", "bounds")),
    ]
)

_BY_LOC = {(k.section, k.name): k for k in SCHEMA}


@dataclass(frozen=True)
class FamilyBlock:
    name: str
    params: tuple = ()
    theta_lower: Optional[float] = None
    theta_upper: Optional[float] = None


@dataclass(frozen=True)
class DataSource:
    file: Optional[str] = None
    simulate_n: Optional[int] = None
    simulate_theta: Optional[float] = None

    @property
    def present(self) -> bool:
        return self.file is not None or self.simulate_n is not None


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    family: FamilyBlock
    data: DataSource
    delta: float
    beta: Any
    estimator: str
    case: Optional[str]
    mode: str
    theta_star: Optional[float]
    n: Optional[int]
    regime: Optional[str]
    x_box: Optional[tuple]
    p_max: int
    master_seed: int
    out_dir: Optional[str]
    simulate: dict = field(default_factory=dict)
    path: Optional[str] = None


def _convert(key: Key, raw: str, base: str):
    raw = raw.strip()
    if key.kind == "int":
        v = int(raw, 10)
        return v
    if key.kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if key.kind == "float_or_auto":
        if raw.lower() == "auto":
            return "auto"
        v = float(raw)
        if not (math.isfinite(v) and v > 0):
            raise ValueError("must be a positive real or 'auto'")
        return v
    if key.kind == "choice":
        if raw not in key.choices:
            raise ValueError(f"must be one of {', '.join(key.choices)}")
        return raw
    if key.kind == "path":
        return raw if os.path.isabs(raw) else os.path.normpath(os.path.join(base, raw))
    return raw


def parse_config(path: str, subcommand: Optional[str] = None, robust: bool = False) -> RunConfig:
    """Read and validate ``path``; raise :class:`ConfigError` listing every problem."""
    if subcommand is not None and subcommand not in SUBCOMMANDS:
        raise ConfigError([f"unknown subcommand {subcommand!r}"])
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path}: {exc.strerror}"]) from exc
    except configparser.Error as exc:
        raise ConfigError([f"malformed config file: {exc}"]) from exc

    base = os.path.dirname(os.path.abspath(path))
    errors: list[str] = []
    values: dict[tuple[str, str], Any] = {}
    for section in cp.sections():
        if section not in {k.section for k in SCHEMA}:
            errors.append(f"[{section}]: unknown section")
            continue
        for name, raw in cp.items(section):
            key = _BY_LOC.get((section, name))
            if key is None:
                errors.append(f"{section}.{name}: unknown key")
                continue
            try:
                values[(section, name)] = _convert(key, raw, base)
            except ValueError as exc:
                errors.append(f"{section}.{name}={raw.strip()!r}: {exc}")

    def get(section, name):
        loc = (section, name)
        return values[loc] if loc in values else _BY_LOC[loc].default

    sub = subcommand
    if sub is None:
        errors.append("no subcommand given")
        sub = "fit"

    # family
    fam_name = get("family", "name")
    params = []
    if fam_name is None:
        errors.append("family.name: required")
    else:
        allowed = {**FAMILY_PARAMS, **PSEUDO_FAMILIES}[fam_name]
        for (section, name), v in values.items():
            if section == "family" and name not in ("name", "theta_lower", "theta_upper"):
                if name not in allowed:
                    errors.append(f"family.{name}: not a parameter of {fam_name}")
                else:
                    params.append((name, v))
        if fam_name in PSEUDO_FAMILIES and not (sub == "bounds" or (sub == "simulate" and get("simulate", "experiment") == "tail_sum")):
            errors.append(f"family.name={fam_name}: only usable for tail-sum bounds and simulations")
    lo, hi = get("family", "theta_lower"), get("family", "theta_upper")
    elo = ehi = None
    if fam_name in DEFAULT_THETA:
        dlo, dhi = DEFAULT_THETA[fam_name]
        elo, ehi = (dlo if lo is None else lo), (dhi if hi is None else hi)
        if not elo < ehi:
            errors.append(f"family.theta_lower={elo} must be below family.theta_upper={ehi}")

    def check_in_theta(label, value):
        if value is not None and fam_name in DEFAULT_THETA and lo_ok:
            if not elo <= value <= ehi:
                errors.append(f"{label}={value}: outside the parameter interval [{elo}, {ehi}]")

    lo_ok = fam_name in DEFAULT_THETA and elo < ehi
    # data source
    data = DataSource(get("data", "file"), get("data", "simulate_n"), get("data", "simulate_theta"))
    if data.file is not None and data.simulate_n is not None:
        errors.append("data: give either file or simulate_n, not both")
    if (data.simulate_n is None) != (data.simulate_theta is None):
        errors.append("data: simulate_n and simulate_theta go together")
    if data.simulate_n is not None and data.simulate_n < 1:
        errors.append("data.simulate_n: must be at least 1")
    if data.file is not None and not os.path.isfile(data.file):
        errors.append(f"data.file: no such file: {data.file}")
    if sub == "fit" and not data.present:
        errors.append("data: fit needs exactly one data source (file or simulate_n)")

    # estimator settings
    estimator = "truncated" if robust else get("estimate", "estimator")
    delta = get("estimate", "delta")
    truncated_used = estimator == "truncated" and sub in ("fit", "simulate", "tune")
    if sub == "tune" or (sub == "simulate" and get("simulate", "experiment") in ("coverage", "deviation", "contamination")):
        truncated_used = True
    if truncated_used and not 0 < delta < 0.5:
        errors.append(f"estimate.delta={delta}: the truncated estimator needs δ ∈ (0,1/2)")
    elif not 0 < delta < 1:
        errors.append(f"estimate.delta={delta}: must lie in (0, 1)")
    case = get("estimate", "case")
    case = None if case == "auto" else case
    regime = get("estimate", "regime")
    regime = None if regime == "auto" else regime
    p_max = get("estimate", "p_max")
    if p_max < 20:
        errors.append(f"estimate.p_max={p_max}: must be at least 20")
    x_lo, x_hi = get("estimate", "x_lower"), get("estimate", "x_upper")
    x_box = None
    if (x_lo is None) != (x_hi is None):
        errors.append("estimate: x_lower and x_upper go together")
    elif x_lo is not None:
        if not x_lo < x_hi:
            errors.append("estimate.x_lower must be below estimate.x_upper")
        x_box = (x_lo, x_hi)
    theta_star = get("estimate", "theta_star")
    n = get("estimate", "n")
    if n is not None and n < 1:
        errors.append("estimate.n: must be at least 1")
    if get("estimate", "mode") == "theoretical" and theta_star is None and sub == "fit" and estimator == "truncated":
        errors.append("estimate.theta_star: required in theoretical mode")
    if sub == "tune" and not data.present and (theta_star is None or n is None):
        errors.append("tune: needs estimate.theta_star and estimate.n, or a data source")
    if sub == "norms" and not data.present and theta_star is None:
        errors.append("norms: needs a data source or estimate.theta_star")
    if sub == "bounds" and (theta_star is None or n is None):
        errors.append("bounds: needs estimate.theta_star and estimate.n")

    check_in_theta("data.simulate_theta", data.simulate_theta)
    check_in_theta("estimate.theta_star", theta_star)
    if sub == "simulate":
        check_in_theta("simulate.theta_star", get("simulate", "theta_star"))

    seed = get("run", "seed")
    if not 0 <= seed < 2**64:
        errors.append("run.seed: must be an unsigned 64-bit integer")

    sim = {}
    if sub == "simulate":
        for name in ("experiment", "theta_star", "n", "trials"):
            if get("simulate", name) is None:
                errors.append(f"simulate.{name}: required")
        for k in SCHEMA:
            if k.section == "simulate":
                sim[k.name] = get("simulate", k.name)
        if sim["n"] is not None and sim["n"] < 1:
            errors.append("simulate.n: must be at least 1")
        if sim["trials"] is not None and sim["trials"] < 1:
            errors.append("simulate.trials: must be at least 1")
        if not 0 <= sim["contamination"] < 1:
            errors.append("simulate.contamination: must lie in [0, 1)")
        if sim["block_size"] < 1:
            errors.append("simulate.block_size: must be positive")
    if sub in ("simulate", "bounds"):
        sim.setdefault("t_points", get("simulate", "t_points"))
        sim.setdefault("t_max", get("simulate", "t_max"))
        sim.setdefault("trials", get("simulate", "trials"))
        sim.setdefault("block_size", get("simulate", "block_size"))
        if sim["trials"] is not None and sim["trials"] < 1:
            errors.append("simulate.trials: must be at least 1")
        if sim["t_points"] < 2:
            errors.append("simulate.t_points: must be at least 2")

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        subcommand=sub,
        family=FamilyBlock(fam_name, tuple(sorted(params)), lo, hi),
        data=data,
        delta=delta,
        beta=get("estimate", "beta"),
        estimator=estimator,
        case=case,
        mode=get("estimate", "mode"),
        theta_star=theta_star,
        n=n,
        regime=regime,
        x_box=x_box,
        p_max=p_max,
        master_seed=seed,
        out_dir=get("run", "out"),
        simulate=sim,
        path=os.path.abspath(path),
    )


def config_reference_markdown() -> str:
    """Markdown reference of every accepted key."""
    lines = [
        "# Configuration reference",
        "",
        "Generated from `robustmle.config.SCHEMA`; do not edit by hand.",
        "",
        "Files use `[section]` headers and `key = value` lines. `;` and `#` start comments.",
        "Unknown sections or keys are errors. Relative paths resolve against the config file's directory.",
        "",
    ]
    sections = []
    for k in SCHEMA:
        if k.section not in sections:
            sections.append(k.section)
    for sec in sections:
        lines += [f"## [{sec}]", "", "| key | type | default | used by | description |", "|---|---|---|---|---|"]
        for k in SCHEMA:
            if k.section != sec:
                continue
            typ = k.kind if not k.choices else "one of " + ", ".join(f"`{c}`" for c in k.choices)
            default = "required" if k.default is None and k.name in ("name",) else ("" if k.default is None else f"`{k.default}`")
            lines.append(f"| `{k.name}` | {typ} | {default} | {', '.join(k.used_by)} | {k.doc} |")
        lines.append("")
    return "\n".join(lines)


if __name__ == "__main__":
    print(config_reference_markdown(), end="")
