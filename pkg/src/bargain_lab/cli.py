"""Command-line pipeline: simulate, impute, MTE, structural tests and report.

``bargain-lab run CONFIG.toml`` executes the enabled stages in a fixed order
and writes every table and figure plus ``run_manifest.json``. The other
subcommands run one stage on a prepared dataset. Exit status is 0 on
success, 1 for bad input or configuration and 2 when an estimator fails.
"""

import argparse
import copy
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .aux_regressions import (
    WAGE_COVARIATES,
    WAGE_EXCLUSION,
    CF_COVARIATES,
    attach_control_function,
    fit_control_function,
    fit_wage_model,
    impute_wages,
    write_control_function,
    write_imputation_overlap,
    write_wage_model,
)
from .data import GENDERS, SelectionRules, load_dataset, select_sample, write_dataset
from .errors import BargainLabError, ConfigError, EstimationError, InputError, PrerequisiteError
from .household import (
    KINDS,
    ModelSpec,
    estimate_alpha,
    fit_model,
    prepare,
    report_from_tables,
    test_battery,
    write_battery,
    write_estimates,
    write_sharing_rule,
)
from .mte import (
    METHODS,
    estimate_propensity,
    heterogeneity_tests,
    mte_bootstrap,
    write_first_stage,
    write_mte_curve,
)
from .output import write_table
from .simgen import MteConfig, SimConfig, generate, generate_mte_scenario

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("bargain_lab")

OUTPUT_ENV = "BARGAIN_LAB_OUTPUT"
DEFAULT_OUTPUT = "bargain-lab-out"
STAGES = ("simulate", "select", "impute", "mte", "structural", "report")
MANIFEST = "run_manifest.json"

DEFAULTS = {
    "run": {
        "stages": list(STAGES),
        "input": "",
        "output": "",
        "gender": "split",
    },
    "simulate": {},
    "selection": {
        "teen_age": [15, 20],
        "parent_age": [30, 64],
        "father_works": True,
        "trim": {},
    },
    "impute": {
        "conditional": False,
        "covariates": list(WAGE_COVARIATES),
        "exclusion": list(WAGE_EXCLUSION),
        "cf_covariates": list(CF_COVARIATES),
        "year_effects": True,
    },
    "mte": {
        "method": "parametric_deg1",
        "B": 250,
        "seed": 0,
        "outcome": "schooling",
        "covariates": ["young_children", "head_schooling_years", "region"],
        "instrument": "instrument",
        "degree": 1,
        "bandwidth": 0.0,
        "workers": 1,
    },
    "structural": {
        "kinds": list(KINDS),
        "nodes": 32,
        "alpha_mode": "two-step",
        "covariance": True,
        "max_iter": 1000,
        "level": 0.05,
    },
}
SIM_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig) if f.name != "mte"}
MTE_FIELDS = {f.name: f for f in dataclasses.fields(MteConfig)}


# ---------------------------------------------------------------- config

def _check_keys(section, given, allowed):
    for k in given:
        if k not in allowed:
            raise ConfigError(f"unknown config key '{section}.{k}'")


def resolve_config(raw):
    """Merge ``raw`` over the defaults; unknown keys fail fast by name."""
    _check_keys("", raw, DEFAULTS)
    cfg = copy.deepcopy(DEFAULTS)
    for sec, body in raw.items():
        if not isinstance(body, dict):
            raise ConfigError(f"config section '{sec}' must be a table")
        if sec == "simulate":
            sim = dict(body)
            mte = sim.pop("mte", {})
            _check_keys("simulate", sim, SIM_FIELDS)
            _check_keys("simulate.mte", mte, MTE_FIELDS)
            defaults = {k: _plain(getattr(SimConfig(), k)) for k in SIM_FIELDS}
            mdefaults = {k: _plain(getattr(MteConfig(), k)) for k in MTE_FIELDS}
            cfg["simulate"] = defaults | sim | {"mte": mdefaults | mte}
            continue
        _check_keys(sec, body, DEFAULTS[sec])
        cfg[sec].update(body)
    if not cfg["simulate"]:
        cfg["simulate"] = {k: _plain(getattr(SimConfig(), k)) for k in SIM_FIELDS}
        cfg["simulate"]["mte"] = {k: _plain(getattr(MteConfig(), k)) for k in MTE_FIELDS}
    validate_config(cfg)
    return cfg


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def validate_config(cfg):
    run = cfg["run"]
    stages = run["stages"]
    if not stages:
        raise ConfigError("run.stages: at least one stage must be enabled")
    for s in stages:
        if s not in STAGES:
            raise ConfigError(f"run.stages: unknown stage {s!r} (choose from {', '.join(STAGES)})")
    if "simulate" not in stages and any(s != "report" for s in stages) and not run["input"]:
        raise ConfigError("run.input is required when the 'simulate' stage is off")
    if run["gender"] not in ("split", "pooled") + GENDERS:
        raise ConfigError(f"run.gender must be split, pooled, son or daughter, got {run['gender']!r}")
    m = cfg["mte"]
    if m["method"] not in METHODS:
        raise ConfigError(f"mte.method must be one of {', '.join(METHODS)}")
    if not isinstance(m["B"], int) or m["B"] < 2:
        raise ConfigError(f"mte.B must be an integer >= 2, got {m['B']!r}")
    if not isinstance(m["seed"], int):
        raise ConfigError("mte.seed must be an integer")
    if m["bandwidth"] < 0:
        raise ConfigError("mte.bandwidth must be positive, or 0 for the default rule")
    s = cfg["structural"]
    for k in s["kinds"]:
        if k not in KINDS:
            raise ConfigError(f"structural.kinds: unknown kind {k!r}")
    if s["alpha_mode"] not in ("two-step", "joint"):
        raise ConfigError("structural.alpha_mode must be 'two-step' or 'joint'")
    if not isinstance(s["nodes"], int) or s["nodes"] < 1:
        raise ConfigError("structural.nodes must be a positive integer")
    if not 0 < s["level"] < 1:
        raise ConfigError("structural.level must lie in (0, 1)")
    try:
        sim_config(cfg)
    except TypeError as exc:
        raise ConfigError(f"simulate: {exc}") from None


def parse_override(text):
    """``section.key=value`` with a TOML value; bare words are taken as strings."""
    key, sep, value = text.partition("=")
    if not sep or "." not in key:
        raise ConfigError(f"--set expects section.key=value, got {text!r}")
    try:
        v = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        v = value
    return key.strip().split("."), v


def apply_overrides(raw, overrides):
    raw = copy.deepcopy(raw)
    for text in overrides:
        path, v = parse_override(text)
        node = raw
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {text!r}: {p} is not a table")
        node[path[-1]] = v
    return raw


def load_config(path, overrides=()):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return resolve_config(apply_overrides(raw, overrides))


def sim_config(cfg):
    s = dict(cfg["simulate"])
    m = s.pop("mte", {})
    tup = {k: tuple(v) for k, v in s.items() if isinstance(v, list)}
    mtup = {k: tuple(v) for k, v in m.items() if isinstance(v, list)}
    return SimConfig(**(s | tup), mte=MteConfig(**(m | mtup)))


def output_dir(explicit):
    return Path(explicit or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


# ---------------------------------------------------------------- manifest

def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def environment():
    import matplotlib
    import scipy
    return {
        "bargain_lab": __version__, "python": platform.python_version(), "numpy": np.__version__,
        "scipy": scipy.__version__, "matplotlib": matplotlib.__version__, "kernels": _kernels.BACKEND,
    }


def write_manifest(out, command, config, inputs, errors):
    """Hashes of every file in ``out`` plus the resolved configuration."""
    outputs = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            outputs[p.relative_to(out).as_posix()] = sha256(p)
    seeds = {}
    if "simulate" in config:
        seeds["simulate"] = config["simulate"].get("seed")
    if "mte" in config:
        seeds["mte_bootstrap"] = config["mte"].get("seed")
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": outputs,
        "environment": environment(),
        "status": "failed" if errors else "ok",
        "errors": errors,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n",
                                encoding="utf-8")
    return manifest


def _jsonable(v):
    if isinstance(v, (np.integer, np.floating)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not serializable: {type(v).__name__}")


# ---------------------------------------------------------------- stages

def stage_simulate(cfg, out):
    sc = sim_config(cfg)
    if sc.truth_kind == "mte_scenario":
        d, led = generate_mte_scenario(sc.mte)
    else:
        d, led = generate(sc)
    write_dataset(d, out / "dataset.csv")
    truth = {k: float(v) for k, v in sorted(led.params.items())}
    (out / "truth.json").write_text(json.dumps({"kind": led.kind, "params": truth}, indent=2,
                                               sort_keys=True) + "\n", encoding="utf-8")
    log.info("simulated %d households (%s truth)", len(d), sc.truth_kind)
    return d


def stage_select(d, cfg, out):
    s = cfg["selection"]
    rules = SelectionRules(
        teen_age=tuple(s["teen_age"]) if s["teen_age"] else None,
        parent_age=tuple(s["parent_age"]) if s["parent_age"] else None,
        father_works=bool(s["father_works"]),
        trim={k: tuple(v) for k, v in s["trim"].items()},
    )
    report = []
    d = select_sample(d, rules, report)
    write_table(out / "selection.csv", ("rule", "kept", "dropped"), report)
    return d


def split_by_gender(d, rule):
    if rule == "pooled":
        return {"pooled": d}
    if rule in GENDERS:
        keep = d.teen_gender == rule
        if not keep.any():
            raise InputError(f"no {rule} records in the sample")
        return {rule: d.filter(keep)}
    return {g: d.filter(d.teen_gender == g) for g in GENDERS if np.any(d.teen_gender == g)}


def stage_impute(d, cfg, out, tag):
    c = cfg["impute"]
    gender = None if tag == "pooled" else tag
    m = fit_wage_model(d, tuple(c["covariates"]), tuple(c["exclusion"]), gender=gender)
    write_wage_model(m, out / f"wage_model_{tag}.csv")
    d = impute_wages(d, m, conditional=c["conditional"])
    write_imputation_overlap(d, out / f"imputation_overlap_{tag}.svg", out / f"imputation_overlap_{tag}.csv")
    cf = fit_control_function(d, tuple(c["cf_covariates"]), c["year_effects"])
    write_control_function(cf, out / f"control_function_{tag}.csv")
    d = attach_control_function(d, cf)
    write_dataset(d, out / f"prepared_{tag}.csv")
    return d


def stage_mte(d, cfg, out, tag):
    c = cfg["mte"]
    covs = tuple(c["covariates"])
    fit = estimate_propensity(d, covs, c["instrument"])
    write_first_stage(fit, out / f"first_stage_{tag}.csv")
    if fit.weak_instrument:
        log.warning("%s: instrument not significant at 5%% (weak instrument)", tag)
    curve = mte_bootstrap(d, covs, c["method"], B=c["B"], seed=c["seed"], instrument=c["instrument"],
                          outcome=c["outcome"], degree=c["degree"], bandwidth=c["bandwidth"] or None,
                          workers=c["workers"])
    write_mte_curve(curve, out / f"mte_curve_{tag}.csv", out / f"mte_curve_{tag}.svg",
                    title=f"MTE of {c['outcome']} ({tag})")
    t = heterogeneity_tests(curve)
    rows = [("observable", t.stat_observable, t.df_observable, t.p_observable),
            ("unobservable", t.stat_unobservable, t.df_unobservable, t.p_unobservable),
            ("support_lo", curve.support.lo, "", ""), ("support_hi", curve.support.hi, "", ""),
            ("support_share", curve.support.retained, "", "")]
    write_table(out / f"heterogeneity_{tag}.csv", ("test", "stat", "df", "p"), rows)
    return curve


def stage_structural(d, cfg, out, tag):
    c = cfg["structural"]
    spec = ModelSpec(nodes=c["nodes"])
    kinds = tuple(c["kinds"])
    prepare(d, spec)  # fail early, naming the stage to run first
    if set(kinds) == set(KINDS):
        rep = test_battery(d, spec, c["alpha_mode"], c["covariance"], c["level"], c["max_iter"], gender=tag)
        write_battery(rep, out)
        if rep.errors:
            for stage, msg in rep.errors:
                log.error("%s %s: %s", tag, stage, msg)
        return rep
    a = estimate_alpha(d)
    for kind in kinds:
        f = fit_model(d, kind, spec, (a.alpha, a.se), c["alpha_mode"] == "joint",
                      max_iter=c["max_iter"], covariance=c["covariance"])
        write_estimates(f, out / f"estimates_{kind}_{tag}.csv")
    return None


def stage_report(out, level):
    md, _ = report_from_tables(out, level)
    (out / "report.md").write_text(md, encoding="utf-8")
    return md


def run_pipeline(cfg, out):
    """Run the enabled stages in order; returns the list of stage errors."""
    stages = cfg["run"]["stages"]
    out.mkdir(parents=True, exist_ok=True)
    d = None
    if "simulate" in stages:
        d = stage_simulate(cfg, out)
    elif set(stages) - {"report"}:
        d = load_dataset(cfg["run"]["input"])
    if d is not None and "select" in stages:
        d = stage_select(d, cfg, out)
    errors = []
    reports = []
    if d is not None:
        for tag, dg in split_by_gender(d, cfg["run"]["gender"]).items():
            if "impute" in stages:
                dg = stage_impute(dg, cfg, out, tag)
            if "mte" in stages:
                stage_mte(dg, cfg, out, tag)
            if "structural" in stages:
                rep = stage_structural(dg, cfg, out, tag)
                if rep is not None:
                    reports.append(rep)
                    errors += [f"{tag} {s}: {m}" for s, m in rep.errors]
    if reports:
        write_sharing_rule(reports, out / "sharing_rule.csv")
    if "report" in stages:
        stage_report(out, cfg["structural"]["level"])
    return errors


# ---------------------------------------------------------------- commands

def cmd_run(a):
    cfg = load_config(a.config, a.set)
    out = output_dir(a.output or cfg["run"]["output"])
    cfg["run"]["output"] = str(out)
    inputs = [Path(a.config)] + ([Path(cfg["run"]["input"])] if cfg["run"]["input"] else [])
    errors = []
    try:
        errors = run_pipeline(cfg, out)
    except BargainLabError as exc:
        errors = [f"{type(exc).__name__}: {exc}"]
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, "run", cfg, inputs, errors)
        raise
    write_manifest(out, "run", cfg, inputs, errors)
    if errors:
        raise EstimationError("; ".join(errors))
    return out


def _one_stage(a, stages, updates):
    raw = {"run": {"stages": stages, "input": getattr(a, "input", "") or "", "gender": a.gender}}
    for sec, body in updates.items():
        raw.setdefault(sec, {}).update({k: v for k, v in body.items() if v is not None})
    cfg = resolve_config(raw)
    out = output_dir(a.output)
    cfg["run"]["output"] = str(out)
    inputs = [Path(cfg["run"]["input"])] if cfg["run"]["input"] else []
    errors = run_pipeline(cfg, out)
    write_manifest(out, a.command, cfg, inputs, errors)
    if errors:
        raise EstimationError("; ".join(errors))
    return out


def cmd_simulate(a):
    return _one_stage(a, ["simulate"], {"simulate": {"truth_kind": a.truth, "n": a.n, "seed": a.seed,
                                                      "gender": a.teen_gender}})


def cmd_impute(a):
    return _one_stage(a, ["impute"], {"impute": {"conditional": a.conditional}})


def cmd_mte(a):
    return _one_stage(a, ["mte"], {"mte": {
        "method": a.method, "B": a.B, "seed": a.seed, "outcome": a.outcome, "instrument": a.instrument,
        "covariates": a.covariates.split(",") if a.covariates else None, "degree": a.degree,
        "bandwidth": a.bandwidth, "workers": a.workers}})


def cmd_structural(a):
    kinds = list(KINDS) if a.kind == "all" else [a.kind]
    return _one_stage(a, ["structural"], {"structural": {
        "kinds": kinds, "nodes": a.nodes, "alpha_mode": a.alpha_mode, "max_iter": a.max_iter}})


def cmd_report(a):
    out = output_dir(a.output)
    if not out.is_dir():
        raise PrerequisiteError(f"{out} does not exist; run the 'structural' stage first")
    md = stage_report(out, a.level)
    print(md, end="")
    return out


def build_parser():
    ap = argparse.ArgumentParser(prog="bargain-lab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        p.add_argument("--output", "-o", default="",
                       help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        if needs_input:
            p.add_argument("--input", "-i", required=True, help="dataset CSV")
            p.add_argument("--gender", default="split", choices=("split", "pooled") + GENDERS)

    p = sub.add_parser("run", help="run the stages enabled in a TOML config")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config key; repeatable")
    p.add_argument("--output", "-o", default="")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="write a synthetic dataset and its truth")
    common(p, needs_input=False)
    p.add_argument("--truth", default="collective", choices=("collective", "unitary", "mte_scenario"))
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--teen-gender", default="son", choices=GENDERS)
    p.set_defaults(func=cmd_simulate, gender="split")

    p = sub.add_parser("impute", help="impute teen wages and attach the control function")
    common(p)
    p.add_argument("--conditional", action="store_true", default=None)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("mte", help="propensity score, MTE curve and heterogeneity tests")
    common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--B", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--outcome")
    p.add_argument("--instrument")
    p.add_argument("--covariates", help="comma-separated")
    p.add_argument("--degree", type=int)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_mte)

    p = sub.add_parser("structural", help="fit the household models and test the restrictions")
    common(p)
    p.add_argument("--kind", default="all", choices=("all",) + KINDS)
    p.add_argument("--nodes", type=int)
    p.add_argument("--alpha-mode", choices=("two-step", "joint"))
    p.add_argument("--max-iter", type=int)
    p.set_defaults(func=cmd_structural)

    p = sub.add_parser("report", help="render the verdict from the structural tables")
    p.add_argument("--output", "-o", default="", help="directory holding the tables")
    p.add_argument("--level", type=float, default=0.05)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = a.func(a)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 2
    if a.command != "report":
        print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
