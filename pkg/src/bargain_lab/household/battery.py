"""Restriction-test battery, verdict logic and the coefficient tables it emits."""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import BargainLabError, PrerequisiteError
from ..output import fmt, write_table
from .fit import LRTest, fit_all, lr_test
from .layout import DF, KINDS, RESTRICTED, SCALE_NAMES, ModelSpec
from .structural import estimate_alpha, recover_sharing_rule, reservation_wage

log = logging.getLogger(__name__)

LEVEL = 0.05

TABLE_HEADER = ("variable", "work_coef", "work_se", "school_coef", "school_se",
                "teen_coef", "teen_se", "coef", "se")

# (row label, work-regime name, school-regime name, schooling-index name)
BASE_ROWS = (
    ("teen_wage", "At", "at", "bt"),
    ("parent_wage", "Ap_star", "ap_star", "bp"),
    ("nonlabor_income", "Ay", "ay", "by"),
    ("intercept", "w_const", "s_const", "b0"),
    ("control_function", "w_cf", "s_cf", "t_cf"),
)
SCALAR_ROWS = ("h_const",) + SCALE_NAMES

VERDICTS = {
    (True, False): "teen is a decision-maker: unitary rejected, collective not rejected",
    (True, True): "teen is not a decision-maker: unitary and collective both rejected",
    (False, False): "unitary not rejected",
    (False, True): "unitary not rejected; collective rejected",
}


def table_rows(spec):
    """Row layout ``(label, work, school, teen)`` for a model spec."""
    rows = [r for r in BASE_ROWS if spec.use_cf or r[0] != "control_function"]
    xs = list(dict.fromkeys(spec.x_work + spec.x_school + spec.x_teen))
    for x in xs:
        rows.append((x, f"w_{x}" if x in spec.x_work else None,
                     f"s_{x}" if x in spec.x_school else None,
                     f"t_{x}" if x in spec.x_teen else None))
    rows.append(("ln_teen_wage", "delta", "delta", None))
    return rows


@dataclass
class Verdict:
    unitary_rejected: bool
    collective_rejected: bool

    @property
    def label(self):
        return VERDICTS[(self.unitary_rejected, self.collective_rejected)]

    @property
    def decision_maker(self):
        return self.unitary_rejected and not self.collective_rejected


@dataclass
class BatteryReport:
    """Everything the battery produced for one gender; failed stages are in ``errors``."""

    gender: str
    n: int
    alpha: object = None
    fits: dict = field(default_factory=dict)
    lr: dict = field(default_factory=dict)
    reservation: object = None
    reservation_source: str = None
    sharing: object = None
    verdict: Verdict = None
    errors: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors


def _stage(report, name, fn):
    try:
        return fn()
    except BargainLabError as exc:
        log.warning("%s stage failed: %s", name, exc)
        report.errors.append((name, f"{type(exc).__name__}: {exc}"))
        return None


def test_battery(d, spec=None, alpha_mode="two-step", covariance=True, level=LEVEL,
                 max_iter=1000, gender=None):
    """Fit all three models, test the restrictions and recover what the verdict allows.

    Parameters
    ----------
    d : Dataset
        Prepared single-gender sample.
    alpha_mode : {"two-step", "joint"}
        Hold the home-production share at its first-pass estimate or estimate
        it inside the likelihood.
    level : float
        Nominal size of both LR tests.

    Returns
    -------
    BatteryReport
        Always returned; a stage that raises is recorded in ``errors`` and
        the stages depending on it are skipped.
    """
    spec = spec or ModelSpec()
    if gender is None:
        g = np.unique(d.teen_gender)
        gender = str(g[0]) if g.size == 1 else "pooled"
    rep = BatteryReport(gender=gender, n=len(d))
    if alpha_mode not in ("two-step", "joint"):
        raise ValueError("alpha_mode must be 'two-step' or 'joint'")
    rep.alpha = _stage(rep, "alpha", lambda: estimate_alpha(d))
    alpha = None if rep.alpha is None else (rep.alpha.alpha, rep.alpha.se)
    fits = _stage(rep, "fit", lambda: fit_all(d, spec, alpha, alpha_mode == "joint",
                                              covariance, KINDS, max_iter))
    if fits is None:
        return rep
    rep.fits = fits
    for kind in DF:
        t = _stage(rep, f"lr_{kind}", lambda k=kind: lr_test(fits[k], fits["unrestricted"]))
        if t is not None:
            rep.lr[kind] = t
    if len(rep.lr) == len(DF):
        rep.verdict = Verdict(rep.lr["unitary"].p < level, rep.lr["collective"].p < level)
    collective_ok = rep.verdict is not None and not rep.verdict.collective_rejected
    src = "collective" if collective_ok else "unrestricted"
    f = fits[src]
    cov = f.sub_covariance(("bt", "bp", "by")) if covariance else None
    rep.reservation = _stage(rep, "reservation_wage",
                             lambda: reservation_wage(f.bt, f.bp, f.by, cov))
    rep.reservation_source = src
    if collective_ok:
        rep.sharing = _stage(rep, "sharing_rule", lambda: recover_sharing_rule(fits["collective"]))
    return rep


# ---------------------------------------------------------------- tables


def estimate_table(fit):
    """Rows of ``estimates_{kind}_{gender}.csv`` for a fitted model.

    Coefficients pinned down by the restrictions are left blank, as are
    SEs when the covariance was skipped.
    """
    spec = fit.spec
    restricted = set(RESTRICTED[fit.kind])
    h_fixed = fit.info.get("joint_alpha") is False
    se = fit.se

    def cell(name):
        if name is None or name in restricted:
            return ("", "")
        i = spec.names.index(name)
        return (fit.theta[i], se[i])

    rows = []
    for label, w, s, t in table_rows(spec):
        rows.append((label,) + cell(w) + cell(s) + cell(t) + ("", ""))
    for name in SCALAR_ROWS:
        i = spec.names.index(name)
        rows.append((name, "", "", "", "", "", "", fit.theta[i], "" if h_fixed and name == "h_const" else se[i]))
    info = fit.info
    rows.append(("N", info.get("n_work", ""), "", info.get("n_school", ""), "",
                 info.get("n_teen", ""), "", fit.n, ""))
    rows.append(("loglik", "", "", "", "", "", "", fit.loglik, ""))
    if fit.alpha is not None:
        rows.append(("alpha", "", "", "", "", "", "", fit.alpha, fit.alpha_se))
    return rows


def read_estimates(path):
    """Parse an estimates table back into ``{parameter: (value, se)}``.

    Blank cells are omitted. Regime rows map to the parameter names of the
    layout (``At``, ``at``, ``bt`` ...); scalar rows keep their label, and
    ``N``/``loglik`` are returned under those labels.
    """
    by_label = {r[0]: r[1:] for r in BASE_ROWS + (("ln_teen_wage", "delta", "delta", None),)}
    out = {}

    def num(s):
        return float(s) if s not in ("", None) else np.nan

    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            label = row["variable"]
            if label in by_label:
                names = by_label[label]
            elif label in ("N", "loglik") or label in SCALAR_ROWS or label == "alpha":
                if row.get("coef", "") != "":
                    out[label] = (num(row["coef"]), num(row.get("se", "")))
                continue
            else:
                names = (f"w_{label}", f"s_{label}", f"t_{label}")
            for name, col in zip(names, ("work", "school", "teen")):
                if name is None or row.get(f"{col}_coef", "") == "":
                    continue
                out[name] = (num(row[f"{col}_coef"]), num(row.get(f"{col}_se", "")))
    return out


def write_estimates(fit, path):
    write_table(path, TABLE_HEADER, estimate_table(fit))


def write_lr_tests(lr, path):
    write_table(path, ("restriction", "stat", "df", "p"),
                [(k, t.stat, t.df, t.p) for k, t in lr.items()])


def read_lr_tests(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["restriction"]: LRTest(float(r["stat"]), int(r["df"]), float(r["p"]))
                for r in csv.DictReader(fh)}


SHARING_HEADER = ("gender", "parameter", "estimate", "se")
SHARING_PARAMS = ("alpha", "gamma_p", "gamma_y", "F_prime", "psi_t", "psi_p", "psi_y",
                  "theta_p_rho", "theta_p_w", "theta_p_K")


def sharing_rows(gender, sp):
    rows = [(gender, k, getattr(sp, k), sp.ses.get(k, np.nan)) for k in SHARING_PARAMS]
    rows += [(gender, k, "unidentified", "") for k in sp.unidentified]
    return rows


def write_sharing_rule(reports, path):
    rows = []
    for rep in reports:
        if rep.sharing is not None:
            rows += sharing_rows(rep.gender, rep.sharing)
    write_table(path, SHARING_HEADER, rows)


def read_sharing_rule(path):
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            if r["estimate"] == "unidentified":
                continue
            se = float(r["se"]) if r["se"] else np.nan
            out.setdefault(r["gender"], {})[r["parameter"]] = (float(r["estimate"]), se)
    return out


def verdict_markdown(rep, level=LEVEL):
    """Markdown verdict for one gender."""
    lines = [f"# Restriction tests: {rep.gender}", "", f"Households: {rep.n}", ""]
    if rep.alpha is not None:
        lines.append(f"Home-production share of parents (alpha): {fmt(rep.alpha.alpha)} "
                     f"(SE {fmt(rep.alpha.se)})")
        lines.append("")
    lines += ["| model | log-likelihood | converged |", "|---|---|---|"]
    for kind in KINDS:
        if kind in rep.fits:
            f = rep.fits[kind]
            lines.append(f"| {kind} | {fmt(f.loglik)} | {f.converged} |")
    lines += ["", f"| restriction | LR stat | df | p-value | rejected at {level} |", "|---|---|---|---|---|"]
    for kind, t in rep.lr.items():
        lines.append(f"| {kind} | {fmt(t.stat)} | {t.df} | {fmt(t.p)} | {t.p < level} |")
    lines.append("")
    if rep.verdict is not None:
        lines.append(f"Verdict: {rep.verdict.label}")
    else:
        lines.append("Verdict: not available")
    if rep.reservation is not None:
        r = rep.reservation
        lines += ["", f"Reservation-wage frontier ({rep.reservation_source} fit): "
                  f"gamma_p {fmt(r.gamma_p)} (SE {fmt(r.se_p)}), gamma_y {fmt(r.gamma_y)} (SE {fmt(r.se_y)})"]
    if rep.sharing is not None:
        s = rep.sharing
        lines += ["", "Sharing rule (constants kappa0, kappa1 unidentified):", "",
                  "| parameter | estimate | SE |", "|---|---|---|"]
        for k in SHARING_PARAMS:
            lines.append(f"| {k} | {fmt(getattr(s, k))} | {fmt(s.ses.get(k, np.nan))} |")
    if rep.errors:
        lines += ["", "Failed stages:", ""] + [f"- {k}: {m}" for k, m in rep.errors]
    return "\n".join(lines) + "\n"


def write_battery(rep, outdir):
    """Write the per-gender tables and verdict into ``outdir``; returns the paths."""
    paths = []
    for kind, f in rep.fits.items():
        p = outdir / f"estimates_{kind}_{rep.gender}.csv"
        write_estimates(f, p)
        paths.append(p)
    p = outdir / f"lr_tests_{rep.gender}.csv"
    write_lr_tests(rep.lr, p)
    paths.append(p)
    p = outdir / f"verdict_{rep.gender}.md"
    p.write_text(verdict_markdown(rep), encoding="utf-8")
    paths.append(p)
    return paths


# ---------------------------------------------------------------- report


def _gender_tables(directory):
    found = {}
    for p in sorted(directory.glob("estimates_*_*.csv")):
        stem = p.stem[len("estimates_"):]
        kind, _, gender = stem.partition("_")
        if kind in KINDS and gender:
            found.setdefault(gender, {})[kind] = p
    return found


def _lr_from_tables(est):
    out = {}
    u = est.get("unrestricted", {}).get("loglik")
    for kind in DF:
        r = est.get(kind, {}).get("loglik")
        if u is not None and r is not None:
            out[kind] = lr_test(r[0], u[0], DF[kind])
    return out


def report_from_tables(directory, level=LEVEL):
    """Paper-style verdict rebuilt from the tables in ``directory``.

    Returns ``(markdown, summary)`` where ``summary`` maps each gender to the
    numbers shown. LR statistics come from ``lr_tests_{gender}.csv`` or, failing
    that, from the log-likelihood rows; the sharing rule from
    ``sharing_rule.csv`` or, failing that, from the collective table.
    """
    tables = _gender_tables(directory)
    if not tables:
        raise PrerequisiteError(
            f"no estimates_{{kind}}_{{gender}}.csv tables in {directory}; run the 'structural' stage first")
    shared = directory / "sharing_rule.csv"
    stored = read_sharing_rule(shared) if shared.exists() else {}
    lines = ["# Household decision verdict", ""]
    summary = {}
    for gender, paths in tables.items():
        est = {k: read_estimates(p) for k, p in paths.items()}
        lr_path = directory / f"lr_tests_{gender}.csv"
        lr = read_lr_tests(lr_path) if lr_path.exists() else _lr_from_tables(est)
        rej = {k: t.p < level for k, t in lr.items()}
        collective_ok = not rej.get("collective", False)
        rows = []
        for kind in DF:
            if kind in lr:
                t = lr[kind]
                word = "rejected" if rej[kind] else "not rejected"
                rows.append((f"{kind.capitalize()} LR", f"{t.stat:.2f} (df {t.df}, p {t.p:.3g}), {word}"))
            else:
                rows.append((f"{kind.capitalize()} LR", "not available"))
        if len(rej) == len(DF):
            rows.append(("Verdict", Verdict(rej["unitary"], rej["collective"]).label))
        src = "collective" if collective_ok and "collective" in est else "unrestricted"
        info = {"lr": lr}
        vals = est.get(src, {})
        if all(k in vals for k in ("bt", "bp", "by")):
            r = reservation_wage(vals["bt"][0], vals["bp"][0], vals["by"][0])
            rows.append((f"Reservation wage ({src})", f"γ_p {r.gamma_p:.3f}, γ_y {r.gamma_y:.3f}"))
            info["reservation"] = (r.gamma_p, r.gamma_y)
        sharing = None
        if gender in stored:
            sharing = {k: v[0] for k, v in stored[gender].items()}
        elif collective_ok and "collective" in est:
            c = {k: v[0] for k, v in est["collective"].items()}
            sp = recover_sharing_rule(c, alpha=(c.get("alpha", np.nan), np.nan))
            sharing = sp.as_dict()
        if sharing is not None:
            rows.append(("Sharing rule", f"F′ {sharing['F_prime']:.3f}, ψ_t {sharing['psi_t']:.3f}, "
                         f"ψ_p {sharing['psi_p']:.3f}, ψ_y {sharing['psi_y']:.3f}"))
            info["sharing"] = sharing
        summary[gender] = info
        lines += [f"## {gender}", "", "| item | value |", "|---|---|"]
        lines += [f"| {a} | {b} |" for a, b in rows]
        lines.append("")
    return "\n".join(lines), summary


test_battery.__test__ = False
