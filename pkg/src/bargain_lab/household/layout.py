"""Parameter layout of the switching-regression likelihood and restriction maps.

The full parameter vector holds, in order: the work-regime block, the
school-regime block, the coefficient on ln w^t shared by both regimes
(``delta``), the schooling index, the home-production intercept, log scales
and factor loadings. Loadings are stored as absolute scales
(``load_j = sigma_eta * chi_j``); the work-regime loading is ``sigma_eta``
itself, which fixes chi_w = 1.
"""

from dataclasses import dataclass

import numpy as np

KINDS = ("unrestricted", "unitary", "collective")
DF = {"unitary": 4, "collective": 2}
SCALE_NAMES = ("log_sigma_w", "log_sigma_s", "log_sigma_h", "log_sigma_eta", "load_s", "load_t", "load_h")


@dataclass(frozen=True)
class ModelSpec:
    """Covariates per equation and numerical settings.

    Parameters
    ----------
    x_work, x_school, x_teen : tuple of str
        Covariates of the work-regime, school-regime and schooling equations.
    endowment : float
        Weekly hours mapped to a time share of one.
    nodes : int
        Gauss-Hermite nodes for the common factor.
    use_cf : bool
        Include the control-function residual in every behavioural equation.
    """

    x_work: tuple = ("young_children", "region")
    x_school: tuple = ("young_children", "region")
    x_teen: tuple = ("young_children", "head_schooling_years")
    endowment: float = 98.0
    nodes: int = 32
    use_cf: bool = True

    def __post_init__(self):
        for f in ("x_work", "x_school", "x_teen"):
            object.__setattr__(self, f, tuple(getattr(self, f)))

    @property
    def work_names(self):
        cf = ("w_cf",) if self.use_cf else ()
        return ("Ap_star", "At", "Ay", "w_const") + cf + tuple(f"w_{x}" for x in self.x_work)

    @property
    def school_names(self):
        cf = ("s_cf",) if self.use_cf else ()
        return ("ap_star", "at", "ay", "s_const") + cf + tuple(f"s_{x}" for x in self.x_school)

    @property
    def teen_names(self):
        cf = ("t_cf",) if self.use_cf else ()
        return ("b0", "bt", "bp", "by") + cf + tuple(f"t_{x}" for x in self.x_teen)

    @property
    def names(self):
        return (self.work_names + self.school_names + ("delta",) + self.teen_names
                + ("h_const",) + SCALE_NAMES)

    def index(self):
        return {k: i for i, k in enumerate(self.names)}

    def slices(self):
        """Positions of each block in the full vector."""
        kw, ks, kt = len(self.work_names), len(self.school_names), len(self.teen_names)
        w = np.arange(kw)
        s = kw + np.arange(ks)
        d = kw + ks
        t = d + 1 + np.arange(kt)
        h = d + 1 + kt
        return dict(work=w, school=s, delta=d, teen=t, h_const=h, scales=h + 1 + np.arange(len(SCALE_NAMES)))


RESTRICTED = {
    "unrestricted": (),
    "unitary": ("At", "at", "ay", "Ap_star"),
    "collective": ("At", "Ap_star"),
}


def free_names(spec, kind, fix_h_const=False):
    drop = set(RESTRICTED[kind])
    if fix_h_const:
        drop.add("h_const")
    return tuple(n for n in spec.names if n not in drop)


def expand(spec, kind, free, h_const=None):
    """Full parameter vector from the free parameters of ``kind``."""
    idx = spec.index()
    names = free_names(spec, kind, h_const is not None)
    theta = np.empty(len(spec.names))
    pos = [idx[n] for n in names]
    theta[pos] = free
    if h_const is not None:
        theta[idx["h_const"]] = h_const
    g = lambda n: theta[idx[n]]  # noqa: E731
    if kind == "unitary":
        Ay, bt, bp, by = g("Ay"), g("bt"), g("bp"), g("by")
        theta[idx["At"]] = Ay
        theta[idx["at"]] = 0.0
        theta[idx["ay"]] = Ay
        theta[idx["Ap_star"]] = (1.0 - by / bt) * g("ap_star") + Ay * bp / bt
    elif kind == "collective":
        diff = g("Ay") - g("ay")
        theta[idx["At"]] = g("at") + diff * g("bt") / g("by")
        theta[idx["Ap_star"]] = g("ap_star") + diff * g("bp") / g("by")
    return theta


def expand_jacobian(spec, kind, free, h_const=None):
    """d theta / d free, analytic."""
    idx = spec.index()
    names = free_names(spec, kind, h_const is not None)
    fpos = {n: j for j, n in enumerate(names)}
    J = np.zeros((len(spec.names), len(names)))
    for n, j in fpos.items():
        J[idx[n], j] = 1.0
    theta = expand(spec, kind, free, h_const)
    g = lambda n: theta[idx[n]]  # noqa: E731
    if kind == "unitary":
        Ay, ap, bt, bp, by = g("Ay"), g("ap_star"), g("bt"), g("bp"), g("by")
        J[idx["At"], fpos["Ay"]] = 1.0
        J[idx["ay"], fpos["Ay"]] = 1.0
        r = idx["Ap_star"]
        J[r, fpos["ap_star"]] = 1.0 - by / bt
        J[r, fpos["Ay"]] = bp / bt
        J[r, fpos["bp"]] = Ay / bt
        J[r, fpos["by"]] = -ap / bt
        J[r, fpos["bt"]] = ap * by / bt**2 - Ay * bp / bt**2
    elif kind == "collective":
        Ay, ay, bt, bp, by = g("Ay"), g("ay"), g("bt"), g("bp"), g("by")
        diff = Ay - ay
        r = idx["At"]
        J[r, fpos["at"]] = 1.0
        J[r, fpos["Ay"]] = bt / by
        J[r, fpos["ay"]] = -bt / by
        J[r, fpos["bt"]] = diff / by
        J[r, fpos["by"]] = -diff * bt / by**2
        r = idx["Ap_star"]
        J[r, fpos["ap_star"]] = 1.0
        J[r, fpos["Ay"]] = bp / by
        J[r, fpos["ay"]] = -bp / by
        J[r, fpos["bp"]] = diff / by
        J[r, fpos["by"]] = -diff * bp / by**2
    return J


def restriction_residuals(values, kind):
    """Residuals of the unitary or collective restrictions at ``values`` (a name map).

    Unitary: A_t - A_y, a_t, (1 + gamma_y)(a_y - A_y),
    A_y gamma_p - (1 + gamma_y) a*_p + A*_p. Collective: the two ratio
    restrictions written in product form.
    """
    v = values
    gp, gy = -v["bp"] / v["bt"], -v["by"] / v["bt"]
    if kind == "unitary":
        return np.array([
            v["At"] - v["Ay"],
            v["at"],
            (1 + gy) * (v["ay"] - v["Ay"]),
            v["Ay"] * gp - (1 + gy) * v["ap_star"] + v["Ap_star"],
        ])
    if kind == "collective":
        diff = v["Ay"] - v["ay"]
        return np.array([
            gy * (v["At"] - v["at"]) + diff,
            gy * (v["Ap_star"] - v["ap_star"]) - gp * diff,
        ])
    return np.zeros(0)
