"""Deterministic CSV tables and SVG figures."""

import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "bargain-lab"
plt.rcParams["svg.fonttype"] = "none"


def fmt(v):
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool, int)) and not isinstance(v, float):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def coef_rows(fit, prefix=""):
    """``(name, estimate, se)`` rows of a FitResult."""
    return [(prefix + n, c, s) for n, c, s in zip(fit.names, fit.coefficients, fit.se)]


def save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def new_figure(width=6.0, height=4.0):
    return plt.subplots(figsize=(width, height))
