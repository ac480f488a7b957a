"""Tables and plots built from a run directory's JSON outputs."""
from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import rows_csv  # noqa: E402

NORM_KEYS = ("hse", "bmo", "sup_rb3", "e_norm", "alpha", "holder_constant", "fit_residual", "mean_value_ratio")
VERIFIER_COLUMNS = ("run", "name", "lhs", "rhs", "ratio", "pass")


def _num(x):
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    return x


def norm_rows(profiles: dict) -> list:
    """``(run, key, value)`` for each scalar diagnostic of each run."""
    return [(run, k, _num(d[k])) for run, d in profiles.items() for k in NORM_KEYS if k in d]


def scale_rows(profiles: dict) -> list:
    return [(run, row["R"], row["m"], row["M"], row["J"]) for run, d in profiles.items()
            for row in d.get("per_scale", [])]


def verifier_rows(verifier: dict | None) -> list:
    if not verifier:
        return []
    return [(e.get("config", {}).get("run", ""), e["name"], _num(e["lhs"]), _num(e["rhs"]), _num(e["ratio"]),
             "" if e["pass"] is None else str(bool(e["pass"])).lower()) for e in verifier.get("entries", [])]


def tables_csv(profiles: dict, verifier: dict | None) -> dict[str, str]:
    return {
        "norms.csv": rows_csv(["run", "key", "value"], norm_rows(profiles)),
        "per_scale.csv": rows_csv(["run", "R", "m", "M", "J"], scale_rows(profiles)),
        "verifier.csv": rows_csv(list(VERIFIER_COLUMNS), verifier_rows(verifier)),
    }


def oscillation_svg(profiles: dict, reproducible: bool = False) -> str:
    """Log-log plot of ``J_R`` against ``R`` per run, annotated with the fitted slope."""
    plt.rcParams["svg.hashsalt"] = "axilab"
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    plotted = False
    for run, d in profiles.items():
        rows = d.get("per_scale", [])
        R = np.array([r["R"] for r in rows], dtype=float)
        J = np.array([r["J"] for r in rows], dtype=float)
        keep = (R > 0) & (J > 0)
        if keep.sum() < 2:
            continue
        alpha = _num(d.get("alpha", math.nan))
        label = f"{run}: slope {alpha:.3f}" if isinstance(alpha, float) and math.isfinite(alpha) else run
        ax.loglog(R[keep], J[keep], "o-", label=label)
        plotted = True
    ax.set_xlabel("R")
    ax.set_ylabel("oscillation J_R")
    ax.set_title("oscillation against scale")
    if plotted:
        ax.legend(fontsize=7)
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None} if reproducible else None)
    plt.close(fig)
    return buf.getvalue()
