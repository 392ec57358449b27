"""Report rendering: per-curve data files plus a vector figure per sweep.

The plot subcommand reads a sweep CSV, refits the log-log slope with the
same routine the sweep used (so the annotation matches bit-for-bit), writes
one whitespace-delimited .dat file per curve and renders a self-contained
SVG next to them.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .artifacts import read_sweep_csv
from .harness import fit_loglog


def emit_plotdata(csv_path: str, out_dir: str | None = None,
                  rho: float | None = None) -> dict:
    """Write measured/bound/fit curve files and the log-log figure.

    Returns the paths and the fitted slope.  The bound curve is the sum of
    the bound columns, scaled through the largest-eps measured point (the
    bound's constant is existence-only, so only its shape is meaningful).
    """
    rows = read_sweep_csv(csv_path)
    out_dir = out_dir or os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(csv_path))[0]

    eps = np.array([r["eps"] for r in rows])
    err = np.array([r["max_L2"] + r["L2H1"] for r in rows])
    bound = np.array([r["bound_eps_term"] + r["bound_alpha_term"]
                      + r["bound_beta_term"] + r["bound_g_term"]
                      for r in rows])
    i_max = int(np.argmax(eps))
    bound_scaled = bound * (err[i_max] / bound[i_max])

    slope, intercept, stderr = fit_loglog(eps, err)
    fit = np.exp(intercept + slope * np.log(eps))

    paths = {}
    for name, ys in (("measured", err), ("bound", bound_scaled), ("fit", fit)):
        path = os.path.join(out_dir, f"{stem}_{name}.dat")
        with open(path, "w") as f:
            f.write("# eps value\n")
            for e, v in sorted(zip(eps, ys)):
                f.write("%.17g %.17g\n" % (e, v))
        paths[name] = path

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    order = np.argsort(eps)
    ax.loglog(eps[order], err[order], "ko-", label="measured")
    ax.loglog(eps[order], bound_scaled[order], "b--",
              label="bound shape (scaled)")
    ax.loglog(eps[order], fit[order], "r:",
              label=f"fit slope {slope:.3f}")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"max-$L^2$ + $L^2H^1$ error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    svg = os.path.join(out_dir, f"{stem}.svg")
    fig.savefig(svg)
    plt.close(fig)
    paths["figure"] = svg
    return {"paths": paths, "slope": slope, "stderr": stderr}
