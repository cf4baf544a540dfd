"""Log-log convergence plots (SVG) for study reports."""

import logging

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .verify import ERROR_KINDS, ConvergenceReport  # noqa: E402

logger = logging.getLogger(__name__)

LABELS = {
    "err_u": "u_h",
    "err_u_star": "u*_h",
    "err_sigma": "sigma_h",
    "err_div": "div sigma_h",
    "err_superclose": "Q_h u - u_h",
}


def plot_convergence(report: ConvergenceReport, path: str) -> str:
    """One polyline per error kind plus dashed reference slopes from the theoretical rates."""
    # Fixed hash salt and no date so identical reports give identical files
    plt.rcParams["svg.hashsalt"] = "curvedhz"
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    h = np.array([r.h for r in report.levels])
    for kind in ERROR_KINDS:
        err = np.array([r.get(kind) for r in report.levels])
        ok = np.isfinite(err) & (err > 0)
        if not np.any(ok):
            continue
        line, = ax.loglog(h[ok], err[ok], "o-", lw=1.2, label=LABELS[kind])
        order = report.theoretical.get(kind)
        if order is not None and np.sum(ok) >= 2:
            h0, e0 = h[ok][0], err[ok][0]
            guide = e0 * (h[ok] / h0) ** order
            ax.loglog(h[ok], guide * 0.5, "--", lw=0.8, color=line.get_color(),
                      label=f"h^{order:g}")
    cfg = report.config
    ax.set_title(f"{cfg.get('chart')}: k={cfg.get('k')}, m={cfg.get('m')}, enriched={cfg.get('enriched')}")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.grid(True, which="both", lw=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote plot {path}")
    return path
