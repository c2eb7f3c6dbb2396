"""Percentile-band figures, written as deterministic SVG."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"svg.hashsalt": "plspi", "svg.fonttype": "none", "path.simplify": False}
_COLORS = {"lspi-v1": "tab:blue", "lspi-v2": "tab:orange", "plspi": "tab:green"}


def _band(ax, curve, lo, med, hi, label):
    color = _COLORS.get(curve.algorithm)
    it = curve.iterations
    ok = np.isfinite(lo) & np.isfinite(hi)
    ax.fill_between(it[ok], lo[ok], hi[ok], color=color, alpha=0.25, linewidth=0)
    ax.plot(it, np.where(np.isfinite(med), med, np.nan), color=color, marker="o", markersize=3, label=label)


def plot_curves(curves, out_dir, title=""):
    """Write ``rho.svg`` and ``cost.svg``; returns their paths."""
    paths = []
    with matplotlib.rc_context(_STYLE):
        for metric in ("rho", "cost"):
            fig, ax = plt.subplots(figsize=(6.0, 4.0))
            for alg, c in curves.items():
                lo_p, hi_p = c.percentiles
                label = f"{alg} (median, p{lo_p:g}-p{hi_p:g})"
                if metric == "rho":
                    _band(ax, c, c.p_lo, c.median, c.p_hi, label)
                else:
                    _band(ax, c, c.cost_p_lo, c.cost_median, c.cost_p_hi, label)
            if metric == "rho":
                ax.axhline(1.0, color="grey", linestyle="--", linewidth=0.8)
                ax.set_ylabel("spectral radius of A - BK")
            else:
                ax.set_yscale("log")
                ax.set_ylabel("expected discounted cost (stable runs)")
            ax.set_xlabel("outer iteration")
            if title:
                ax.set_title(title)
            ax.legend(fontsize=8)
            fig.tight_layout()
            path = os.path.join(out_dir, f"{metric}.svg")
            try:
                fig.savefig(path, format="svg", metadata={"Date": None})
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc}") from exc
            finally:
                plt.close(fig)
            paths.append(path)
    return paths
