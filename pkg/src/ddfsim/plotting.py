"""PNG renderings of the curves written by the command-line runner.

Figures are drawn on the Agg canvas directly, without pyplot, so the
module is safe to use from scripts and worker processes and never
changes global matplotlib state.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = ["plot_curve", "plot_histogram"]


def _new_axes(figsize=(5.0, 3.6)):
    fig = Figure(figsize=figsize, dpi=120)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    ax.grid(True, which="both", alpha=0.3, linewidth=0.5)
    return fig, ax


def plot_curve(points, path, label: str = "", ylabel: str = "frame error rate", log_y: bool = True):
    """Estimate against SNR with 95% confidence bars.

    ``points`` are :class:`~ddfsim.metrics.CurvePoint` objects. Points with
    a zero estimate are dropped from a logarithmic axis.
    """
    snr = np.array([p.snr_db for p in points], dtype=float)
    est = np.array([p.estimate for p in points], dtype=float)
    ci = np.array([p.ci_halfwidth for p in points], dtype=float)
    keep = est > 0 if log_y else np.ones(len(est), dtype=bool)
    fig, ax = _new_axes()
    lower = np.minimum(ci, est * 0.999) if log_y else ci
    ax.errorbar(snr[keep], est[keep], yerr=[lower[keep], ci[keep]], marker="o", markersize=3,
                capsize=2, linewidth=1, label=label or None)
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(ylabel)
    if label:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(Path(path))
    return Path(path)


def plot_histogram(rows, path, title: str = ""):
    """Bar chart of ``(snr_db, bin, count, probability)`` rows, one group per SNR."""
    snrs = sorted({r[0] for r in rows})
    bins = list(dict.fromkeys(str(r[1]) for r in rows))
    width = 0.8 / max(len(snrs), 1)
    fig, ax = _new_axes()
    x = np.arange(len(bins))
    for k, s in enumerate(snrs):
        prob = {str(r[1]): r[3] for r in rows if r[0] == s}
        ax.bar(x + k * width, [prob.get(b, 0.0) for b in bins], width=width, label=f"{s:g} dB")
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(bins)
    ax.set_xlabel("activation block")
    ax.set_ylabel("probability")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(Path(path))
    return Path(path)
