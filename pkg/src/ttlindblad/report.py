"""Figure rendering for the command-line frontend.

Every simulation and convergence run writes delimited tables; the functions
here turn those tables into PNG files saved next to them.  Uses the Agg
backend so runs work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_time_series(times, series: dict, png_path, title: str, ylabel: str) -> None:
    """Line plot of one or more named time series."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, values in series.items():
        ax.plot(times, values, label=label, linewidth=1.2)
    ax.set_xlabel("time")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)


def render_convergence(hs, errors, slope: float, png_path, title: str) -> None:
    """Log-log error-versus-step-size plot with the fitted slope annotated."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(hs, errors, "o-", label="measured")
    if hs.size >= 2 and np.all(errors > 0):
        ref = errors[0] * (hs / hs[0]) ** slope
        ax.loglog(hs, ref, "k--", alpha=0.5, label=f"slope {slope:.2f}")
    ax.set_xlabel("step size h")
    ax.set_ylabel("error")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)


def render_bond_history(times, max_bonds, png_path, title: str) -> None:
    """Per-step maximum bond dimension across columns."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(times, max_bonds, linewidth=1.2)
    ax.set_xlabel("time")
    ax.set_ylabel("max bond dimension")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
