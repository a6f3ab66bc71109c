"""Figure rendering for CLI reports.

Every report-producing CLI path can drop a PNG next to its delimited
output: the order study as a log-log error plot against a slope-one
guide, and single paths as step plots in physical time.  Rendering is
strictly optional (--no-plot) and never feeds back into the numerics.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiment import WeakErrorReport

__all__ = ["weak_order_figure", "path_figure", "subordinator_figure"]


def weak_order_figure(report: WeakErrorReport, destination, title: str = "") -> None:
    """Log-log weak error vs step size with a slope-one reference line."""
    deltas = np.array([r.delta for r in report.rows])
    errors = np.array([r.abs_error for r in report.rows])
    sigmas = np.array([r.std_error for r in report.rows])
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.errorbar(
        deltas, errors, yerr=3.0 * sigmas, fmt="o-", capsize=3,
        label="weak error", color="tab:blue",
    )
    positive = errors > 0
    if positive.any():
        anchor = errors[positive][0] / deltas[positive][0]
        guide = anchor * deltas
        ax.plot(deltas, guide, "k--", linewidth=1, label="slope 1 guide")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel(r"$\Delta$")
    ax.set_ylabel("weak error")
    if math.isnan(report.fitted_order):
        label = "order not fit (noise floor)"
    else:
        label = f"fitted order {report.fitted_order:.3f}"
    ax.set_title(title or label)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)


def path_figure(times, states, destination, title: str = "") -> None:
    """Step plot of a composed path in physical time (one line per component)."""
    times = np.asarray(times)
    states = np.atleast_2d(np.asarray(states))
    if states.shape[0] == times.shape[0]:
        states = states.T
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for k, comp in enumerate(states):
        ax.step(times, comp, where="post", label=f"x{k + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    if title:
        ax.set_title(title)
    if states.shape[0] > 1:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)


def subordinator_figure(rows, destination) -> None:
    """Laplace-diagnostic estimates against their closed-form targets."""
    lambdas = [r[0] for r in rows]
    estimates = [r[1] for r in rows]
    targets = [r[2] for r in rows]
    stderrs = [r[3] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.errorbar(lambdas, estimates, yerr=[5 * s for s in stderrs], fmt="o",
                capsize=3, label="Monte Carlo")
    ax.plot(lambdas, targets, "k--", linewidth=1, label="closed form")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$E[e^{-\lambda D(1)}]$")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)
