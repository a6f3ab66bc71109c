"""Assemble the time-changed solution X(t) = Y(E_Delta(t)).

A theta run lives in operational time; the inverse time change maps
physical time onto the operational grid.  Composition is pure indexing:
the state at physical time t is the run state at step E_Delta(t)/delta,
piecewise constant between the knots D(t_n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stepper import ThetaRun
from .subordinator import InverseTimeChange

__all__ = ["ComposedPath", "LengthMismatch", "compose", "terminal_state"]


class LengthMismatch(ValueError):
    """The theta run does not cover the operational horizon of the time change."""


@dataclass(frozen=True)
class ComposedPath:
    physical_times: np.ndarray
    states: np.ndarray
    stop_index_N: int


def _check_cover(run: ThetaRun, E: InverseTimeChange) -> None:
    have = len(run.states) - 1
    if have < E.stop_index_N:
        raise LengthMismatch(
            f"theta run has {have} steps but the time change stops at "
            f"index {E.stop_index_N}"
        )


def compose(run: ThetaRun, E: InverseTimeChange, eval_times) -> ComposedPath:
    """Evaluate the composed path at sorted physical times in [0, T]."""
    _check_cover(run, E)
    times = np.atleast_1d(np.asarray(eval_times, dtype=float))
    if times.size and (times.min() < 0 or times.max() > E.T):
        raise ValueError(f"eval_times must lie in [0, {E.T}]")
    idx = np.searchsorted(E.knots, times, side="right") - 1
    return ComposedPath(
        physical_times=times,
        states=run.states[idx],
        stop_index_N=E.stop_index_N,
    )


def terminal_state(run: ThetaRun, E: InverseTimeChange) -> np.ndarray:
    """X(T) = Y_N: the run state at the stopping index."""
    _check_cover(run, E)
    return run.states[E.stop_index_N]
