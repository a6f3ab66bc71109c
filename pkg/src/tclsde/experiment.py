"""Monte Carlo weak-error studies across a ladder of step sizes.

The study estimates E[Phi(X(T))] for each step size delta against a
fine-step reference, then fits the slope of log error against log delta.
In the default coupled mode every path index reuses one realization of
the driving randomness across all step sizes: the subordinator series
terms are drawn once, the Brownian path is generated on the reference
grid and aggregated into coarse increments, and a single event list
supplies the jump marks, with each grid consuming the events whose times
fall inside its steps.  Coupling makes the per-delta differences
reflect discretization bias rather than independent Monte Carlo noise,
which is what makes modest path counts usable.

Paths are simulated in fixed-size chunks with all per-state arithmetic
vectorized across the chunk but kept strictly row-local, so a path's
result depends only on its own seed-derived streams.  Chunks are
distributed over worker threads by index and reassembled in index
order, making reports byte-identical for any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import jumps as jump_measure
from .models import ModelSpec, TestFunction
from .stepper import (
    DEFAULT_NEWTON_MAX_ITER,
    DEFAULT_NEWTON_TOL,
    ThetaParams,
    simulate_theta_path,
)
from .streams import SeedSpec, StreamTag, derive_stream, path_streams
from .subordinator import (
    build_inverse,
    draw_series_terms,
    mean_drift_rate,
    sample_subordinator_covering,
)

__all__ = [
    "ExperimentPlan",
    "WeakErrorRow",
    "WeakErrorReport",
    "InsufficientData",
    "estimate_weak_value",
    "run_order_study",
    "fit_order",
    "implicit_correction_study",
    "simulate_time_changed_path",
]

COUPLED = "coupled"
INDEPENDENT = "independent"
STABLE_CLOCK = "stable"
IDENTITY_CLOCK = "identity"

# Paths per vectorized chunk.  Results do not depend on this value
# (all chunk math is row-local); it only balances memory against
# Python-loop overhead.
CHUNK_PATHS = 256

_MAX_FAILURE_FRACTION = 1e-3


class InsufficientData(RuntimeError):
    """Too few usable (delta, error) rows to fit a convergence order."""


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything a weak-order study needs, validated at construction."""

    model: ModelSpec
    theta: float
    T: float
    delta_ladder: tuple
    delta_reference: float
    paths: int
    phi: TestFunction
    seed: int
    coupling: str = COUPLED
    clock: str = STABLE_CLOCK
    alpha: float = 0.8
    lepage_terms: int = 1000
    newton_tol: float = DEFAULT_NEWTON_TOL
    newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER

    def __post_init__(self):
        object.__setattr__(
            self, "delta_ladder", tuple(float(d) for d in self.delta_ladder)
        )
        problems = []
        if self.T <= 0:
            problems.append("T must be positive")
        if self.paths < 1:
            problems.append("paths must be >= 1")
        if not self.delta_ladder:
            problems.append("delta_ladder must be non-empty")
        if any(d <= 0 for d in self.delta_ladder):
            problems.append("ladder deltas must be positive")
        if list(self.delta_ladder) != sorted(self.delta_ladder, reverse=True):
            problems.append("delta_ladder must be strictly decreasing")
        if self.delta_reference <= 0:
            problems.append("delta_reference must be positive")
        elif self.delta_ladder and self.delta_reference > min(self.delta_ladder):
            problems.append("delta_reference must not exceed the finest ladder delta")
        for d in self.delta_ladder:
            if d > 0 and self.delta_reference > 0 and not _divides(d, self.delta_reference):
                problems.append(
                    f"delta_reference {self.delta_reference:g} does not divide "
                    f"ladder delta {d:g}"
                )
        if self.coupling not in (COUPLED, INDEPENDENT):
            problems.append(f"coupling must be coupled|independent, got {self.coupling!r}")
        if self.clock not in (STABLE_CLOCK, IDENTITY_CLOCK):
            problems.append(f"clock must be stable|identity, got {self.clock!r}")
        if self.clock == STABLE_CLOCK and not 0.0 < self.alpha < 1.0:
            problems.append(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.lepage_terms < 1:
            problems.append("lepage_terms must be >= 1")
        if self.clock == IDENTITY_CLOCK:
            for d in list(self.delta_ladder) + [self.delta_reference]:
                if d > 0 and not _divides(self.T, d):
                    problems.append(
                        f"identity clock requires delta {d:g} to divide T={self.T:g}"
                    )
        if not 0.0 <= self.theta <= 1.0:
            problems.append(f"theta must lie in [0, 1], got {self.theta}")
        elif self.delta_ladder:
            guard = self.theta * self.model.lipschitz_L * max(self.delta_ladder)
            if guard > 0.5 + 1e-12:
                problems.append(
                    f"thetaLDelta = {guard:g} > 1/2 at the coarsest ladder delta"
                )
        if self.phi.phi_batch is None:
            problems.append("plan phi requires a batch evaluator")
        if problems:
            raise ValueError("invalid experiment plan: " + "; ".join(problems))

    @property
    def all_deltas(self) -> tuple:
        return self.delta_ladder + (self.delta_reference,)


@dataclass(frozen=True)
class WeakErrorRow:
    delta: float
    estimate: float
    reference_estimate: float
    abs_error: float
    std_error: float
    paths_failed: int


@dataclass
class WeakErrorReport:
    rows: list
    fitted_order: float
    reference_delta: float
    reference_estimate: float
    noise_floor: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def cleared_rows(self) -> list:
        return [r for r in self.rows if r.abs_error > 3.0 * r.std_error]


def _divides(big: float, small: float) -> bool:
    ratio = big / small
    return abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1


def fit_order(rows) -> float:
    """Least-squares slope of log error against log delta.

    ``rows`` is a sequence of (delta, error) pairs; at least two rows
    with strictly positive error are required.
    """
    usable = [(d, e) for d, e in rows if e > 0]
    if len(usable) < 2:
        raise InsufficientData(
            f"need >= 2 rows with positive error to fit an order, got {len(usable)}"
        )
    log_d = np.log([d for d, _ in usable])
    log_e = np.log([e for _, e in usable])
    slope = np.polyfit(log_d, log_e, 1)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# Vectorized stepping over a chunk of paths
# ---------------------------------------------------------------------------


def _batch_newton(model, theta, delta, tol, max_iter, t_next, base, predictor):
    """Masked Newton iteration over a batch of implicit steps.

    Returns (states, iterations, failed, max_residual).  Every row gets
    at least one corrector update; a row is accepted the first time its
    post-update residual drops to tol, and frozen thereafter so batch
    results match the one-path-at-a-time solver bit for bit.
    """
    B, d = base.shape
    td = theta * delta
    y = predictor.copy()
    iters = np.zeros(B, dtype=np.int64)
    failed = np.zeros(B, dtype=bool)
    finite = np.isfinite(predictor).all(axis=1) & np.isfinite(base).all(axis=1)
    failed[~finite] = True
    pending = np.flatnonzero(finite)
    eye = np.eye(d)
    max_res = 0.0
    batch = model.batch
    for it in range(1, max_iter + 1):
        if pending.size == 0:
            break
        yp = y[pending]
        bp = base[pending]
        residual = yp - td * batch.drift(t_next, yp) - bp
        jac = batch.drift_jacobian(t_next, yp)
        if jac.ndim == 2:
            mats = np.broadcast_to(eye - td * jac, (pending.size, d, d))
        else:
            mats = eye[None, :, :] - td * jac
        try:
            dy = np.linalg.solve(mats, residual[..., None])[..., 0]
        except np.linalg.LinAlgError:
            failed[pending] = True
            iters[pending] = it
            break
        yp = yp - dy
        y[pending] = yp
        res2 = yp - td * batch.drift(t_next, yp) - bp
        res_norm = np.sqrt(np.sum(res2 * res2, axis=1))
        bad = ~np.isfinite(res_norm)
        done = (res_norm <= tol) & ~bad
        if np.any(done):
            max_res = max(max_res, float(res_norm[done].max()))
            iters[pending[done]] = it
        if np.any(bad):
            failed[pending[bad]] = True
            iters[pending[bad]] = it
        pending = pending[~done & ~bad]
    else:
        if pending.size:
            failed[pending] = True
            iters[pending] = max_iter
    return y, iters, failed, max_res


class _ChunkDiagnostics:
    """Accumulates Newton statistics across chunk runs."""

    def __init__(self):
        self.iteration_counts = {}
        self.max_residual = 0.0

    def record(self, iters: np.ndarray, max_res: float):
        if iters.size:
            values, counts = np.unique(iters, return_counts=True)
            for v, c in zip(values, counts):
                key = int(v)
                self.iteration_counts[key] = self.iteration_counts.get(key, 0) + int(c)
        self.max_residual = max(self.max_residual, max_res)

    def merge(self, other: "_ChunkDiagnostics"):
        for k, v in other.iteration_counts.items():
            self.iteration_counts[k] = self.iteration_counts.get(k, 0) + v
        self.max_residual = max(self.max_residual, other.max_residual)


def _step_chunk(model, theta, delta, newton_tol, newton_max_iter,
                steps_per_path, dW_rows, events_by_step, diag):
    """Run the theta method over a chunk, vectorized across paths.

    ``steps_per_path`` gives each row's operational step count N;
    ``dW_rows`` is the per-row list of Brownian increment arrays of
    shape (N_row, m); ``events_by_step`` maps a step index to the
    (row_positions, marks) of the jump events landing in that step.
    Rows are processed sorted by descending N so each step touches a
    shrinking active prefix.  Returns final states in the original row
    order plus a per-row failure flag.
    """
    B = len(steps_per_path)
    d = model.dim_d
    N = np.asarray(steps_per_path, dtype=np.int64)
    order = np.argsort(-N, kind="stable")
    pos_of_row = np.empty(B, dtype=np.int64)
    pos_of_row[order] = np.arange(B)
    N_sorted = N[order]
    max_n = int(N_sorted[0]) if B else 0
    m = model.dim_m
    dW = np.zeros((B, max_n, m))
    for row, arr in enumerate(dW_rows):
        p = pos_of_row[row]
        if len(arr):
            dW[p, : len(arr)] = arr
    # Re-key events by sorted position.
    events = {}
    for step, (rows, marks) in events_by_step.items():
        events[step] = (pos_of_row[np.asarray(rows, dtype=np.int64)],
                        np.asarray(marks, dtype=float))

    ascending = np.sort(N)
    Y = np.repeat(model.x0[None, :].astype(float), B, axis=0)
    failed = np.zeros(B, dtype=bool)
    batch = model.batch
    zero_comp = model.compensator_zero or model.measure.total_mass_lambda == 0
    one_minus_theta_delta = (1.0 - theta) * delta
    for n in range(max_n):
        active = B - int(np.searchsorted(ascending, n, side="right"))
        if active == 0:
            break
        V = Y[:active]
        t_n = n * delta
        f = batch.drift(t_n, V)
        gdW = batch.diffusion_dot(t_n, V, dW[:active, n, :])
        H = np.zeros((active, d))
        ev = events.get(n)
        if ev is not None:
            rows_s, marks = ev
            contrib = batch.jump(t_n, Y[rows_s], marks)
            np.add.at(H, rows_s, contrib)
        if not zero_comp:
            H = H - _row_compensators(model, t_n, V) * delta
        base = V + one_minus_theta_delta * f + gdW + H
        if theta == 0.0:
            Y[:active] = base
        else:
            predictor = base + theta * delta * f
            ynew, iters, fail_rows, max_res = _batch_newton(
                model, theta, delta, newton_tol, newton_max_iter,
                t_n + delta, base, predictor,
            )
            Y[:active] = ynew
            diag.record(iters, max_res)
            if np.any(fail_rows):
                failed[:active] |= fail_rows
                Y[:active][fail_rows] = np.nan
    # Undo the sort.
    out = np.empty_like(Y)
    out[order] = Y
    out_failed = np.empty_like(failed)
    out_failed[order] = failed
    return out, out_failed


def _row_compensators(model, t, V):
    out = np.empty_like(V)
    for i in range(V.shape[0]):
        if model.compensator is not None:
            out[i] = model.compensator(t, V[i])
        else:
            for j in range(model.dim_d):
                out[i, j] = jump_measure.compensator_integral(
                    model.measure, lambda z: model.jump(t, V[i], z)[j]
                )
    return out


# ---------------------------------------------------------------------------
# Per-path driving randomness
# ---------------------------------------------------------------------------


def _draw_clock(plan, sub_stream, coarsest):
    """Draw subordinator terms covering T; returns (u, w, drift_rate, S).

    The horizon starts at the smallest multiple of the coarsest delta
    covering T and doubles (with a full redraw) until the realized total
    mass exceeds T.  Acceptance depends only on the series total, never
    on a grid, so one accepted draw serves every step size.
    """
    steps0 = max(1, math.ceil(plan.T / coarsest - 1e-12))
    S = steps0 * coarsest
    for _ in range(64):
        u, w = draw_series_terms(plan.alpha, plan.lepage_terms, S, sub_stream)
        drift = mean_drift_rate(plan.alpha, plan.lepage_terms, S)
        if w.sum() + drift * S > plan.T:
            return u, w, drift, S
        S *= 2.0
    raise RuntimeError("subordinator horizon doubling failed to cover T")


def _stop_index(u, w, drift, S, delta, T):
    """N such that the delta-grid subordinator path first exceeds T at N+1."""
    steps = int(round(S / delta))
    cell = np.ceil(u / delta).astype(np.int64)
    np.clip(cell, 1, steps, out=cell)
    D = np.cumsum(np.bincount(cell, weights=w, minlength=steps + 1))
    D += drift * delta * np.arange(steps + 1)
    return int(np.searchsorted(D, T, side="right")) - 1


def _draw_events(plan, jump_stream, horizon):
    """One compound-Poisson event list on [0, horizon]: sorted times, marks."""
    lam = plan.model.measure.total_mass_lambda
    if lam <= 0:
        return np.empty(0), np.empty(0)
    count = int(jump_stream.poisson(lam * horizon))
    times = np.sort(horizon * (1.0 - jump_stream.random(count)))
    marks = jump_measure.sample_jump_sizes(plan.model.measure, jump_stream, count)
    return times, marks


def _run_chunk_coupled(plan, lo, hi, deltas, diag):
    """Simulate paths lo..hi-1 at every delta with shared randomness."""
    model = plan.model
    m = model.dim_m
    B = hi - lo
    d_ref = plan.delta_reference
    coarsest = max(deltas)
    sqrt_ref = math.sqrt(d_ref)
    ratios = {dd: int(round(dd / d_ref)) for dd in deltas}

    steps = {dd: np.zeros(B, dtype=np.int64) for dd in deltas}
    fine_rows = []
    event_times = []
    event_marks = []
    for b in range(B):
        i = lo + b
        if plan.clock == IDENTITY_CLOCK:
            horizon = plan.T
            for dd in deltas:
                steps[dd][b] = int(round(plan.T / dd))
        else:
            sub = derive_stream(SeedSpec(plan.seed, i, StreamTag.SUBORDINATOR))
            u, w, drift, S = _draw_clock(plan, sub, coarsest)
            horizon = S
            for dd in deltas:
                steps[dd][b] = _stop_index(u, w, drift, S, dd, plan.T)
        need_fine = max(steps[dd][b] * ratios[dd] for dd in deltas)
        rb = derive_stream(SeedSpec(plan.seed, i, StreamTag.BROWNIAN))
        fine = rb.standard_normal((int(need_fine), m)) * sqrt_ref
        fine_rows.append(fine)
        rj = derive_stream(SeedSpec(plan.seed, i, StreamTag.JUMPS))
        times, marks = _draw_events(plan, rj, horizon)
        event_times.append(times)
        event_marks.append(marks)

    out = {}
    for dd in deltas:
        r = ratios[dd]
        N = steps[dd]
        dW_rows = []
        for b in range(B):
            n = int(N[b])
            if n == 0:
                dW_rows.append(np.empty((0, m)))
            elif r == 1:
                dW_rows.append(fine_rows[b][:n])
            else:
                dW_rows.append(fine_rows[b][: n * r].reshape(n, r, m).sum(axis=1))
        events_by_step = {}
        for b in range(B):
            times, marks = event_times[b], event_marks[b]
            if not len(times):
                continue
            st = np.ceil(times / dd).astype(np.int64) - 1
            keep = st < N[b]
            for s, z in zip(st[keep], marks[keep]):
                events_by_step.setdefault(int(s), ([], []))
                events_by_step[int(s)][0].append(b)
                events_by_step[int(s)][1].append(float(z))
        states, failed = _step_chunk(
            model, plan.theta, dd, plan.newton_tol, plan.newton_max_iter,
            N, dW_rows, events_by_step, diag,
        )
        phi = plan.phi.phi_batch(states)
        phi[failed] = np.nan
        out[dd] = (phi, failed)
    return out


def _run_chunk_single(plan, lo, hi, delta, substream, diag):
    """Simulate paths lo..hi-1 at one delta with fresh randomness."""
    model = plan.model
    m = model.dim_m
    B = hi - lo
    N = np.zeros(B, dtype=np.int64)
    dW_rows = []
    all_events = []
    sqrt_d = math.sqrt(delta)
    for b in range(B):
        i = lo + b
        if plan.clock == IDENTITY_CLOCK:
            n = int(round(plan.T / delta))
            horizon = plan.T
        else:
            sub = derive_stream(
                SeedSpec(plan.seed, i, StreamTag.SUBORDINATOR, substream)
            )
            u, w, drift, S = _draw_clock(plan, sub, delta)
            n = _stop_index(u, w, drift, S, delta, plan.T)
            horizon = S
        N[b] = n
        rb = derive_stream(SeedSpec(plan.seed, i, StreamTag.BROWNIAN, substream))
        dW_rows.append(rb.standard_normal((n, m)) * sqrt_d)
        rj = derive_stream(SeedSpec(plan.seed, i, StreamTag.JUMPS, substream))
        times, marks = _draw_events(plan, rj, horizon)
        all_events.append((times, marks))
    events_by_step = {}
    for b in range(B):
        times, marks = all_events[b]
        if not len(times):
            continue
        st = np.ceil(times / delta).astype(np.int64) - 1
        keep = st < N[b]
        for s, z in zip(st[keep], marks[keep]):
            events_by_step.setdefault(int(s), ([], []))
            events_by_step[int(s)][0].append(b)
            events_by_step[int(s)][1].append(float(z))
    states, failed = _step_chunk(
        model, plan.theta, delta, plan.newton_tol, plan.newton_max_iter,
        N, dW_rows, events_by_step, diag,
    )
    phi = plan.phi.phi_batch(states)
    phi[failed] = np.nan
    return phi, failed


def _chunks(paths: int):
    return [(lo, min(lo + CHUNK_PATHS, paths)) for lo in range(0, paths, CHUNK_PATHS)]


def _map_chunks(worker, paths, threads):
    """Apply ``worker(lo, hi)`` to every chunk, in index order."""
    spans = _chunks(paths)
    if threads <= 1:
        return [worker(lo, hi) for lo, hi in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, lo, hi) for lo, hi in spans]
        return [f.result() for f in futures]


def _check_failures(plan, failed_count, label):
    if failed_count > _MAX_FAILURE_FRACTION * plan.paths:
        raise RuntimeError(
            f"{failed_count} of {plan.paths} paths failed Newton iteration "
            f"at delta={label}; exceeding the 0.1% budget"
        )


def estimate_weak_value(plan: ExperimentPlan, delta: float):
    """Sample mean and standard error of Phi(X(T)) at one step size.

    Each of ``plan.paths`` path indices gets its own stream triple.
    Newton failures are excluded from the mean and counted; more than
    0.1% of them is an error.
    """
    ThetaParams(
        theta=plan.theta, delta=delta,
        newton_tol=plan.newton_tol, newton_max_iter=plan.newton_max_iter,
    ).check_wellposed(plan.model.lipschitz_L)
    diag = _ChunkDiagnostics()
    phi = np.empty(plan.paths)
    failed = np.zeros(plan.paths, dtype=bool)
    for lo, hi in _chunks(plan.paths):
        p, f = _run_chunk_single(plan, lo, hi, delta, (), diag)
        phi[lo:hi] = p
        failed[lo:hi] = f
    n_failed = int(failed.sum())
    _check_failures(plan, n_failed, f"{delta:g}")
    good = phi[~failed]
    estimate = float(good.mean())
    if good.size > 1:
        std_error = float(good.std(ddof=1) / math.sqrt(good.size))
    else:
        std_error = 0.0
    return estimate, std_error


def run_order_study(plan: ExperimentPlan, threads: int = 1) -> WeakErrorReport:
    """Estimate the weak error per ladder delta and fit the order.

    In coupled mode each row's standard error is that of the paired
    difference Phi_delta - Phi_ref, which is the quantity the error
    estimate actually is; in independent mode the two estimator errors
    combine in quadrature.  Rows whose error does not clear three
    standard errors are excluded from the order fit; fewer than three
    clearing rows flags (but does not fail) the report.
    """
    deltas = list(plan.all_deltas)
    phi = {dd: np.empty(plan.paths) for dd in deltas}
    failed = {dd: np.zeros(plan.paths, dtype=bool) for dd in deltas}
    diag = _ChunkDiagnostics()

    if plan.coupling == COUPLED:
        def worker(lo, hi):
            local = _ChunkDiagnostics()
            res = _run_chunk_coupled(plan, lo, hi, deltas, local)
            return res, local

        for (lo, hi), (res, local) in zip(
            _chunks(plan.paths), _map_chunks(worker, plan.paths, threads)
        ):
            diag.merge(local)
            for dd in deltas:
                phi[dd][lo:hi], failed[dd][lo:hi] = res[dd]
    else:
        for level, dd in enumerate(deltas):
            substream = (level,)

            def worker(lo, hi, _dd=dd, _sub=substream):
                local = _ChunkDiagnostics()
                res = _run_chunk_single(plan, lo, hi, _dd, _sub, local)
                return res, local

            for (lo, hi), ((p, f), local) in zip(
                _chunks(plan.paths), _map_chunks(worker, plan.paths, threads)
            ):
                diag.merge(local)
                phi[dd][lo:hi] = p
                failed[dd][lo:hi] = f

    ref = plan.delta_reference
    ref_ok = ~failed[ref]
    _check_failures(plan, plan.paths - int(ref_ok.sum()), f"{ref:g} (reference)")
    ref_vals = phi[ref]
    ref_estimate = float(ref_vals[ref_ok].mean())

    rows = []
    paths_failed_by_delta = {}
    for dd in plan.delta_ladder:
        ok = ~failed[dd]
        _check_failures(plan, plan.paths - int(ok.sum()), f"{dd:g}")
        estimate = float(phi[dd][ok].mean())
        if plan.coupling == COUPLED:
            both = ok & ref_ok
            diffs = phi[dd][both] - ref_vals[both]
            n = int(both.sum())
            std_error = float(diffs.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            n_failed = plan.paths - n
        else:
            n_good = int(ok.sum())
            var_d = float(phi[dd][ok].var(ddof=1)) if n_good > 1 else 0.0
            var_r = float(ref_vals[ref_ok].var(ddof=1)) if ref_ok.sum() > 1 else 0.0
            std_error = math.sqrt(var_d / n_good + var_r / int(ref_ok.sum()))
            n_failed = plan.paths - n_good
        rows.append(
            WeakErrorRow(
                delta=dd,
                estimate=estimate,
                reference_estimate=ref_estimate,
                abs_error=abs(estimate - ref_estimate),
                std_error=std_error,
                paths_failed=n_failed,
            )
        )
        paths_failed_by_delta[f"{dd:.17g}"] = n_failed

    cleared = [(r.delta, r.abs_error) for r in rows if r.abs_error > 3.0 * r.std_error]
    noise_floor = len(cleared) < 3
    fitted = fit_order(cleared) if len(cleared) >= 2 else float("nan")
    diagnostics = {
        "newton_iteration_histogram": dict(sorted(diag.iteration_counts.items())),
        "max_newton_residual": diag.max_residual,
        "paths_failed_by_delta": paths_failed_by_delta,
        "cleared_rows": len(cleared),
    }
    return WeakErrorReport(
        rows=rows,
        fitted_order=fitted,
        reference_delta=ref,
        reference_estimate=ref_estimate,
        noise_floor=noise_floor,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Diagnostics and single-path simulation
# ---------------------------------------------------------------------------


def implicit_correction_study(
    model: ModelSpec,
    theta: float,
    y_fixed,
    deltas,
    samples: int,
    master_seed: int,
    t_n: float = 0.0,
):
    """Estimate |E[theta step - frozen Euler step]| at fixed state, per delta.

    Both updates share the same draws, so their difference isolates the
    implicit drift correction; its conditional mean should shrink like
    delta squared.  Returns (rows, slope) where each row is
    (delta, mean_norm, std_error).
    """
    if model.batch is None:
        raise ValueError("implicit_correction_study requires batch model ops")
    y0 = np.asarray(y_fixed, dtype=float)
    rows = []
    lam = model.measure.total_mass_lambda
    for level, delta in enumerate(deltas):
        ThetaParams(theta=theta, delta=delta).check_wellposed(model.lipschitz_L)
        rb = derive_stream(SeedSpec(master_seed, level, StreamTag.BROWNIAN))
        rj = derive_stream(SeedSpec(master_seed, level, StreamTag.JUMPS))
        mean_acc = np.zeros(model.dim_d)
        var_acc = np.zeros(model.dim_d)
        done = 0
        chunk = 200_000
        while done < samples:
            n = min(chunk, samples - done)
            Y = np.repeat(y0[None, :], n, axis=0)
            dW = rb.standard_normal((n, model.dim_m)) * math.sqrt(delta)
            H = np.zeros((n, model.dim_d))
            if lam > 0:
                counts = rj.poisson(lam * delta, n)
                total = int(counts.sum())
                if total:
                    marks = jump_measure.sample_jump_sizes(model.measure, rj, total)
                    rows_idx = np.repeat(np.arange(n), counts)
                    contrib = model.batch.jump(t_n, Y[rows_idx], marks)
                    np.add.at(H, rows_idx, contrib)
            if not model.compensator_zero and lam > 0:
                H -= _row_compensators(model, t_n, Y) * delta
            f = model.batch.drift(t_n, Y)
            gdW = model.batch.diffusion_dot(t_n, Y, dW)
            base = Y + (1.0 - theta) * delta * f + gdW + H
            frozen = Y + delta * f + gdW + H
            if theta == 0.0:
                stepped = base
            else:
                predictor = base + theta * delta * f
                stepped, _, fail, _ = _batch_newton(
                    model, theta, delta, DEFAULT_NEWTON_TOL, DEFAULT_NEWTON_MAX_ITER,
                    t_n + delta, base, predictor,
                )
                if fail.any():
                    raise RuntimeError("Newton failure inside correction study")
            corr = stepped - frozen
            mean_acc += corr.sum(axis=0)
            var_acc += (corr * corr).sum(axis=0)
            done += n
        mean_vec = mean_acc / samples
        # Componentwise variance, combined into a norm-scale standard error.
        var_vec = var_acc / samples - mean_vec**2
        se = math.sqrt(float(var_vec.sum()) / samples)
        rows.append((float(delta), float(np.linalg.norm(mean_vec)), se))
    slope = fit_order([(d, e) for d, e, _ in rows])
    return rows, slope


def simulate_time_changed_path(
    model: ModelSpec,
    theta: float,
    delta: float,
    T: float,
    master_seed: int,
    path_index: int = 0,
    alpha: float = 0.8,
    lepage_terms: int = 1000,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER,
):
    """One composed path: subordinator first, then exactly N theta steps.

    Returns (run, inverse_time_change).  This is the lazy single-path
    pipeline the CLI uses; the order-study engine vectorizes the same
    construction across paths.
    """
    params = ThetaParams(
        theta=theta, delta=delta, newton_tol=newton_tol, newton_max_iter=newton_max_iter
    )
    params.check_wellposed(model.lipschitz_L)
    streams = path_streams(master_seed, path_index)
    path = sample_subordinator_covering(
        alpha, lepage_terms, T, delta, streams.subordinator
    )
    inverse = build_inverse(path, T)
    run = simulate_theta_path(model, params, inverse.stop_index_N, streams=streams)
    return run, inverse
