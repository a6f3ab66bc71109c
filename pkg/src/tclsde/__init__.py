"""Simulation of SDEs driven by time-changed Levy noise.

The pipeline has three independent stochastic ingredients — a Brownian
motion, a compensated finite-activity jump part, and an inverse
alpha-stable time change — combined by simulating the non-time-changed
equation with the stochastic theta method and composing the result with
the discretized inverse subordinator.  A Monte Carlo harness measures
weak convergence orders across a ladder of step sizes.
"""

__version__ = "0.1.0"

from .compose import ComposedPath, LengthMismatch, compose, terminal_state
from .experiment import (
    ExperimentPlan,
    InsufficientData,
    WeakErrorReport,
    WeakErrorRow,
    estimate_weak_value,
    fit_order,
    implicit_correction_study,
    run_order_study,
    simulate_time_changed_path,
)
from .jumps import (
    QuadratureFailure,
    TruncatedLevyMeasure,
    compensator_integral,
    compute_lambda,
    no_jumps,
    paper_gaussian_measure,
    sample_jump_size,
    uniform_measure,
)
from .models import (
    ModelSpec,
    TestFunction,
    kubo_model,
    ou_model,
    test_function,
    validate_model,
)
from .stepper import (
    NewtonDivergence,
    StepNoise,
    ThetaParams,
    ThetaRun,
    draw_step_noise,
    frozen_euler_step,
    invert_implicit_map,
    jump_increment,
    simulate_theta_path,
    theta_step,
)
from .streams import (
    GaussianIncrement,
    SeedSpec,
    StreamTag,
    derive_stream,
    path_streams,
    sample_gaussian_increment,
    sample_poisson,
)
from .subordinator import (
    HorizonTooShort,
    InverseTimeChange,
    SubordinatorParams,
    SubordinatorPath,
    build_inverse,
    evaluate_inverse,
    laplace_diagnostic,
    sample_subordinator,
    sample_subordinator_covering,
)
