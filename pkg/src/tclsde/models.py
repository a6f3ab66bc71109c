"""SDE coefficient contracts and the two bundled linear models.

A ModelSpec packages the drift f, diffusion g, jump coefficient h, the
drift Jacobian (the implicit solver consumes it), a global Lipschitz
constant for f, the jump measure, and the initial state.  Coefficient
callables take a single state vector; models may additionally supply
vectorized batch evaluators, which the Monte Carlo engine uses to step
many paths at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jumps as jump_measure

__all__ = [
    "ModelSpec",
    "BatchOps",
    "TestFunction",
    "ou_model",
    "kubo_model",
    "validate_model",
    "ValidationReport",
    "test_function",
    "TEST_FUNCTIONS",
]


@dataclass(frozen=True)
class BatchOps:
    """Vectorized coefficient evaluation over a batch of states.

    States are arrays of shape (B, d).  ``jump`` takes per-row scalar
    marks z of shape (B,).  All operations must be row-local elementwise
    arithmetic so that results for a given row do not depend on which
    other rows share the batch; that property is what makes chunked and
    threaded runs bit-identical to sequential ones.
    """

    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion_dot: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    jump: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    # Jacobian of the drift; may return a constant (d, d) array or a
    # per-row (B, d, d) stack.
    drift_jacobian: Callable[[float, np.ndarray], np.ndarray] = None


@dataclass(frozen=True)
class ModelSpec:
    dim_d: int
    dim_m: int
    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    jump: Callable[[float, np.ndarray, float], np.ndarray]
    drift_jacobian: Callable[[float, np.ndarray], np.ndarray]
    lipschitz_L: float
    measure: jump_measure.TruncatedLevyMeasure
    x0: np.ndarray
    # None means "compute the compensator by quadrature"; models whose
    # jump coefficient integrates to zero declare that explicitly so the
    # stepper can skip per-step quadrature.
    compensator: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    # True asserts the compensator is identically zero, letting batch
    # code skip it entirely instead of evaluating a zero function per row.
    compensator_zero: bool = False
    batch: Optional[BatchOps] = None
    label: str = "custom"


@dataclass(frozen=True)
class TestFunction:
    """Scalar observable used by weak-error studies."""

    phi: Callable[[np.ndarray], float]
    label: str
    # Batched variant over states of shape (B, d); required by the engine.
    phi_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None


def ou_model(a1: float, a2: float, a3: float, a4: float) -> ModelSpec:
    """Mean-reverting linear model: f = a1 (a2 - x), g = a3, h = a4 z.

    Scalar state, scalar Brownian motion, additive noise.  The drift is
    affine with Lipschitz constant a1, and the jump coefficient is odd
    in z, so the compensator vanishes for any symmetric jump measure.
    """
    if a1 <= 0:
        raise ValueError(f"a1 must be positive, got {a1}")

    def drift(t, x):
        return np.array([a1 * (a2 - x[0])])

    def diffusion(t, x):
        return np.array([[a3]])

    def jump(t, x, z):
        return np.array([a4 * z])

    def jacobian(t, x):
        return np.array([[-a1]])

    jac_const = np.array([[-a1]])
    batch = BatchOps(
        drift=lambda t, X: a1 * (a2 - X),
        # dW has shape (B, 1) here, matching the state shape directly.
        diffusion_dot=lambda t, X, dW: a3 * dW,
        jump=lambda t, X, z: a4 * z[:, None],
        drift_jacobian=lambda t, X: jac_const,
    )
    return ModelSpec(
        dim_d=1,
        dim_m=1,
        drift=drift,
        diffusion=diffusion,
        jump=jump,
        drift_jacobian=jacobian,
        lipschitz_L=a1,
        measure=jump_measure.paper_gaussian_measure(1.0),
        x0=np.array([0.5]),
        compensator=lambda t, x: np.zeros(1),
        compensator_zero=True,
        batch=batch,
        label="ou",
    )


def kubo_model(a: float, sigma: float, gamma: float) -> ModelSpec:
    """Stochastic oscillator: rotation drift with multiplicative noise.

    f(x) = (-a x2, a x1), g(x) = sigma x (single Brownian driver),
    h(x, z) = gamma z (x2, x1).  The drift matrix is skew-symmetric so
    |f(x) - f(y)| = a |x - y| exactly; h is odd in z, so the compensator
    vanishes under the symmetric bundled measure.
    """

    def drift(t, x):
        return np.array([-a * x[1], a * x[0]])

    def diffusion(t, x):
        return np.array([[sigma * x[0]], [sigma * x[1]]])

    def jump(t, x, z):
        return np.array([gamma * z * x[1], gamma * z * x[0]])

    def jacobian(t, x):
        return np.array([[0.0, -a], [a, 0.0]])

    def batch_drift(t, X):
        out = np.empty_like(X)
        out[:, 0] = -a * X[:, 1]
        out[:, 1] = a * X[:, 0]
        return out

    def batch_jump(t, X, z):
        out = np.empty_like(X)
        out[:, 0] = gamma * z * X[:, 1]
        out[:, 1] = gamma * z * X[:, 0]
        return out

    jac_const = np.array([[0.0, -a], [a, 0.0]])
    batch = BatchOps(
        drift=batch_drift,
        # dW has shape (B, 1); broadcasting against (B, 2) states scales
        # both components by the single Brownian increment.
        diffusion_dot=lambda t, X, dW: sigma * X * dW,
        jump=batch_jump,
        drift_jacobian=lambda t, X: jac_const,
    )
    return ModelSpec(
        dim_d=2,
        dim_m=1,
        drift=drift,
        diffusion=diffusion,
        jump=jump,
        drift_jacobian=jacobian,
        lipschitz_L=abs(a),
        measure=jump_measure.paper_gaussian_measure(1.0),
        x0=np.array([1.0, 1.0]),
        compensator=lambda t, x: np.zeros(2),
        compensator_zero=True,
        batch=batch,
        label="kubo",
    )


TEST_FUNCTIONS = {
    "exp_neg_square": TestFunction(
        phi=lambda x: float(np.exp(-np.dot(x, x))),
        label="exp_neg_square",
        phi_batch=lambda X: np.exp(-np.sum(X * X, axis=1)),
    ),
    "product": TestFunction(
        phi=lambda x: float(x[0] * x[1]),
        label="product",
        phi_batch=lambda X: X[:, 0] * X[:, 1],
    ),
    "identity_first": TestFunction(
        phi=lambda x: float(x[0]),
        label="identity_first",
        phi_batch=lambda X: X[:, 0].copy(),
    ),
}


def test_function(name: str) -> TestFunction:
    try:
        return TEST_FUNCTIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown test function {name!r}; choose from {sorted(TEST_FUNCTIONS)}"
        ) from None


@dataclass
class ValidationReport:
    probes: int
    max_lipschitz_ratio: float
    declared_L: float
    max_jacobian_rel_error: float
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_model(
    spec: ModelSpec, probes: int = 100, rng: Optional[np.random.Generator] = None
) -> ValidationReport:
    """Spot-check the declared Lipschitz constant and Jacobian.

    Samples random (t, x, y) probes, reports the largest observed ratio
    |f(t,x)-f(t,y)|/|x-y| against the declared constant, and compares
    the declared Jacobian with central finite differences.  Failures are
    collected in the report rather than raised, so callers can decide
    severity.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    d = spec.dim_d
    max_ratio = 0.0
    max_jac_err = 0.0
    violations = []
    eps = 1e-6
    for _ in range(probes):
        t = float(rng.uniform(0.0, 1.0))
        x = rng.normal(scale=2.0, size=d)
        y = rng.normal(scale=2.0, size=d)
        gap = np.linalg.norm(x - y)
        if gap > 1e-12:
            ratio = np.linalg.norm(spec.drift(t, x) - spec.drift(t, y)) / gap
            max_ratio = max(max_ratio, ratio)
        jac = np.asarray(spec.drift_jacobian(t, x), dtype=float)
        fd = np.empty((d, d))
        for j in range(d):
            step = np.zeros(d)
            step[j] = eps
            fd[:, j] = (spec.drift(t, x + step) - spec.drift(t, x - step)) / (2 * eps)
        scale = max(1.0, np.abs(jac).max())
        jac_err = np.abs(jac - fd).max() / scale
        max_jac_err = max(max_jac_err, jac_err)
    if max_ratio > spec.lipschitz_L * (1.0 + 1e-9) + 1e-12:
        violations.append(
            f"observed Lipschitz ratio {max_ratio:.6g} exceeds declared "
            f"L={spec.lipschitz_L:.6g}"
        )
    if max_jac_err > 1e-6:
        violations.append(
            f"drift_jacobian disagrees with finite differences "
            f"(max relative error {max_jac_err:.3g})"
        )
    return ValidationReport(
        probes=probes,
        max_lipschitz_ratio=max_ratio,
        declared_L=spec.lipschitz_L,
        max_jacobian_rel_error=max_jac_err,
        violations=violations,
    )
