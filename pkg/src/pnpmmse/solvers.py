"""Iterative solvers: PnP-ISTA, LASSO via ISTA, and MMSE message passing.

All solvers start from the zero vector, run a fixed number of iterations,
and return a :class:`SolverTrace` with per-iteration records.  PnP-ISTA
additionally evaluates the explicit objective (fidelity plus the induced
regularizer) and its gradient along the trajectory, which is what the
descent and stationarity checks consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import InducedRegularizer, MmseDenoiser, posterior_moments
from .errors import NumericalFailureError
from .linear_model import (
    ProblemInstance,
    data_fidelity,
    grad_data_fidelity,
    lipschitz_constant,
    snr_db,
)
from .prior import BernoulliGaussianPrior

__all__ = [
    "TraceOptions",
    "SolverTrace",
    "GampState",
    "pnp_ista",
    "soft_threshold",
    "lasso_ista",
    "gamp",
    "mm_surrogate",
]

# Per-step slack on the objective decrease, relative to |f(x^0)|.
MONOTONE_RTOL = 1e-9
# A solver is declared divergent once its SNR stays this far below its peak
# for DIVERGENCE_PATIENCE consecutive records; message-passing transients can
# dip hard for a few iterations and then recover.
DIVERGENCE_DROP_DB = 20.0
DIVERGENCE_PATIENCE = 10


@dataclass(frozen=True)
class TraceOptions:
    """What to record along a run and how often.

    Objective and gradient tracing require scalar root-finds per component
    per record, so sweeps that only need SNR should switch them off.
    """

    objective: bool = True
    gradient: bool = True
    snr: bool = True
    interval: int = 1

    def __post_init__(self):
        if self.interval < 1:
            raise ValueError("trace interval must be >= 1")


@dataclass
class SolverTrace:
    """Per-iteration records plus the final iterate.

    ``objective`` and ``grad_norm`` are ``None`` for solvers that do not
    minimize an explicit objective (message passing) or do not track the
    quantity.  ``iterations`` holds the iteration numbers the records
    correspond to, always starting at 0.
    """

    iterations: np.ndarray
    final_iterate: np.ndarray
    iterations_run: int
    objective: np.ndarray | None = None
    grad_norm: np.ndarray | None = None
    snr_db: np.ndarray | None = None
    diverged: bool = False


@dataclass
class _Recorder:
    options: TraceOptions
    iterations: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    snr: list = field(default_factory=list)

    def due(self, t: int, max_iter: int) -> bool:
        return t % self.options.interval == 0 or t == max_iter

    def build(self, x: np.ndarray, t: int, diverged: bool = False) -> SolverTrace:
        opts = self.options
        return SolverTrace(
            iterations=np.asarray(self.iterations, dtype=int),
            final_iterate=x,
            iterations_run=t,
            objective=np.asarray(self.objective) if opts.objective and self.objective else None,
            grad_norm=np.asarray(self.grad_norm) if opts.gradient and self.grad_norm else None,
            snr_db=np.asarray(self.snr) if opts.snr and self.snr else None,
            diverged=diverged,
        )


def _require_valid_step(gamma, problem, lipschitz):
    if not gamma > 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if lipschitz is None:
        lipschitz = lipschitz_constant(problem.operator).value
    if gamma * lipschitz > 1.0 + 1e-12:
        raise ValueError(
            f"gamma={gamma} exceeds 1/L={1.0 / lipschitz:.6g}; "
            "pass allow_large_step=True to experiment outside the guaranteed region"
        )


def pnp_ista(
    problem: ProblemInstance,
    denoiser: MmseDenoiser,
    gamma: float,
    max_iter: int = 500,
    trace: TraceOptions = TraceOptions(),
    *,
    lipschitz: float | None = None,
    allow_large_step: bool = False,
    grad_rtol: float | None = None,
) -> SolverTrace:
    """Gradient step on the fidelity followed by the MMSE denoiser.

    With a step size no larger than the reciprocal Lipschitz constant, the
    traced objective (fidelity plus induced regularizer at this ``gamma``)
    is checked to be nonincreasing at every record and the run aborts with
    a numerical failure if it is not; ``allow_large_step=True`` skips both
    the step-size check and that assertion.  ``grad_rtol`` enables an
    opt-in early stop once the traced gradient norm falls below
    ``grad_rtol`` times its value at the first iteration.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not allow_large_step:
        _require_valid_step(gamma, problem, lipschitz)
    elif not gamma > 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")

    regularizer = InducedRegularizer(denoiser, gamma)
    rec = _Recorder(trace)
    x = np.zeros(problem.n)

    f_prev = None
    f_scale = None
    grad_ref = None

    def record(t, x):
        nonlocal f_prev, f_scale, grad_ref
        need_inverse = trace.objective or trace.gradient
        if need_inverse:
            h_val, h_grad = regularizer.value_and_gradient(x)
        rec.iterations.append(t)
        if trace.objective:
            f = data_fidelity(problem, x) + h_val
            rec.objective.append(f)
            if f_scale is None:
                f_scale = abs(f)
            elif not allow_large_step and f > f_prev + MONOTONE_RTOL * max(f_scale, 1e-300):
                raise NumericalFailureError(
                    f"objective increased at iteration {t}: {f_prev} -> {f}", iteration=t
                )
            f_prev = f
        if trace.gradient:
            g = grad_data_fidelity(problem, x) + h_grad
            gn = float(np.linalg.norm(g))
            rec.grad_norm.append(gn)
            if t >= 1 and grad_ref is None:
                grad_ref = gn
        if trace.snr:
            rec.snr.append(snr_db(x, problem.x_true))

    record(0, x)
    t = 0
    for t in range(1, max_iter + 1):
        z = x - gamma * grad_data_fidelity(problem, x)
        if not np.all(np.isfinite(z)):
            raise NumericalFailureError(f"non-finite iterate at iteration {t}", iteration=t)
        x = denoiser.denoise(z)
        if not np.all(np.isfinite(x)):
            raise NumericalFailureError(f"non-finite iterate at iteration {t}", iteration=t)
        if rec.due(t, max_iter):
            record(t, x)
            if grad_rtol is not None and grad_ref is not None and rec.grad_norm:
                if rec.grad_norm[-1] <= grad_rtol * grad_ref:
                    break
    return rec.build(x, t)


def soft_threshold(z, tau):
    """Shrink toward zero by ``tau``: ``sign(z) * max(|z| - tau, 0)``."""
    if not tau >= 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    z = np.asarray(z, dtype=float)
    out = np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)
    return float(out) if out.ndim == 0 else out


def lasso_ista(
    problem: ProblemInstance,
    lam: float,
    gamma: float,
    max_iter: int = 500,
    trace: TraceOptions = TraceOptions(objective=True, gradient=False, snr=True),
    *,
    lipschitz: float | None = None,
    allow_large_step: bool = False,
) -> SolverTrace:
    """ISTA on the l1-regularized least-squares objective.

    The proximal step is the componentwise soft threshold at ``gamma*lam``;
    the traced objective is ``0.5*|y - Hx|^2 + lam*|x|_1`` and is checked
    to be nonincreasing under a valid step size.
    """
    if not lam > 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not allow_large_step:
        _require_valid_step(gamma, problem, lipschitz)
    elif not gamma > 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")

    rec = _Recorder(trace)
    x = np.zeros(problem.n)
    f_prev = None
    f_scale = None

    def record(t, x):
        nonlocal f_prev, f_scale
        rec.iterations.append(t)
        if trace.objective:
            f = data_fidelity(problem, x) + lam * float(np.sum(np.abs(x)))
            rec.objective.append(f)
            if f_scale is None:
                f_scale = abs(f)
            elif not allow_large_step and f > f_prev + MONOTONE_RTOL * max(f_scale, 1e-300):
                raise NumericalFailureError(
                    f"objective increased at iteration {t}: {f_prev} -> {f}", iteration=t
                )
            f_prev = f
        if trace.snr:
            rec.snr.append(snr_db(x, problem.x_true))

    record(0, x)
    t = 0
    for t in range(1, max_iter + 1):
        z = x - gamma * grad_data_fidelity(problem, x)
        if not np.all(np.isfinite(z)):
            raise NumericalFailureError(f"non-finite iterate at iteration {t}", iteration=t)
        x = soft_threshold(z, gamma * lam)
        if rec.due(t, max_iter):
            record(t, x)
    return rec.build(x, t)


@dataclass
class GampState:
    """State of the message-passing solver.

    ``x_hat`` and ``tau_x`` are the posterior mean and per-component
    posterior variances of the denoiser block; ``r_prior`` and
    ``prec_prior`` parametrize the extrinsic Gaussian message feeding it.
    """

    x_hat: np.ndarray
    tau_x: np.ndarray
    r_prior: np.ndarray
    prec_prior: float


_GAMP_SLOPE_EPS = 1e-12
_GAMP_PREC_MIN = 1e-12
_GAMP_PREC_MAX = 1e12


def gamp(
    problem: ProblemInstance,
    prior: BernoulliGaussianPrior,
    max_iter: int = 500,
    damping: float = 0.9,
    trace: TraceOptions = TraceOptions(objective=False, gradient=False, snr=True),
) -> SolverTrace:
    """MMSE message passing with the true statistical parameters.

    Two moment-matched Gaussian blocks exchange extrinsic messages: the
    scalar MMSE denoiser handles the prior, and an LMMSE block handles the
    measurements through a single eigendecomposition of ``H^T H`` per call.
    On a decoupled operator (``H = I``) the likelihood-side extrinsic
    message is exactly the raw measurement channel, so the converged
    estimate reproduces the scalar denoiser applied to ``y``.  ``damping``
    in (0, 1] blends each new extrinsic message with the previous one
    (1 means undamped).  No objective is recorded: the iteration minimizes
    no explicit cost.  The run stops early with ``diverged=True`` once the
    SNR has stayed more than 20 dB below its running peak for 10
    consecutive records.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must be in (0, 1], got {damping}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    h = problem.operator.matrix
    se2 = problem.sigma_e**2
    eigvals, basis = np.linalg.eigh(h.T @ h)
    eigvals = np.clip(eigvals, 0.0, None)
    data_modes = basis.T @ (h.T @ problem.y)

    state = GampState(
        x_hat=np.zeros(problem.n),
        tau_x=np.full(problem.n, prior.variance),
        r_prior=np.zeros(problem.n),
        prec_prior=1.0 / prior.variance,
    )

    rec = _Recorder(trace)
    rec.iterations.append(0)
    if trace.snr:
        rec.snr.append(snr_db(state.x_hat, problem.x_true))

    best_snr = -np.inf
    below_peak = 0
    diverged = False
    t = 0
    for t in range(1, max_iter + 1):
        v1 = 1.0 / state.prec_prior
        x_hat, tau_x = posterior_moments(prior, np.sqrt(v1), state.r_prior)
        if not (np.all(np.isfinite(x_hat)) and np.all(np.isfinite(tau_x))):
            raise NumericalFailureError(f"non-finite state at iteration {t}", iteration=t)
        if np.any(tau_x < 0.0):
            raise NumericalFailureError(f"negative variance at iteration {t}", iteration=t)
        tau_x = np.maximum(tau_x, 1e-300)
        state.x_hat, state.tau_x = x_hat, tau_x

        slope = min(max(float(np.mean(tau_x)) / v1, _GAMP_SLOPE_EPS), 1.0 - _GAMP_SLOPE_EPS)
        prec_lik = state.prec_prior * (1.0 - slope) / slope
        r_lik = (x_hat - slope * state.r_prior) / (1.0 - slope)

        modes = basis.T @ r_lik
        denom = eigvals + se2 * prec_lik
        safe = np.where(denom > 0.0, denom, 1.0)
        x_lmmse = basis @ np.where(denom > 0.0, (data_modes + se2 * prec_lik * modes) / safe, modes)
        shrink = np.where(denom > 0.0, se2 * prec_lik / safe, 1.0)
        slope_lik = min(max(float(np.mean(shrink)), _GAMP_SLOPE_EPS), 1.0 - _GAMP_SLOPE_EPS)

        prec_new = prec_lik * (1.0 - slope_lik) / slope_lik
        prec_new = min(max(prec_new, _GAMP_PREC_MIN), _GAMP_PREC_MAX)
        r_new = (x_lmmse - slope_lik * r_lik) / (1.0 - slope_lik)
        state.prec_prior = damping * prec_new + (1.0 - damping) * state.prec_prior
        state.r_prior = damping * r_new + (1.0 - damping) * state.r_prior

        if rec.due(t, max_iter):
            rec.iterations.append(t)
            if trace.snr:
                current = snr_db(state.x_hat, problem.x_true)
                rec.snr.append(current)
                best_snr = max(best_snr, current)
                below_peak = below_peak + 1 if current < best_snr - DIVERGENCE_DROP_DB else 0
                if below_peak >= DIVERGENCE_PATIENCE:
                    diverged = True
                    break
    return rec.build(state.x_hat, t, diverged=diverged)


def mm_surrogate(
    problem: ProblemInstance,
    regularizer: InducedRegularizer,
    x: np.ndarray,
    s: np.ndarray,
) -> float:
    """Quadratic upper model of the objective around ``s``, evaluated at ``x``.

    Fidelity linearized at ``s`` plus a proximal quadratic at step
    ``regularizer.gamma`` plus the regularizer at ``x``.  For step sizes no
    larger than the reciprocal Lipschitz constant this majorizes the true
    objective and touches it at ``x = s``; tests use it as the descent
    oracle.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    d = x - s
    value = (
        data_fidelity(problem, s)
        + float(grad_data_fidelity(problem, s) @ d)
        + 0.5 / regularizer.gamma * float(d @ d)
        + regularizer.value(x)
    )
    return value
