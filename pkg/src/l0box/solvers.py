"""Accelerated hard-thresholding solvers over a box, with support-aware momentum.

Both solvers share one loop shape: extrapolate with a momentum weight, take a
thresholding step, and re-take it with a smaller safeguarded weight (up to two
downgrades) whenever the support pattern moves. The smoothing variant also
shrinks the smoothing parameter on a fixed power schedule each iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ContractViolation, SupportSet, as_vector
from .diagnostics import (
    EnergyMonitorH,
    EnergyMonitorW,
    TheoryConstants,
    compute_delta,
    compute_gamma,
    compute_nu,
)
from .subproblem import SubproblemInput, hard_threshold_step

__all__ = [
    "REGIME_STEP1",
    "REGIME_STEP3B",
    "REGIME_STEP3B2",
    "CONVERGED",
    "ITERATION_CAP",
    "SolverAbort",
    "SfihtConfig",
    "FihtConfig",
    "SmoothingSchedule",
    "ExtrapolationState",
    "IterationRecord",
    "SolveResult",
    "choose_beta_step1",
    "stopping_check",
    "sfiht_solve",
    "fiht_solve",
]

REGIME_STEP1 = "step1"
REGIME_STEP3B = "step3b"
REGIME_STEP3B2 = "step3b2"

CONVERGED = "converged"
ITERATION_CAP = "iteration_cap"

_BETA_STRATEGIES = ("generic", "seqconv", "fista", "zero")


class SolverAbort(RuntimeError):
    """Non-finite state detected mid-run; carries the trace built so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SmoothingSchedule:
    """Power decay: mu(1) = mu0 and mu(k) = mu0 / (k + 1)**sigma for k >= 2."""

    mu0: float
    sigma: float

    def mu(self, k):
        if k <= 1:
            return self.mu0
        return self.mu0 / (k + 1) ** self.sigma


@dataclass
class ExtrapolationState:
    """Mutable momentum bookkeeping; t_prev drives the fista recurrence."""

    t_prev: float = 1.0
    beta_k: float = 0.0
    regime: str = REGIME_STEP1


@dataclass
class SfihtConfig:
    """Settings for the smoothing solver (nonsmooth losses)."""

    epsilon: float = 1e-3
    sigma: float = 0.95
    mu0: float = 0.7
    L: float | None = None  # default: twice the loss smoothness constant
    alpha: float = 4.0
    beta_strategy: str = "seqconv"
    max_iter: int = 15000
    x0: np.ndarray | None = None
    record_kernel_io: bool = False

    def validate(self, mu_bar=None):
        if self.epsilon <= 0:
            raise ContractViolation("epsilon must be positive")
        if not 0 < self.sigma < 2:
            raise ContractViolation("sigma must lie in (0, 2)")
        if self.beta_strategy not in _BETA_STRATEGIES:
            raise ContractViolation(f"unknown beta_strategy {self.beta_strategy!r}")
        if self.beta_strategy == "seqconv" and not 0.5 <= self.sigma <= 1.0:
            raise ContractViolation("seqconv momentum needs sigma in [1/2, 1]")
        if self.mu0 <= 0 or (mu_bar is not None and self.mu0 > mu_bar):
            raise ContractViolation(f"mu0 must lie in (0, {mu_bar}]")
        if self.max_iter < 1:
            raise ContractViolation("max_iter must be at least 1")
        if self.alpha <= 0:
            raise ContractViolation("alpha must be positive")


@dataclass
class FihtConfig:
    """Settings for the smooth-loss solver."""

    epsilon: float = 1e-4
    L: float | None = None
    alpha: float = 4.0
    beta_strategy: str = "alpha"  # "alpha" or "zero"
    max_iter: int = 15000
    x0: np.ndarray | None = None
    record_kernel_io: bool = False

    def validate(self):
        if self.epsilon <= 0:
            raise ContractViolation("epsilon must be positive")
        if self.alpha <= 0:
            raise ContractViolation("alpha must be positive")
        if self.beta_strategy not in ("alpha", "zero"):
            raise ContractViolation(f"unknown beta_strategy {self.beta_strategy!r}")
        if self.max_iter < 1:
            raise ContractViolation("max_iter must be at least 1")


@dataclass
class IterationRecord:
    """One accepted iterate: k indexes the point whose stats are recorded, and
    beta/regime belong to the step taken from it."""

    k: int
    regime: str
    beta: float
    mu: float | None
    card: int
    f_exact: float
    f_smooth: float
    F: float
    energy: float
    step_norm: float
    support_changed: bool = False  # not serialized; support moved on this step


@dataclass(eq=False)
class SolveResult:
    x_final: np.ndarray
    iterations: int
    status: str
    trace: list
    support_change_count: int
    final_support: SupportSet
    max_beta: float
    step_grad_evals: int
    stop_grad_evals: int
    audit: object
    constants: TheoryConstants
    kernel_io: list | None = None


def choose_beta_step1(k, schedule, strategy, state, alpha=4.0):
    """Momentum weight for the first attempt of iteration k.

    Strategies: "generic" is 0.99 of the schedule-ratio cap; "seqconv" adds the
    damping that makes the whole iterate sequence converge (needs sigma in
    [1/2, 1]); "fista" runs the Nesterov-style t recurrence adapted to the
    shrinking schedule (t advances once per accepted iterate); "zero" disables
    momentum.
    """
    ratio = schedule.mu(k) / schedule.mu(k - 1)
    if strategy == "generic":
        return 0.99 * math.sqrt(ratio)
    if strategy == "seqconv":
        damp = 1.0 - 1.0 / (2.0 * k ** (1.0 - schedule.sigma))
        return (k - 1.0) / (k + alpha - 1.0) * math.sqrt(damp * ratio)
    if strategy == "fista":
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * state.t_prev**2 / ratio))
        beta = (state.t_prev - 1.0) / t_new
        state.t_prev = t_new
        return beta
    if strategy == "zero":
        return 0.0
    raise ContractViolation(f"unknown beta_strategy {strategy!r}")


def stopping_check(grad_at_x, supp, mu, epsilon):
    """Approximate-stationarity test: gradient small on the nonzero entries,
    and (when a smoothing parameter is passed) mu itself below epsilon."""
    if mu is not None and mu > epsilon:
        return False
    grad = np.asarray(grad_at_x, dtype=float)
    if isinstance(supp, SupportSet):
        mask = np.zeros(supp.dim, dtype=bool)
        if supp.zero_indices:
            mask[list(supp.zero_indices)] = True
    else:
        mask = np.asarray(supp, dtype=bool)
    nz = ~mask
    if nz.any() and float(np.max(np.abs(grad[nz]))) > epsilon:
        return False
    return True


def _resolve_x0(x0, box):
    if x0 is None:
        return np.zeros(box.dim)
    return box.project(as_vector(x0, box.dim, name="x0"))


def sfiht_solve(problem, config=None):
    """Run the smoothing solver on a problem whose loss exposes a smooth family.

    Returns a SolveResult whose trace rows carry, per accepted iterate, the
    exact and smoothed loss, the penalized objective, and the audited energy.
    """
    config = config or SfihtConfig()
    loss = problem.loss
    for attr in ("lip_over_mu", "kappa"):
        if not hasattr(loss, attr):
            raise ContractViolation("sfiht_solve needs a loss with a smooth family")
    config.validate(mu_bar=getattr(loss, "mu_bar", None))
    L_smooth = float(loss.lip_over_mu)
    L = 2.0 * L_smooth if config.L is None else float(config.L)
    if not L > L_smooth:
        raise ContractViolation(f"need L > {L_smooth} (loss smoothness constant)")
    box, lam = problem.box, problem.lam

    sched = SmoothingSchedule(config.mu0, config.sigma)
    state = ExtrapolationState()
    nu = compute_nu(box, lam, L, config.mu0)
    delta, delta_per = compute_delta(box, lam, L)
    constants = TheoryConstants(
        L=L,
        L_smooth=L_smooth,
        kappa=float(loss.kappa),
        gamma=compute_gamma(L, L_smooth),
        nu=nu,
        delta=delta,
        delta_per_coordinate=delta_per,
    )
    monitor = EnergyMonitorH(loss.kappa, lam, L, L_smooth, nu)

    x_cur = _resolve_x0(config.x0, box)
    x_prev = x_cur
    mask_prev = x_prev == 0.0
    mask_cur = mask_prev

    trace = []
    kernel_io = [] if config.record_kernel_io else None
    max_beta = 0.0
    support_changes = 0
    step_grad_evals = 0
    stop_grad_evals = 0
    status = ITERATION_CAP
    k = 1
    while True:
        mu_cur = sched.mu(k)
        mu_prev = sched.mu(k - 1)
        if k >= 2 and mu_cur <= config.epsilon:
            grad_stop = loss.gradient(x_cur, mu_cur)
            stop_grad_evals += 1
            if stopping_check(grad_stop, mask_cur, mu_cur, config.epsilon):
                status = CONVERGED
                break
        if k > config.max_iter:
            status = ITERATION_CAP
            break

        ratio = mu_cur / mu_prev
        beta = choose_beta_step1(k, sched, config.beta_strategy, state, config.alpha)
        assert beta * beta <= ratio * (1.0 + 1e-12)
        regime = REGIME_STEP1
        y = x_cur + beta * (x_cur - x_prev)
        grad = loss.gradient(y, mu_cur)
        step_grad_evals += 1
        res = hard_threshold_step(SubproblemInput(y, grad, mu_cur, L, lam, box))
        mask_new = res.x_next == 0.0

        zero_momentum = config.beta_strategy == "zero"
        prev_eq_cur = np.array_equal(mask_prev, mask_cur)
        if not (prev_eq_cur and np.array_equal(mask_cur, mask_new)):
            beta = 0.0 if zero_momentum else math.sqrt((L - L_smooth) / (4.0 * L) * ratio)
            regime = REGIME_STEP3B
            y = x_cur + beta * (x_cur - x_prev)
            grad = loss.gradient(y, mu_cur)
            step_grad_evals += 1
            res = hard_threshold_step(SubproblemInput(y, grad, mu_cur, L, lam, box))
            mask_new = res.x_next == 0.0
            if not np.array_equal(mask_cur, mask_new):
                beta = (
                    0.0
                    if zero_momentum
                    else math.sqrt((L - L_smooth) / (8.0 * L - 4.0 * L_smooth) * ratio)
                )
                regime = REGIME_STEP3B2
                y = x_cur + beta * (x_cur - x_prev)
                grad = loss.gradient(y, mu_cur)
                step_grad_evals += 1
                res = hard_threshold_step(SubproblemInput(y, grad, mu_cur, L, lam, box))
                mask_new = res.x_next == 0.0

        x_next = res.x_next
        if not np.isfinite(x_next).all():
            raise SolverAbort(f"non-finite iterate at k={k}", trace)
        changed = not np.array_equal(mask_cur, mask_new)

        f_smooth_cur = loss.evaluate(x_cur, mu_cur)
        f_exact_cur = loss.evaluate_exact(x_cur)
        card_cur = int(x_cur.size - mask_cur.sum())
        upd = monitor.update(x_prev, x_cur, x_next, mu_prev, mu_cur, beta, f_smooth_cur)
        trace.append(
            IterationRecord(
                k=k,
                regime=regime,
                beta=beta,
                mu=mu_cur,
                card=card_cur,
                f_exact=f_exact_cur,
                f_smooth=f_smooth_cur,
                F=f_exact_cur + lam * card_cur,
                energy=upd.energy,
                step_norm=float(np.linalg.norm(x_cur - x_prev)),
                support_changed=changed,
            )
        )
        if kernel_io is not None:
            kernel_io.append((y, grad, mu_cur))
        if changed:
            support_changes += 1
        max_beta = max(max_beta, beta)
        state.beta_k, state.regime = beta, regime

        x_prev, mask_prev = x_cur, mask_cur
        x_cur, mask_cur = x_next, mask_new
        k += 1

    return SolveResult(
        x_final=x_cur,
        iterations=len(trace),
        status=status,
        trace=trace,
        support_change_count=support_changes,
        final_support=SupportSet.of(x_cur),
        max_beta=max_beta,
        step_grad_evals=step_grad_evals,
        stop_grad_evals=stop_grad_evals,
        audit=monitor.report(),
        constants=constants,
        kernel_io=kernel_io,
    )


def fiht_solve(problem, config=None):
    """Run the smooth-loss solver (unit smoothing parameter in the kernel)."""
    config = config or FihtConfig()
    config.validate()
    loss = problem.loss
    if not hasattr(loss, "lip"):
        raise ContractViolation("fiht_solve needs a loss with a global gradient Lipschitz bound")
    L_grad = float(loss.lip)
    L = 2.0 * L_grad if config.L is None else float(config.L)
    if not L > L_grad:
        raise ContractViolation(f"need L > {L_grad} (gradient Lipschitz bound)")
    box, lam = problem.box, problem.lam

    delta, delta_per = compute_delta(box, lam, L)
    constants = TheoryConstants(
        L=L,
        L_smooth=L_grad,
        kappa=0.0,
        gamma=compute_gamma(L, L_grad),
        nu=None,
        delta=delta,
        delta_per_coordinate=delta_per,
    )
    monitor = EnergyMonitorW(lam, L, L_grad, delta)
    accelerated = config.beta_strategy == "alpha"

    x_cur = _resolve_x0(config.x0, box)
    x_prev = x_cur
    mask_prev = x_prev == 0.0
    mask_cur = mask_prev

    trace = []
    kernel_io = [] if config.record_kernel_io else None
    max_beta = 0.0
    support_changes = 0
    step_grad_evals = 0
    stop_grad_evals = 0
    status = ITERATION_CAP
    k = 1
    while True:
        if k >= 2:
            grad_stop = loss.gradient(x_cur)
            stop_grad_evals += 1
            if stopping_check(grad_stop, mask_cur, None, config.epsilon):
                status = CONVERGED
                break
        if k > config.max_iter:
            status = ITERATION_CAP
            break

        beta = (k - 1.0) / (k + config.alpha - 1.0) if accelerated else 0.0
        regime = REGIME_STEP1
        y = x_cur + beta * (x_cur - x_prev)
        grad = loss.gradient(y)
        step_grad_evals += 1
        res = hard_threshold_step(SubproblemInput(y, grad, 1.0, L, lam, box))
        mask_new = res.x_next == 0.0

        prev_eq_cur = np.array_equal(mask_prev, mask_cur)
        if not (prev_eq_cur and np.array_equal(mask_cur, mask_new)):
            beta = math.sqrt(k / (k + 1.0) * (L - L_grad) / (4.0 * L)) if accelerated else 0.0
            regime = REGIME_STEP3B
            y = x_cur + beta * (x_cur - x_prev)
            grad = loss.gradient(y)
            step_grad_evals += 1
            res = hard_threshold_step(SubproblemInput(y, grad, 1.0, L, lam, box))
            mask_new = res.x_next == 0.0
            if not np.array_equal(mask_cur, mask_new):
                beta = (
                    math.sqrt(k / (k + 1.0) * (L - L_grad) / (8.0 * L - 4.0 * L_grad))
                    if accelerated
                    else 0.0
                )
                regime = REGIME_STEP3B2
                y = x_cur + beta * (x_cur - x_prev)
                grad = loss.gradient(y)
                step_grad_evals += 1
                res = hard_threshold_step(SubproblemInput(y, grad, 1.0, L, lam, box))
                mask_new = res.x_next == 0.0

        x_next = res.x_next
        if not np.isfinite(x_next).all():
            raise SolverAbort(f"non-finite iterate at k={k}", trace)
        changed = not np.array_equal(mask_cur, mask_new)

        f_cur = loss.evaluate(x_cur)
        card_cur = int(x_cur.size - mask_cur.sum())
        upd = monitor.update(x_prev, x_cur, x_next, beta, f_cur)
        trace.append(
            IterationRecord(
                k=k,
                regime=regime,
                beta=beta,
                mu=None,
                card=card_cur,
                f_exact=f_cur,
                f_smooth=f_cur,
                F=f_cur + lam * card_cur,
                energy=upd.energy,
                step_norm=float(np.linalg.norm(x_cur - x_prev)),
                support_changed=changed,
            )
        )
        if kernel_io is not None:
            kernel_io.append((y, grad, 1.0))
        if changed:
            support_changes += 1
        max_beta = max(max_beta, beta)

        x_prev, mask_prev = x_cur, mask_cur
        x_cur, mask_cur = x_next, mask_new
        k += 1

    return SolveResult(
        x_final=x_cur,
        iterations=len(trace),
        status=status,
        trace=trace,
        support_change_count=support_changes,
        final_support=SupportSet.of(x_cur),
        max_beta=max_beta,
        step_grad_evals=step_grad_evals,
        stop_grad_evals=stop_grad_evals,
        audit=monitor.report(),
        constants=constants,
        kernel_io=kernel_io,
    )
