"""Energy monitors and the positive constants behind the step-size and support bounds.

The solvers maintain a Lyapunov-style energy (smoothed objective plus a scaled
squared step) that must never increase. The monitors recompute that energy from
raw iterates, check the per-branch decrement bounds, the momentum-weight
inequalities, and the minimum step length at support changes, and collect any
violations instead of throwing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Violation",
    "AuditReport",
    "StepAudit",
    "IterateBundle",
    "EnergyMonitorH",
    "EnergyMonitorW",
    "TheoryConstants",
    "compute_tau",
    "compute_zeta",
    "compute_nu",
    "compute_delta",
    "compute_gamma",
    "audit_descent",
]

REL_SLACK = 1e-10
STEP_SLACK = 1e-12


def compute_tau(three_equal, L, L_smooth, mu_prev, mu_cur, beta):
    """Energy weight for the smoothing solver, by realized support branch."""
    if three_equal:
        return L / (4.0 * mu_prev) + L * beta * beta / (4.0 * mu_cur)
    return (L - L_smooth) / (8.0 * mu_prev)


def compute_zeta(three_equal, L, L_grad, beta):
    """Energy weight for the smooth-loss solver, by realized support branch."""
    if three_equal:
        return (L / 4.0) * (1.0 + beta * beta)
    return (L - L_grad) / 8.0


def compute_nu(box, lam, L, mu0):
    """Scale of the squared step at a support change: min over finite nonzero
    bound magnitudes squared over mu0, and 2 * lam / L."""
    cands = [2.0 * lam / L]
    lo = box.lower[box.lower != 0.0]
    up = box.upper[box.upper != 0.0]
    if lo.size:
        cands.append(float(np.min(lo * lo)) / mu0)
    if up.size:
        cands.append(float(np.min(up * up)) / mu0)
    return float(min(cands))


def compute_delta(box, lam, L):
    """Minimum magnitude of any nonzero entry a thresholding step can emit
    (mu = 1 kernel). Returns (delta, per-coordinate array)."""
    r = np.sqrt(2.0 * lam / L)
    lo, up = box.lower, box.upper
    per = np.minimum(np.minimum(np.abs(lo), up), r)
    per = np.where(lo == 0.0, np.minimum(up, r), per)
    per = np.where(up == 0.0, np.minimum(-lo, r), per)
    return float(per.min()), per


def compute_gamma(L, L_smooth):
    """Coefficient of the summable squared-step series."""
    return min(L / 4.0, (L - L_smooth) / 8.0)


@dataclass(frozen=True)
class TheoryConstants:
    """Constants the run-level bounds are checked against."""

    L: float
    L_smooth: float
    kappa: float
    gamma: float
    nu: float | None = None
    delta: float | None = None
    delta_per_coordinate: np.ndarray | None = None


@dataclass(frozen=True)
class Violation:
    k: int
    kind: str
    amount: float


@dataclass
class AuditReport:
    """Outcome of an energy audit; reports, never throws."""

    checks: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def summary(self):
        if self.ok:
            return f"clean: {self.checks} checks, 0 violations"
        kinds = {}
        for v in self.violations:
            kinds[v.kind] = kinds.get(v.kind, 0) + 1
        detail = ", ".join(f"{k}={c}" for k, c in sorted(kinds.items()))
        return f"{len(self.violations)} violations in {self.checks} checks ({detail})"


@dataclass(frozen=True)
class StepAudit:
    """Per-update view: the energy weight, the energy, and the signed decrement."""

    k: int
    weight: float
    energy: float
    decrement: float | None
    new_violations: tuple


@dataclass(frozen=True, eq=False)
class IterateBundle:
    """Raw inputs for one monitor update (mu fields unused by the smooth monitor)."""

    x_prev: np.ndarray
    x_cur: np.ndarray
    x_next: np.ndarray
    beta: float
    loss_value_cur: float
    mu_prev: float | None = None
    mu_cur: float | None = None


class _MonitorBase:
    def __init__(self):
        self.report_state = AuditReport()
        self._k = 0
        self._energy_prev = None

    def _flag(self, kind, amount):
        self.report_state.violations.append(Violation(self._k, kind, float(amount)))

    def _checked(self, count=1):
        self.report_state.checks += count

    def report(self):
        return self.report_state


class EnergyMonitorH(_MonitorBase):
    """Energy audit for the smoothing solver.

    update() is called once per accepted iterate with the previous, current and
    freshly accepted points; it returns the energy of the *current* point,
    which is only determined once the next support is known.
    """

    def __init__(self, kappa, lam, L, L_smooth, nu):
        super().__init__()
        self.kappa = kappa
        self.lam = lam
        self.L = L
        self.L_smooth = L_smooth
        self.nu = nu

    def update(self, x_prev, x_cur, x_next, mu_prev, mu_cur, beta, loss_value_cur):
        self._k += 1
        k = self._k
        zp = x_prev == 0.0
        zc = x_cur == 0.0
        zn = x_next == 0.0
        prev_eq_cur = bool(np.array_equal(zp, zc))
        cur_eq_next = bool(np.array_equal(zc, zn))
        three_equal = prev_eq_cur and cur_eq_next

        step_prev = float(np.linalg.norm(x_cur - x_prev))
        tau = compute_tau(three_equal, self.L, self.L_smooth, mu_prev, mu_cur, beta)
        card = int(x_cur.size - zc.sum())
        energy = loss_value_cur + self.lam * card + self.kappa * mu_cur + tau * step_prev**2

        # momentum weight vs energy weight
        if cur_eq_next:
            lhs = self.L / (2.0 * mu_cur) * beta * beta
        else:
            lhs = (2.0 * self.L - self.L_smooth) / (2.0 * mu_cur) * beta * beta
        self._checked()
        if lhs > tau * (1.0 + STEP_SLACK) + np.finfo(float).tiny:
            self._flag("beta_weight", lhs - tau)

        # minimum squared step whenever the support changes
        if not cur_eq_next:
            self._checked()
            step_next_sq = float(np.sum((x_next - x_cur) ** 2))
            if step_next_sq < self.nu * mu_cur - STEP_SLACK:
                self._flag("step_lower_bound", self.nu * mu_cur - step_next_sq)

        decrement = None
        if self._energy_prev is not None:
            decrement = energy - self._energy_prev
            slack = REL_SLACK * (1.0 + abs(self._energy_prev))
            self._checked()
            if decrement > slack:
                self._flag("energy_increase", decrement)
            if step_prev > 0.0 or decrement > slack:
                if not prev_eq_cur:
                    bound = -(self.L - self.L_smooth) / (8.0 * mu_prev) * step_prev**2
                elif three_equal:
                    bound = (
                        -(self.L / 4.0)
                        * (1.0 - beta * beta * mu_prev / mu_cur)
                        / mu_prev
                        * step_prev**2
                    )
                else:
                    bound = -(3.0 * self.L + self.L_smooth) / (8.0 * mu_prev) * step_prev**2
                self._checked()
                if decrement > bound + slack:
                    self._flag("energy_decrement", decrement - bound)

        self._energy_prev = energy
        return StepAudit(k, tau, energy, decrement, ())


class EnergyMonitorW(_MonitorBase):
    """Energy audit for the smooth-loss solver (no smoothing parameter)."""

    def __init__(self, lam, L, L_grad, delta):
        super().__init__()
        self.lam = lam
        self.L = L
        self.L_grad = L_grad
        self.delta = delta

    def update(self, x_prev, x_cur, x_next, beta, loss_value_cur):
        self._k += 1
        k = self._k
        zp = x_prev == 0.0
        zc = x_cur == 0.0
        zn = x_next == 0.0
        prev_eq_cur = bool(np.array_equal(zp, zc))
        cur_eq_next = bool(np.array_equal(zc, zn))
        three_equal = prev_eq_cur and cur_eq_next

        step_prev = float(np.linalg.norm(x_cur - x_prev))
        zeta = compute_zeta(three_equal, self.L, self.L_grad, beta)
        card = int(x_cur.size - zc.sum())
        energy = loss_value_cur + self.lam * card + zeta * step_prev**2

        if cur_eq_next:
            lhs = self.L / 2.0 * beta * beta
        else:
            lhs = (2.0 * self.L - self.L_grad) / 2.0 * beta * beta
        self._checked()
        if lhs > zeta * (1.0 + STEP_SLACK) + np.finfo(float).tiny:
            self._flag("beta_weight", lhs - zeta)

        if not cur_eq_next:
            self._checked()
            step_next = float(np.linalg.norm(x_next - x_cur))
            if step_next < self.delta - STEP_SLACK:
                self._flag("step_lower_bound", self.delta - step_next)

        # every nonzero the kernel emits clears the per-coordinate floor
        nz = x_next != 0.0
        if nz.any():
            self._checked()
            smallest = float(np.min(np.abs(x_next[nz])))
            if smallest < self.delta - STEP_SLACK:
                self._flag("nonzero_magnitude", self.delta - smallest)

        decrement = None
        if self._energy_prev is not None:
            decrement = energy - self._energy_prev
            slack = REL_SLACK * (1.0 + abs(self._energy_prev))
            self._checked()
            if decrement > slack:
                self._flag("energy_increase", decrement)
            if step_prev > 0.0 or decrement > slack:
                if not prev_eq_cur:
                    bound = -(self.L - self.L_grad) / 8.0 * step_prev**2
                elif three_equal:
                    bound = -(self.L / 4.0) * (1.0 - beta * beta) * step_prev**2
                else:
                    bound = -(3.0 * self.L + self.L_grad) / 8.0 * step_prev**2
                self._checked()
                if decrement > bound + slack:
                    self._flag("energy_decrement", decrement - bound)

        self._energy_prev = energy
        return StepAudit(k, zeta, energy, decrement, ())


def audit_descent(monitor, bundle):
    """Feed one iterate bundle to a monitor and return the per-step audit."""
    before = len(monitor.report_state.violations)
    if isinstance(monitor, EnergyMonitorH):
        step = monitor.update(
            bundle.x_prev,
            bundle.x_cur,
            bundle.x_next,
            bundle.mu_prev,
            bundle.mu_cur,
            bundle.beta,
            bundle.loss_value_cur,
        )
    else:
        step = monitor.update(
            bundle.x_prev, bundle.x_cur, bundle.x_next, bundle.beta, bundle.loss_value_cur
        )
    new = tuple(monitor.report_state.violations[before:])
    return StepAudit(step.k, step.weight, step.energy, step.decrement, new)
