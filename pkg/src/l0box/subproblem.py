"""Closed-form minimizer of the per-iteration surrogate (quadratic + cardinality penalty).

The surrogate separates per coordinate: each entry either takes the box
projection of the gradient step or snaps to exactly zero, decided by comparing
the squared step against 2 * lam * mu / L. Exact threshold ties resolve to zero
and are recorded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BoxSet, ContractViolation, as_vector

__all__ = ["SubproblemInput", "HardThresholdResult", "hard_threshold_step", "surrogate_value"]


@dataclass(frozen=True, eq=False)
class SubproblemInput:
    """One thresholding step: base point y, gradient at y, and scalars mu, L, lam."""

    y: np.ndarray
    grad: np.ndarray
    mu: float
    L: float
    lam: float
    box: BoxSet

    def __post_init__(self):
        y = as_vector(self.y, self.box.dim, name="y")
        grad = as_vector(self.grad, self.box.dim, name="grad")
        if not np.isfinite(grad).all():
            raise ContractViolation("grad must be finite")
        if not np.isfinite(self.mu) or self.mu <= 0:
            raise ContractViolation("mu must be positive")
        if not np.isfinite(self.L) or self.L <= 0:
            raise ContractViolation("L must be positive")
        if self.lam < 0:
            raise ContractViolation("lam must be nonnegative")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "grad", grad)


@dataclass(frozen=True, eq=False)
class HardThresholdResult:
    """Minimizer plus the intermediate quantities the step bounds are stated in."""

    x_next: np.ndarray
    s_point: np.ndarray  # gradient step y - (mu/L) grad
    q_vec: np.ndarray  # projection displacement P(s) - s
    tie_indices: tuple


def hard_threshold_step(inp):
    """Global minimizer of the separable surrogate over the box.

    Coordinate i keeps the projected gradient step when s_i^2 - q_i^2 exceeds
    2 * lam * mu / L, and is exactly zero otherwise (ties go to zero).
    """
    s = inp.y - (inp.mu / inp.L) * inp.grad
    p = inp.box.project(s)
    q = p - s
    t = s * s - q * q
    threshold = 2.0 * inp.lam * inp.mu / inp.L
    keep = t > threshold
    x = np.where(keep, p, 0.0)
    ties = np.flatnonzero(t == threshold)
    return HardThresholdResult(x, s, q, tuple(int(i) for i in ties))


def surrogate_value(inp, x, f_at_y):
    """Value of the surrogate at x: linearization + proximity term + lam * nnz(x)."""
    x = as_vector(x, inp.box.dim)
    d = x - inp.y
    quad = f_at_y + float(inp.grad @ d) + inp.L / (2.0 * inp.mu) * float(d @ d)
    return quad + inp.lam * int(np.count_nonzero(x))
