"""Shared domain types: box constraints, support sets, and the penalized objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ContractViolation",
    "BoxSet",
    "SupportSet",
    "Problem",
    "as_vector",
    "project_box",
    "support",
    "support_mask",
    "objective",
]


class ContractViolation(ValueError):
    """A caller broke a documented precondition (shape, sign, or NaN rules)."""


def as_vector(x, dim=None, name="x"):
    """Coerce to a 1-D float array, rejecting NaN entries outright."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ContractViolation(f"{name} has length {arr.shape[0]}, expected {dim}")
    if np.isnan(arr).any():
        raise ContractViolation(f"{name} contains NaN")
    return arr


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Componentwise box [lower, upper] with lower <= 0 <= upper and lower < upper.

    Bounds may be -inf/+inf; clamping follows plain min/max semantics.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or up.ndim != 1 or lo.shape != up.shape:
            raise ContractViolation("bounds must be 1-D arrays of equal length")
        if np.isnan(lo).any() or np.isnan(up).any():
            raise ContractViolation("bounds contain NaN")
        if (lo > 0).any() or (up < 0).any():
            raise ContractViolation("need lower <= 0 <= upper componentwise")
        if not (lo < up).all():
            raise ContractViolation("need lower < upper componentwise")
        lo = lo.copy()
        up = up.copy()
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def cube(cls, dim, lo, hi):
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @classmethod
    def unbounded(cls, dim):
        return cls.cube(dim, -np.inf, np.inf)

    @property
    def dim(self):
        return self.lower.shape[0]

    def project(self, x):
        return project_box(x, self)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool((x >= self.lower - tol).all() and (x <= self.upper + tol).all())


def project_box(x, box):
    """Clamp x into the box; x must be finite (no NaN, no inf)."""
    x = as_vector(x, box.dim)
    if not np.isfinite(x).all():
        raise ContractViolation("x must be finite")
    return np.minimum(np.maximum(x, box.lower), box.upper)


def support_mask(x):
    """Boolean mask, True where the entry is exactly zero."""
    return np.asarray(x) == 0.0


@dataclass(frozen=True)
class SupportSet:
    """Indices that are exactly zero; the complement carries the nonzeros."""

    zero_indices: tuple
    dim: int

    @classmethod
    def of(cls, x):
        x = np.asarray(x, dtype=float)
        zeros = np.flatnonzero(x == 0.0)
        return cls(tuple(int(i) for i in zeros), int(x.shape[0]))

    @property
    def nonzero_indices(self):
        z = set(self.zero_indices)
        return tuple(i for i in range(self.dim) if i not in z)

    @property
    def card(self):
        return self.dim - len(self.zero_indices)


def support(x):
    """Support descriptor of x: which entries are exactly zero."""
    return SupportSet.of(x)


@dataclass(frozen=True, eq=False)
class Problem:
    """Minimize loss(x) + lam * nnz(x) over the box."""

    loss: object
    box: BoxSet
    lam: float

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ContractViolation("lam must be finite and nonnegative")
        ldim = getattr(self.loss, "dim", None)
        if ldim is not None and ldim != self.box.dim:
            raise ContractViolation(
                f"loss dimension {ldim} does not match box dimension {self.box.dim}"
            )

    @property
    def dim(self):
        return self.box.dim


def objective(problem, x):
    """Exact loss, penalized objective, and cardinality at x (assumed inside the box)."""
    x = as_vector(x, problem.dim)
    f = float(problem.loss.evaluate_exact(x))
    card = int(np.count_nonzero(x))
    return f, f + problem.lam * card, card
