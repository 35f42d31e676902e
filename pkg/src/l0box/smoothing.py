"""Loss models: exact values, smoothed families, gradients, and Lipschitz constants.

Nonsmooth losses expose a one-parameter smooth family f(x, mu) that approaches
the exact loss as mu shrinks, with |f(x, mu) - f(x)| <= kappa * mu and a
gradient whose Lipschitz constant scales like lip_over_mu / mu.
"""
from __future__ import annotations

import numpy as np

from .core import ContractViolation, as_vector

__all__ = [
    "LIP_SAFETY",
    "SpectralNormError",
    "huber_scalar",
    "smooth_plus_scalar",
    "spectral_norm",
    "L1RegressionLoss",
    "CensoredRegressionLoss",
    "LeastSquaresLoss",
    "l1_regression_loss",
    "censored_regression_loss",
    "least_squares_loss",
]

# Safety inflation applied to power-iteration estimates before use as Lipschitz constants.
LIP_SAFETY = 1.001


class SpectralNormError(RuntimeError):
    """Power iteration failed to converge; carries the last estimate."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


def _check_mu(mu):
    if not np.isfinite(mu) or mu <= 0:
        raise ContractViolation(f"mu must be positive and finite, got {mu}")


def huber_scalar(z, mu):
    """Smoothed absolute value: quadratic inside |z| <= mu, |z| outside.

    Returns (value, derivative); accepts scalars or arrays.
    """
    _check_mu(mu)
    z_arr = np.asarray(z, dtype=float)
    inside = np.abs(z_arr) <= mu
    value = np.where(inside, z_arr * z_arr / (2.0 * mu) + mu / 2.0, np.abs(z_arr))
    deriv = np.where(inside, z_arr / mu, np.sign(z_arr))
    if np.ndim(z) == 0:
        return float(value), float(deriv)
    return value, deriv


def smooth_plus_scalar(s, mu):
    """Smoothed positive part: quadratic inside |s| <= mu, max(s, 0) outside.

    Returns (value, derivative); accepts scalars or arrays.
    """
    _check_mu(mu)
    s_arr = np.asarray(s, dtype=float)
    inside = np.abs(s_arr) <= mu
    value = np.where(inside, (s_arr + mu) ** 2 / (4.0 * mu), np.maximum(s_arr, 0.0))
    deriv = np.where(inside, (s_arr + mu) / (2.0 * mu), (s_arr > mu).astype(float))
    if np.ndim(s) == 0:
        return float(value), float(deriv)
    return value, deriv


def spectral_norm(A, tol=1e-8, max_iters=20000):
    """Largest singular value of A via power iteration on A^T A.

    Deterministic start vector; stops when the Rayleigh estimate is stable to
    relative tolerance `tol`. A zero matrix returns 0.0. Raises
    SpectralNormError (carrying the last estimate) if the cap is hit. The cap
    is generous because clustered top singular values (common for near-square
    Gaussian blocks) slow the value convergence to a creep; iterations are two
    matvecs each, so the worst case is still cheap at benchmark sizes.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ContractViolation("A must be 2-D")
    if np.isnan(A).any():
        raise ContractViolation("A contains NaN")
    if not A.any():
        return 0.0
    n = A.shape[1]
    v = 1.0 + np.arange(n) / max(n, 1)
    v /= np.linalg.norm(v)
    lam_prev = np.inf
    for _ in range(max_iters):
        w = A @ v
        lam = float(w @ w)  # Rayleigh quotient of A^T A at unit v
        u = A.T @ w
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            # v landed in the kernel; restart from a shifted direction
            v = np.cos(1.0 + np.arange(n))
            v /= np.linalg.norm(v)
            continue
        v = u / nrm
        if abs(lam - lam_prev) <= tol * max(lam, np.finfo(float).tiny):
            return float(np.sqrt(lam))
        lam_prev = lam
    raise SpectralNormError(
        f"power iteration did not reach rtol={tol} in {max_iters} iterations",
        float(np.sqrt(lam)),
    )


def _check_data(A, b):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2:
        raise ContractViolation("A must be 2-D")
    if b.shape != (A.shape[0],):
        raise ContractViolation(f"b has shape {b.shape}, expected ({A.shape[0]},)")
    if np.isnan(A).any() or np.isnan(b).any():
        raise ContractViolation("data contains NaN")
    return A, b


class L1RegressionLoss:
    """Sum of absolute residuals |Ax - b|, smoothed componentwise by huber_scalar.

    kappa = m / 2; gradient Lipschitz constant = lip_over_mu / mu.
    """

    mu_bar = 0.7

    def __init__(self, A, b):
        self.A, self.b = _check_data(A, b)
        self.m, self.dim = self.A.shape
        self.kappa = self.m / 2.0
        self.lip_over_mu = LIP_SAFETY * spectral_norm(self.A) ** 2

    def evaluate(self, x, mu):
        r = self.A @ as_vector(x, self.dim) - self.b
        value, _ = huber_scalar(r, mu)
        return float(value.sum())

    def gradient(self, x, mu):
        r = self.A @ as_vector(x, self.dim) - self.b
        _, d = huber_scalar(r, mu)
        return self.A.T @ d

    def evaluate_exact(self, x):
        r = self.A @ as_vector(x, self.dim) - self.b
        return float(np.abs(r).sum())


class CensoredRegressionLoss:
    """Mean absolute deviation of the censored model max(Ax, 0) from b.

    The smooth family nests the smoothed positive part inside the smoothed
    absolute value: (1/m) sum huber(plus(A_i x, mu) - b_i, mu). kappa = 3/4:
    the outer huber gap is at most mu/2 and the inner plus gap at most mu/4,
    and the outer function is 1-Lipschitz in its first argument.
    """

    mu_bar = 0.7
    kappa = 0.75

    def __init__(self, A, b):
        self.A, self.b = _check_data(A, b)
        self.m, self.dim = self.A.shape
        self.lip_over_mu = LIP_SAFETY * 1.5 * spectral_norm(self.A) ** 2 / self.m

    def evaluate(self, x, mu):
        u = self.A @ as_vector(x, self.dim)
        pv, _ = smooth_plus_scalar(u, mu)
        hv, _ = huber_scalar(pv - self.b, mu)
        return float(hv.sum() / self.m)

    def gradient(self, x, mu):
        u = self.A @ as_vector(x, self.dim)
        pv, pd = smooth_plus_scalar(u, mu)
        _, hd = huber_scalar(pv - self.b, mu)
        return self.A.T @ (hd * pd) / self.m

    def evaluate_exact(self, x):
        u = self.A @ as_vector(x, self.dim)
        return float(np.abs(np.maximum(u, 0.0) - self.b).sum() / self.m)


class LeastSquaresLoss:
    """Half squared residual norm 0.5 * ||Ax - b||^2 (already smooth)."""

    def __init__(self, A, b):
        self.A, self.b = _check_data(A, b)
        self.m, self.dim = self.A.shape
        self.lip = LIP_SAFETY * spectral_norm(self.A) ** 2

    def evaluate(self, x):
        r = self.A @ as_vector(x, self.dim) - self.b
        return float(0.5 * (r @ r))

    def gradient(self, x):
        r = self.A @ as_vector(x, self.dim) - self.b
        return self.A.T @ r

    def evaluate_exact(self, x):
        return self.evaluate(x)


def l1_regression_loss(A, b):
    return L1RegressionLoss(A, b)


def censored_regression_loss(A, b):
    return CensoredRegressionLoss(A, b)


def least_squares_loss(A, b):
    return LeastSquaresLoss(A, b)
