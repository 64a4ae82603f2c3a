r"""Exponential families and the closed-form maximisation update.

A family is described by its sufficient statistic ``S``, log-partition ``A``,
the moment map ``grad A`` and its inverse, and a map ``upsilon`` from user
parameters to canonical parameters.  Densities read

.. math:: k(\zeta, y) = h(y) \exp(\langle \zeta, S(y) \rangle - A(\zeta)).

Canonical parameters and statistics are flat 1-D arrays, so inner products
are plain dot products.

The maximisation update replaces the current moment vector by a convex
combination with the responsibility-weighted moments,

.. math:: \nabla A(\zeta^*) = \gamma \hat s + (1 - \gamma) \nabla A(\zeta),

which for Gaussians is available in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ImageError

__all__ = [
    "ImageError",
    "ExpFamilySpec",
    "GaussianParams",
    "MomentEstimate",
    "safe_cholesky",
    "gaussian_full_spec",
    "gaussian_diag_spec",
    "gaussian_fixed_cov_spec",
    "solve_argmax_update",
    "gaussian_update",
    "grad_g_canonical",
    "g_objective",
    "gradient_step_canonical",
    "gradient_step_noncanonical",
]

LOG_2PI = np.log(2.0 * np.pi)
JITTER_SCALE = 1e-9


def safe_cholesky(cov, jitter=True):
    """Symmetrise ``cov`` and return ``(cov, L)`` with ``L`` its Cholesky factor.

    When the factorisation fails, a single jitter of ``1e-9 * tr(cov) / d``
    is added to the diagonal.  A second failure raises :class:`ImageError`.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.all(np.isfinite(cov)):
        raise ImageError("covariance has non-finite entries")
    cov = 0.5 * (cov + cov.T)
    try:
        return cov, np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        if not jitter:
            raise ImageError("covariance is not positive definite") from None
    d = cov.shape[0]
    bump = JITTER_SCALE * abs(np.trace(cov)) / d
    cov = cov + bump * np.eye(d)
    try:
        return cov, np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ImageError("covariance is not positive definite after jitter") from None


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean and covariance of a Gaussian component.

    The covariance is symmetrised on construction and its Cholesky factor
    cached; construction fails with :class:`ImageError` if it is not
    positive definite.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("mean and covariance dimensions disagree")
        cov, chol = safe_cholesky(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dimension(self) -> int:
        return self.mean.size

    def logpdf(self, points):
        from .kernels import mahalanobis_sq

        y = np.atleast_2d(np.asarray(points, dtype=float))
        maha = mahalanobis_sq(y, self.mean[None, :], self.chol[None, :, :])[:, 0]
        logdet = 2.0 * np.sum(np.log(np.diag(self.chol)))
        return -0.5 * (maha + logdet + self.dimension * LOG_2PI)


@dataclass(frozen=True)
class MomentEstimate:
    """Responsibility-weighted moments of one component.

    Attributes
    ----------
    mass : float
        Estimate of the integral of the responsibility.
    mean : ndarray
        Normalised first moment ``m_hat``.
    cov : ndarray
        Normalised centred second moment ``Sigma_hat``.
    """

    mass: float
    mean: np.ndarray
    cov: np.ndarray

    def gaussian_stat(self):
        """Mean statistic ``(m_hat, -(Sigma_hat + m_hat m_hat^T) / 2)`` of the full Gaussian family."""
        m = np.asarray(self.mean, dtype=float)
        second = np.asarray(self.cov, dtype=float) + np.outer(m, m)
        return np.concatenate([m, -0.5 * second.ravel()])


@dataclass(frozen=True)
class ExpFamilySpec:
    """Description of an exponential family with flat canonical parameters."""

    name: str
    dimension: int
    dim_param: int
    sufficient_stat: Callable[[np.ndarray], np.ndarray]
    base_log_h: Callable[[np.ndarray], np.ndarray]
    log_partition: Callable[[np.ndarray], float]
    grad_A: Callable[[np.ndarray], np.ndarray]
    grad_A_inverse: Callable[[np.ndarray], np.ndarray]
    upsilon: Callable[..., np.ndarray]
    upsilon_inverse: Callable[[np.ndarray], tuple]

    def log_kernel(self, zeta, points):
        """``log k(zeta, y)`` at each row of ``points``."""
        y = np.atleast_2d(np.asarray(points, dtype=float))
        return self.base_log_h(y) + self.sufficient_stat(y) @ zeta - self.log_partition(zeta)


def _split_full(zeta, d):
    zeta = np.asarray(zeta, dtype=float)
    return zeta[:d], zeta[d:].reshape(d, d)


def gaussian_full_spec(d):
    """Full-covariance Gaussian: ``S(y) = (y, -y y^T / 2)``, ``zeta = (Sigma^-1 m, Sigma^-1)``."""
    d = int(d)

    def stat(y):
        y = np.atleast_2d(y)
        outer = -0.5 * np.einsum("ka,kb->kab", y, y).reshape(len(y), d * d)
        return np.concatenate([y, outer], axis=1)

    def base(y):
        return np.full(np.atleast_2d(y).shape[0], -0.5 * d * LOG_2PI)

    def log_partition(zeta):
        x, P = _split_full(zeta, d)
        sign, logdet = np.linalg.slogdet(P)
        if sign <= 0:
            raise ImageError("precision matrix is not positive definite")
        return 0.5 * (x @ np.linalg.solve(P, x) - logdet)

    def grad_A(zeta):
        # general (not necessarily symmetric) formulas so that finite
        # differences over all d*d entries agree with the gradient
        x, P = _split_full(zeta, d)
        Pinv = np.linalg.inv(P)
        gx = 0.5 * (Pinv + Pinv.T) @ x
        gP = -0.5 * (np.outer(Pinv.T @ x, Pinv @ x) + Pinv.T)
        return np.concatenate([gx, gP.ravel()])

    def grad_A_inverse(s):
        m, S2 = _split_full(s, d)
        cov = -2.0 * S2 - np.outer(m, m)
        cov, L = safe_cholesky(cov, jitter=False)
        return upsilon(m, cov)

    def upsilon(mean, cov):
        P = np.linalg.inv(np.asarray(cov, dtype=float))
        P = 0.5 * (P + P.T)
        return np.concatenate([P @ np.asarray(mean, dtype=float), P.ravel()])

    def upsilon_inverse(zeta):
        x, P = _split_full(zeta, d)
        cov = np.linalg.inv(0.5 * (P + P.T))
        cov = 0.5 * (cov + cov.T)
        return cov @ x, cov

    return ExpFamilySpec("gaussian-full", d, d + d * d, stat, base, log_partition,
                         grad_A, grad_A_inverse, upsilon, upsilon_inverse)


def gaussian_diag_spec(d):
    """Diagonal Gaussian: per coordinate ``S = (y, -y^2/2)``, ``zeta = (m / s2, 1 / s2)``."""
    d = int(d)

    def stat(y):
        y = np.atleast_2d(y)
        return np.concatenate([y, -0.5 * y * y], axis=1)

    def base(y):
        return np.full(np.atleast_2d(y).shape[0], -0.5 * d * LOG_2PI)

    def log_partition(zeta):
        x, p = zeta[:d], zeta[d:]
        if np.any(p <= 0):
            raise ImageError("precision must be positive")
        return float(np.sum(0.5 * x * x / p - 0.5 * np.log(p)))

    def grad_A(zeta):
        x, p = zeta[:d], zeta[d:]
        return np.concatenate([x / p, -0.5 * (x * x / (p * p) + 1.0 / p)])

    def grad_A_inverse(s):
        m, s2 = s[:d], s[d:]
        var = -2.0 * s2 - m * m
        if np.any(var <= 0) or not np.all(np.isfinite(var)):
            raise ImageError("implied variance is not positive")
        return upsilon(m, var)

    def upsilon(mean, var):
        var = np.asarray(var, dtype=float)
        return np.concatenate([np.asarray(mean, dtype=float) / var, 1.0 / var])

    def upsilon_inverse(zeta):
        x, p = zeta[:d], zeta[d:]
        return x / p, 1.0 / p

    return ExpFamilySpec("gaussian-diag", d, 2 * d, stat, base, log_partition,
                         grad_A, grad_A_inverse, upsilon, upsilon_inverse)


def gaussian_fixed_cov_spec(cov):
    """Gaussian with known covariance: ``S(y) = y``, ``A(zeta) = zeta^T Sigma zeta / 2``."""
    cov, L = safe_cholesky(cov, jitter=False)
    d = cov.shape[0]
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    P = np.linalg.inv(cov)

    def stat(y):
        return np.atleast_2d(y)

    def base(y):
        y = np.atleast_2d(y)
        return -0.5 * (np.einsum("ka,ab,kb->k", y, P, y) + logdet + d * LOG_2PI)

    def log_partition(zeta):
        return 0.5 * float(zeta @ cov @ zeta)

    def grad_A(zeta):
        return cov @ zeta

    def grad_A_inverse(s):
        return P @ np.asarray(s, dtype=float)

    def upsilon(mean):
        return P @ np.asarray(mean, dtype=float)

    def upsilon_inverse(zeta):
        return (cov @ zeta,)

    return ExpFamilySpec("gaussian-fixed", d, d, stat, base, log_partition,
                         grad_A, grad_A_inverse, upsilon, upsilon_inverse)


def solve_argmax_update(spec, current, stat_hat, gamma):
    """Canonical parameter ``zeta*`` with ``grad A(zeta*) = gamma s_hat + (1 - gamma) grad A(zeta)``.

    Raises
    ------
    ImageError
        When the combined moment vector lies outside the image of ``grad A``;
        the caller should retry with a smaller ``gamma``.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    stat_hat = np.asarray(stat_hat, dtype=float)
    if not np.all(np.isfinite(stat_hat)):
        raise ValueError("stat_hat must be finite")
    target = gamma * stat_hat + (1.0 - gamma) * spec.grad_A(np.asarray(current, dtype=float))
    return spec.grad_A_inverse(target)


def gaussian_update(params, moments, gamma):
    """Closed-form maximisation update of a full-covariance Gaussian.

    ``m' = gamma m_hat + (1 - gamma) m`` and
    ``Sigma' = gamma Sigma_hat + (1 - gamma) Sigma + gamma (1 - gamma) (m_hat - m)(m_hat - m)^T``.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    m_hat = np.atleast_1d(np.asarray(moments.mean, dtype=float))
    s_hat = np.atleast_2d(np.asarray(moments.cov, dtype=float))
    delta = m_hat - params.mean
    mean = gamma * m_hat + (1.0 - gamma) * params.mean
    cov = gamma * s_hat + (1.0 - gamma) * params.cov + gamma * (1.0 - gamma) * np.outer(delta, delta)
    return GaussianParams(mean, cov)


def grad_g_canonical(spec, zeta, stat_hat):
    """Gradient ``grad A(zeta) - s_hat`` of the surrogate ``g`` in canonical coordinates."""
    return spec.grad_A(np.asarray(zeta, dtype=float)) - np.asarray(stat_hat, dtype=float)


def g_objective(spec, zeta, zeta_ref, stat_hat):
    """Surrogate ``g(zeta) = -E_phi[log k(zeta, Y) / k(zeta_ref, Y)]`` from the mean statistic."""
    zeta = np.asarray(zeta, dtype=float)
    zeta_ref = np.asarray(zeta_ref, dtype=float)
    return float(spec.log_partition(zeta) - spec.log_partition(zeta_ref)
                 - (zeta - zeta_ref) @ np.asarray(stat_hat, dtype=float))


def gradient_step_canonical(theta, cov, y_mean, gamma):
    """Known-covariance gradient step taken in canonical coordinates, written for the mean.

    ``theta <- theta - (gamma / beta0) Sigma (theta - y_mean)`` with
    ``beta0`` the largest eigenvalue of ``Sigma``.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    theta = np.asarray(theta, dtype=float)
    beta0 = np.linalg.eigvalsh(cov)[-1]
    return theta - (gamma / beta0) * cov @ (theta - np.asarray(y_mean, dtype=float))


def gradient_step_noncanonical(theta, cov, y_mean, gamma):
    """Known-covariance gradient step in mean coordinates.

    ``theta <- theta - (gamma / beta) Sigma^{-1} (theta - y_mean)`` with
    ``beta`` the largest eigenvalue of ``Sigma^{-1}``.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    theta = np.asarray(theta, dtype=float)
    prec = np.linalg.inv(cov)
    prec = 0.5 * (prec + prec.T)
    beta = np.linalg.eigvalsh(prec)[-1]
    return theta - (gamma / beta) * prec @ (theta - np.asarray(y_mean, dtype=float))
