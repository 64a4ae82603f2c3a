r"""Component parameter updates: maximisation (MG), Rényi gradient (RGD) and Student's t.

Gaussian components are moved by the closed-form maximisation update of
:mod:`alphamix.expfam`.  The RGD rule only moves means, by a step
proportional to each component's share of ``int (mu k)^alpha p^(1-alpha)``.

Student's t components use the scale-mixture representation
``Y | z ~ N(m, Sigma / z)`` with ``z ~ Gamma(a/2, rate a/2)``.  Expectations
over ``z`` are taken in closed form; only the ``y`` expectations are
estimated (by quadrature or importance sampling).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import digamma, gammaln, logsumexp

from .errors import ImageError
from .expfam import GaussianParams, MomentEstimate, gaussian_update, safe_cholesky

__all__ = [
    "StudentTParams",
    "MAX_HALVINGS",
    "mg_update",
    "rgd_update_means",
    "rgd_step_sizes",
    "kappa_fn",
    "kappa_inv",
    "dof_equation",
    "dof_from_moment",
    "g_tau",
    "log_g_tau",
    "student_update",
    "student_update_with_halving",
]

logger = logging.getLogger(__name__)

MAX_HALVINGS = 20
DOF_MAX = 1e6


@dataclass(frozen=True, eq=False)
class StudentTParams:
    """Location ``m``, scale matrix ``Sigma`` and degrees of freedom ``a`` of a Student's t."""

    mean: np.ndarray
    cov: np.ndarray
    dof: float
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("mean and scale dimensions disagree")
        if not (np.isfinite(self.dof) and self.dof > 0):
            raise ValueError("degrees of freedom must be positive")
        cov, chol = safe_cholesky(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "chol", chol)

    @property
    def dimension(self) -> int:
        return self.mean.size

    def logpdf(self, points):
        from .mixture import MixtureState, component_log_densities

        return component_log_densities(MixtureState([1.0], [self], "student"), points)[:, 0]


def _with_halving(update, gamma):
    g = gamma
    for _ in range(MAX_HALVINGS + 1):
        try:
            return update(g)
        except ImageError:
            g *= 0.5
    raise ImageError(f"update failed after {MAX_HALVINGS} halvings of gamma = {gamma}")


def mg_update(state, moments, gamma, covariance="full"):
    """Maximisation update of every Gaussian component.

    Parameters
    ----------
    state : MixtureState
    moments : sequence of MomentEstimate or None
        ``None`` marks a component whose responsibilities all underflowed;
        it is left unchanged.
    gamma : float or array_like
        Common or per-component step in (0, 1].
    covariance : {"full", "fixed"}
        With ``"fixed"`` only the means move, ``m <- (1 - gamma) m + gamma m_hat``.

    Returns
    -------
    list of GaussianParams
    """
    if state.family != "gaussian":
        raise ValueError("mg_update expects Gaussian components")
    gammas = np.broadcast_to(np.asarray(gamma, dtype=float), (state.J,))
    out = []
    for comp, mom, g in zip(state.components, moments, gammas):
        if mom is None:
            out.append(comp)
            continue
        if covariance == "fixed":
            mean = (1.0 - g) * comp.mean + g * np.asarray(mom.mean, dtype=float)
            out.append(GaussianParams(mean, comp.cov))
        elif covariance == "full":
            out.append(_with_halving(lambda gg: gaussian_update(comp, mom, gg), float(g)))
        else:
            raise ValueError(f"unknown covariance mode {covariance!r}")
    return out


def rgd_step_sizes(weights, log_integrals, gamma):
    """Per-component steps ``gamma lambda_j I_j / sum_l lambda_l I_l``.

    Returns ``None`` when every ``I_j`` underflowed.
    """
    log_share = np.log(np.asarray(weights, dtype=float)) + np.asarray(log_integrals, dtype=float)
    total = logsumexp(log_share)
    if not np.isfinite(total):
        return None
    return gamma * np.exp(log_share - total)


def rgd_update_means(state, mean_hats, log_integrals, gamma):
    """Rényi gradient update of the component means.

    ``m_j <- m_j + gamma lambda_j I_j (m_hat_j - m_j) / sum_l lambda_l I_l``,
    which is the sampled rule ``lambda_j sum phi (y - m_j) / sum lambda phi``
    rewritten with self-normalised means.  Scales and dof are untouched.

    Returns
    -------
    components : list
    skipped : bool
        True when the denominator vanished and nothing moved.
    """
    steps = rgd_step_sizes(state.weights, log_integrals, gamma)
    if steps is None:
        logger.debug("RGD step skipped: every responsibility underflowed")
        return list(state.components), True
    out = []
    for comp, m_hat, s in zip(state.components, mean_hats, steps):
        if m_hat is None or s == 0.0:
            out.append(comp)
            continue
        mean = comp.mean + s * (np.asarray(m_hat, dtype=float) - comp.mean)
        if isinstance(comp, StudentTParams):
            out.append(StudentTParams(mean, comp.cov, comp.dof))
        else:
            out.append(GaussianParams(mean, comp.cov))
    return out, False


# --- Student's t helpers -------------------------------------------------


def kappa_fn(x):
    """``log x + digamma(x)``, increasing from -inf to +inf on ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("kappa is defined for x > 0")
    out = np.log(x) + digamma(x)
    return out[()] if out.ndim == 0 else out


def _solve_log_monotone(fun, value, lo=-5.0, hi=5.0):
    """Root in ``t = log x`` of a monotone ``fun(exp(t)) - value`` with bracket expansion."""
    g = lambda t: fun(np.exp(t)) - value
    glo, ghi = g(lo), g(hi)
    while glo * ghi > 0:
        lo, hi = lo * 2.0, hi * 2.0
        if hi > 700:
            raise ValueError("could not bracket the root")
        glo, ghi = g(lo), g(hi)
    return float(np.exp(brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)))


def kappa_inv(v):
    """Solve ``kappa(x) = v`` for ``x > 0``."""
    return _solve_log_monotone(lambda x: np.log(x) + digamma(x), float(v))


def dof_equation(x):
    """``log x - digamma(x)``: decreasing from +inf to 0 on ``x > 0``."""
    x = np.asarray(x, dtype=float)
    out = np.log(x) - digamma(x)
    return out[()] if out.ndim == 0 else out


def dof_from_moment(v):
    """Degrees of freedom maximising ``E[log Gamma(z; a/2, a/2)]`` given ``v = E[z - log z]``.

    The stationarity condition is ``log(a/2) - digamma(a/2) = v - 1``.  By
    Jensen ``v >= 1``; values at or below ``1 + 1 / DOF_MAX`` return
    ``DOF_MAX`` (the Gaussian limit).
    """
    r = float(v) - 1.0
    if r <= 1.0 / DOF_MAX:
        return DOF_MAX
    return 2.0 * _solve_log_monotone(lambda x: np.log(x) - digamma(x), r)


def log_g_tau(u, v, a):
    """Log of ``int z^u exp(-v z) Gamma(z; a/2, rate a/2) dz``."""
    h = 0.5 * np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(h <= 0) or np.any(h + u <= 0) or np.any(h + v <= 0):
        raise ValueError("g_tau requires a > 0, a/2 + u > 0 and a/2 + v > 0")
    return h * np.log(h) + gammaln(h + u) - (h + u) * np.log(h + v) - gammaln(h)


def g_tau(u, v, a):
    """``(a/2)^(a/2) Gamma(a/2 + u) / ((a/2 + v)^(a/2 + u) Gamma(a/2))``."""
    out = np.exp(log_g_tau(u, v, a))
    return out[()] if np.ndim(out) == 0 else out


def _student_conditionals(params, points):
    from .kernels import mahalanobis_sq

    y = np.atleast_2d(np.asarray(points, dtype=float))
    d = params.dimension
    a = params.dof
    maha = mahalanobis_sq(y, params.mean[None, :], params.chol[None, :, :])[:, 0]
    # E[z | y] and E[log z | y] under the Gamma(a/2 + d/2, a/2 + q) posterior
    w = (a + d) / (a + maha)
    elog = digamma(0.5 * (a + d)) - np.log(0.5 * (a + maha))
    return y, w, elog


def student_update(params, points, log_weights, gamma):
    """Maximisation update of one Student's t component.

    Parameters
    ----------
    params : StudentTParams
    points : array_like, shape (K, d)
        Quadrature nodes or importance samples.
    log_weights : array_like, shape (K,)
        Unnormalised log weights of the responsibility at ``points`` (e.g.
        ``log w_k + log phi(y_k)`` or ``log phi_hat(Y_m)``).
    gamma : float
        Step in (0, 1].

    Returns
    -------
    StudentTParams

    Notes
    -----
    The update maximises the expected complete-data log-likelihood under the
    mixture ``gamma * phi_hat(y) p(z | y) + (1 - gamma) k(y, z)`` of the
    normalised responsibility and the current joint density.  Writing ``w``
    and ``l`` for the posterior mean of ``z`` and ``log z`` given ``y``:

    * ``m' = (gamma E[w y] + (1 - gamma) m) / (gamma E[w] + 1 - gamma)``
    * ``Sigma' = gamma E[w (y - m')(y - m')^T] + (1 - gamma)(Sigma + (m - m')(m - m')^T)``
    * ``a'`` solves ``log(a'/2) - digamma(a'/2) = E[z - log z] - 1``.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    lw = np.asarray(log_weights, dtype=float)
    total = logsumexp(lw)
    if not np.isfinite(total):
        raise ValueError("responsibility weights are all zero")
    pi = np.exp(lw - total)
    y, w, elog = _student_conditionals(params, points)
    m, S, a = params.mean, params.cov, params.dof
    h = 0.5 * a
    wbar = pi @ w
    ez = gamma * wbar + (1.0 - gamma)
    mean = (gamma * (pi * w) @ y + (1.0 - gamma) * m) / ez
    diff = y - mean
    shift = m - mean
    cov = (gamma * np.einsum("k,ka,kb->ab", pi * w, diff, diff)
           + (1.0 - gamma) * (S + np.outer(shift, shift)))
    prior_v = 1.0 + np.log(h) - digamma(h)
    v = gamma * (pi @ (w - elog)) + (1.0 - gamma) * prior_v
    dof = dof_from_moment(v)
    return StudentTParams(mean, cov, dof)


def student_update_with_halving(params, points, log_weights, gamma):
    """:func:`student_update` with the gamma-halving fallback on :class:`ImageError`."""
    return _with_halving(lambda g: student_update(params, points, log_weights, g), gamma)
