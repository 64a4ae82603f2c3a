r"""Mixture state, responsibilities and simplex weight updates.

The variational density is ``mu k(y) = sum_j lambda_j k(theta_j, y)``.  The
responsibility of component ``j`` is

.. math:: \varphi_j(y) = k(\theta_j, y) \left(\frac{\mu k(y)}{p(y)}\right)^{\alpha - 1},

and every quantity derived from it is handled in log space.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .expfam import LOG_2PI, GaussianParams
from .kernels import logsumexp_rows, mahalanobis_sq

__all__ = [
    "WEIGHT_FLOOR",
    "MixtureState",
    "ScheduleConfig",
    "component_log_densities",
    "eval_log_mixture",
    "log_responsibilities",
    "log_responsibility",
    "update_weights",
    "update_weights_log",
    "power_descent_step",
    "power_descent_eta_range",
    "state_to_json",
    "state_from_json",
]

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-15
STATE_VERSION = 1
FAMILIES = ("gaussian", "student")


@dataclass(frozen=True, eq=False)
class MixtureState:
    """Simplex weights and component parameters of a finite mixture.

    Parameters
    ----------
    weights : array_like, shape (J,)
        Strictly positive and summing to one within 1e-12.
    components : sequence
        ``GaussianParams`` or ``StudentTParams`` records of a common dimension.
    family : {"gaussian", "student"}
    """

    weights: np.ndarray
    components: tuple
    family: str = "gaussian"
    _means: np.ndarray = field(init=False, repr=False)
    _chols: np.ndarray = field(init=False, repr=False)
    _log_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        comps = tuple(self.components)
        if len(comps) == 0 or w.size != len(comps):
            raise ValueError("need one weight per component and at least one component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to one")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        d = comps[0].mean.size
        if any(c.mean.size != d for c in comps):
            raise ValueError("components have different dimensions")
        is_student = [hasattr(c, "dof") for c in comps]
        if any(is_student) != (self.family == "student") or len(set(is_student)) > 1:
            raise ValueError("component types do not match the family tag")
        means = np.stack([c.mean for c in comps])
        chols = np.stack([c.chol for c in comps])
        half_logdet = np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
        if self.family == "gaussian":
            log_norms = -half_logdet - 0.5 * d * LOG_2PI
        else:
            a = np.array([c.dof for c in comps])
            log_norms = (gammaln(0.5 * (a + d)) - gammaln(0.5 * a)
                         - 0.5 * d * np.log(a * np.pi) - half_logdet)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "_means", means)
        object.__setattr__(self, "_chols", chols)
        object.__setattr__(self, "_log_norms", log_norms)

    @property
    def J(self) -> int:
        return self.weights.size

    @property
    def dimension(self) -> int:
        return self._means.shape[1]

    @property
    def means(self) -> np.ndarray:
        return self._means.copy()

    def mixture_mean(self) -> np.ndarray:
        """``sum_j lambda_j m_j``."""
        return self.weights @ self._means

    def replace(self, weights=None, components=None):
        return MixtureState(self.weights if weights is None else weights,
                            self.components if components is None else components,
                            self.family)


def component_log_densities(state, points):
    """``log k(theta_j, y_m)`` as an ``(M, J)`` array."""
    y = np.atleast_2d(np.asarray(points, dtype=float))
    maha = mahalanobis_sq(y, state._means, state._chols)
    if state.family == "gaussian":
        return state._log_norms[None, :] - 0.5 * maha
    a = np.array([c.dof for c in state.components])
    d = state.dimension
    return state._log_norms[None, :] - 0.5 * (a + d)[None, :] * np.log1p(maha / a[None, :])


def eval_log_mixture(state, points, log_k=None):
    """``log sum_j lambda_j k(theta_j, y)`` for each row of ``points``."""
    if log_k is None:
        log_k = component_log_densities(state, points)
    return logsumexp_rows(log_k, np.log(state.weights))


def log_responsibilities(state, log_p, points, alpha, log_k=None):
    """Log responsibilities for every point and component.

    Parameters
    ----------
    state : MixtureState
    log_p : array_like, shape (M,)
        Target log-density at ``points``; ``-inf`` marks points outside the
        support, which are excluded.
    points : array_like, shape (M, d)
    alpha : float
        Must differ from 1.

    Returns
    -------
    log_phi : ndarray, shape (M, J)
    n_excluded : int
        Number of points dropped because the target vanishes there.
    """
    if alpha == 1.0:
        raise ValueError("responsibilities are defined for alpha != 1")
    if log_k is None:
        log_k = component_log_densities(state, points)
    log_p = np.asarray(log_p, dtype=float)
    log_mu = eval_log_mixture(state, points, log_k)
    excluded = ~np.isfinite(log_p)
    with np.errstate(invalid="ignore"):
        log_phi = log_k + (alpha - 1.0) * (log_mu - log_p)[:, None]
    log_phi[excluded, :] = -np.inf
    n_excluded = int(excluded.sum())
    if n_excluded:
        logger.debug("excluded %d points where the target vanishes", n_excluded)
    return log_phi, n_excluded


def log_responsibility(state, target, y, j, alpha):
    """``log k(theta_j, y) + (alpha - 1)(log mu k(y) - log p(y))`` at the rows of ``y``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    log_phi, _ = log_responsibilities(state, target.log_p(y), y, alpha)
    return log_phi[:, j]


def _normalize_log_weights(log_w):
    w = np.exp(log_w - logsumexp(log_w))
    low = w < WEIGHT_FLOOR
    n_clamped = int(low.sum())
    if n_clamped:
        w = np.where(low, WEIGHT_FLOOR, w)
        w = w / w.sum()
        logger.debug("clamped %d weights at %g", n_clamped, WEIGHT_FLOOR)
    return w, n_clamped


def update_weights_log(weights, log_integrals, eta, kappa=0.0, alpha=0.0, return_clamped=False):
    """Weight update taking ``log I_j`` instead of ``I_j``.

    ``lambda_j <- lambda_j [I_j + (alpha - 1) kappa]^eta`` normalised, with
    the bracket formed in log space when ``(alpha - 1) kappa >= 0``.
    """
    w = np.asarray(weights, dtype=float)
    log_i = np.asarray(log_integrals, dtype=float)
    if eta == 0.0:
        out = w.copy()
        return (out, 0) if return_clamped else out
    shift = (alpha - 1.0) * kappa
    if shift > 0:
        log_bracket = np.logaddexp(log_i, np.log(shift))
    elif shift == 0:
        log_bracket = log_i.copy()
    else:
        with np.errstate(over="ignore"):
            bracket = np.exp(log_i) + shift
        with np.errstate(divide="ignore", invalid="ignore"):
            log_bracket = np.log(bracket)
        log_bracket = np.where(bracket > 0, log_bracket, -np.inf)
    bad = ~np.isfinite(log_bracket) | np.isnan(log_bracket)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise ValueError(f"nonpositive bracket I_j + (alpha-1) kappa for component {j}")
    out, n_clamped = _normalize_log_weights(np.log(w) + eta * log_bracket)
    return (out, n_clamped) if return_clamped else out


def update_weights(weights, integrals, eta, kappa=0.0, alpha=0.0):
    """Multiplicative weight update ``lambda_j [I_j + (alpha - 1) kappa]^eta`` normalised.

    Parameters
    ----------
    weights : array_like, shape (J,)
    integrals : array_like, shape (J,)
        Values (or estimates) of ``int phi_j``.
    eta : float
        Step size in [0, 1]; zero leaves the weights unchanged.
    kappa : float, optional
    alpha : float, optional

    Returns
    -------
    ndarray, shape (J,)
    """
    integrals = np.asarray(integrals, dtype=float)
    w = np.asarray(weights, dtype=float)
    if eta == 0.0:
        return w.copy()
    bracket = integrals + (alpha - 1.0) * kappa
    if np.any(bracket <= 0):
        j = int(np.flatnonzero(bracket <= 0)[0])
        raise ValueError(f"nonpositive bracket I_j + (alpha-1) kappa for component {j}")
    return _normalize_log_weights(np.log(w) + eta * np.log(bracket))[0]


def power_descent_eta_range(alpha):
    """Half-open interval ``(0, upper]`` of admissible Power Descent step sizes."""
    if alpha == 1.0:
        raise ValueError("alpha = 1 is excluded")
    if alpha <= -1.0:
        return 0.0, (alpha - 1.0) / alpha
    if alpha < 0.0:
        return 0.0, 1.0 - alpha
    return 0.0, 1.0


def power_descent_step(weights, b_values, eta_pd, kappa=0.0, alpha=0.0):
    """Power Descent transition on mixture weights.

    ``lambda_j <- lambda_j [(alpha - 1)(b_j + kappa) + 1]^(eta / (1 - alpha))``
    normalised.  Step sizes outside the admissible range for ``alpha`` only
    trigger a warning.
    """
    if alpha == 1.0:
        raise ValueError("alpha = 1 is excluded")
    if (alpha - 1.0) * kappa < 0:
        raise ValueError("(alpha - 1) * kappa must be nonnegative")
    lo, hi = power_descent_eta_range(alpha)
    if not lo < eta_pd <= hi:
        warnings.warn(f"eta = {eta_pd} is outside the monotone range (0, {hi:g}] for alpha = {alpha}",
                      RuntimeWarning, stacklevel=2)
    b = np.asarray(b_values, dtype=float)
    bracket = (alpha - 1.0) * (b + kappa) + 1.0
    if np.any(bracket <= 0):
        j = int(np.flatnonzero(bracket <= 0)[0])
        raise ValueError(f"nonpositive bracket (alpha-1)(b_j+kappa)+1 for component {j}")
    log_w = np.log(np.asarray(weights, dtype=float)) + eta_pd / (1.0 - alpha) * np.log(bracket)
    return _normalize_log_weights(log_w)[0]


@dataclass(frozen=True)
class ScheduleConfig:
    """Per-iteration hyperparameters.

    Each of ``eta``, ``kappa`` and ``gamma`` is a constant or an explicit
    array with one entry per iteration.
    """

    alpha: float
    eta: object = 0.0
    kappa: object = 0.0
    gamma: object = 1.0
    sampler: str = "is_n"
    M: int = 200
    N: int = 100

    def __post_init__(self):
        if self.alpha == 1.0:
            raise ValueError("alpha = 1 is excluded")
        for name in ("eta", "kappa", "gamma"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if v.size not in (1, self.N):
                raise ValueError(f"{name} must be a scalar or have one value per iteration")
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if np.any(eta < 0) or np.any(eta > 1):
            raise ValueError("eta must lie in [0, 1]")
        if np.any(gamma <= 0) or np.any(gamma > 1):
            raise ValueError("gamma must lie in (0, 1]")
        if np.any((self.alpha - 1.0) * kappa < 0):
            raise ValueError("(alpha - 1) * kappa must be nonnegative")
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be positive")

    def at(self, n):
        """``(eta, kappa, gamma)`` at iteration ``n`` (0-based)."""
        def pick(v):
            v = np.atleast_1d(np.asarray(v, dtype=float))
            return float(v[0] if v.size == 1 else v[n])
        return pick(self.eta), pick(self.kappa), pick(self.gamma)


def state_to_json(state):
    """Serialise a state to a versioned JSON string."""
    comps = []
    for c in state.components:
        rec = {"mean": c.mean.tolist(), "cov": c.cov.ravel().tolist()}
        if state.family == "student":
            rec["dof"] = float(c.dof)
        comps.append(rec)
    doc = {"version": STATE_VERSION, "family": state.family, "dimension": state.dimension,
           "weights": state.weights.tolist(), "components": comps}
    return json.dumps(doc)


def state_from_json(text):
    """Inverse of :func:`state_to_json`."""
    doc = json.loads(text)
    if doc.get("version") != STATE_VERSION:
        raise ValueError(f"unsupported state version {doc.get('version')!r}")
    d = int(doc["dimension"])
    comps = []
    for rec in doc["components"]:
        cov = np.asarray(rec["cov"], dtype=float).reshape(d, d)
        if doc["family"] == "student":
            from .components import StudentTParams
            comps.append(StudentTParams(rec["mean"], cov, rec["dof"]))
        else:
            comps.append(GaussianParams(rec["mean"], cov))
    return MixtureState(np.asarray(doc["weights"], dtype=float), comps, doc["family"])
