r"""Alpha-divergence primitives, quadrature grids and the variational Rényi bound.

The divergence between a positive measure ``q`` and an unnormalised target
``p`` is

.. math:: \Psi_\alpha(q; p) = \int f_\alpha(q/p)\, p \, d\nu

with ``f_0(u) = -log u``, ``f_1(u) = u log u`` and
``f_alpha(u) = (u^alpha - 1) / (alpha (alpha - 1))`` otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import logsumexp

from .errors import NormalizationError

__all__ = [
    "f_alpha",
    "QuadratureGrid",
    "build_grid",
    "psi_alpha_from_logs",
    "psi_alpha_exact",
    "vr_bound_mc",
    "vr_bound_exact",
    "GRID_KINDS",
]

GRID_KINDS = ("gauss-hermite-tensor", "uniform-grid", "sinh-trapezoid")
_KIND_ALIASES = {"gauss-hermite": "gauss-hermite-tensor"}
NORMALIZATION_TOL = 1e-6


def f_alpha(alpha, u):
    """Convex generator of the alpha-divergence.

    Parameters
    ----------
    alpha : float
    u : float or array_like
        Strictly positive ratios.

    Returns
    -------
    float or ndarray
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("f_alpha is only defined for u > 0")
    if alpha == 0.0:
        out = -np.log(u)
    elif alpha == 1.0:
        out = u * np.log(u)
    else:
        out = np.expm1(alpha * np.log(u)) / (alpha * (alpha - 1.0))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor-product quadrature rule for integrals against Lebesgue measure.

    ``sum(weights * f(nodes))`` approximates ``int f(y) dy``.  The weights of
    the Gauss-Hermite kind already include the ``exp(x^2)`` factor, so
    callers never deal with the Hermite weight function.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    log_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if nodes.shape[0] != weights.shape[0]:
            raise ValueError("number of nodes and weights differ")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ValueError("quadrature weights must be finite and positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "log_weights", np.log(weights))

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values):
        """Integrate values tabulated on the nodes (trailing axes are kept)."""
        return np.tensordot(self.weights, np.asarray(values, dtype=float), axes=(0, 0))

    def log_integrate(self, log_values):
        """``log int exp(log_values)`` evaluated stably along the node axis."""
        lv = np.asarray(log_values, dtype=float)
        lw = self.log_weights.reshape((-1,) + (1,) * (lv.ndim - 1))
        return logsumexp(lv + lw, axis=0)


def _one_dim_rule(kind, order, center, scale, bounds, half_width):
    if kind == "gauss-hermite-tensor":
        if order < 2:
            raise ValueError("Gauss-Hermite order must be at least 2")
        x, w = hermgauss(order)
        # y = center + sqrt(2) * scale * x; the default scale matches N(0, 1)
        s = np.sqrt(2.0) * scale
        return center + s * x, s * w * np.exp(x * x)
    if kind == "uniform-grid":
        if order < 2:
            raise ValueError("uniform grid needs at least 2 points per axis")
        lo, hi = bounds
        if not hi > lo:
            raise ValueError("uniform grid bounds must satisfy lo < hi")
        y = np.linspace(lo, hi, order)
        h = (hi - lo) / (order - 1)
        w = np.full(order, h)
        w[0] = w[-1] = 0.5 * h
        return y, w
    if kind == "sinh-trapezoid":
        # y = center + scale * sinh(t): polynomially decaying integrands become
        # exponentially decaying in t, which the trapezoid rule handles well
        if order < 3:
            raise ValueError("sinh-trapezoid grid needs at least 3 points per axis")
        t = np.linspace(-half_width, half_width, order)
        h = t[1] - t[0]
        w = np.full(order, h) * scale * np.cosh(t)
        w[0] *= 0.5
        w[-1] *= 0.5
        return center + scale * np.sinh(t), w
    raise ValueError(f"unknown grid kind {kind!r}; expected one of {GRID_KINDS}")


def build_grid(kind, dimension, order=None, *, center=0.0, scale=1.0,
               bounds=(-10.0, 10.0), half_width=8.0):
    """Build a tensor-product quadrature grid.

    Parameters
    ----------
    kind : {"gauss-hermite-tensor", "uniform-grid", "sinh-trapezoid"}
        ``"gauss-hermite"`` is accepted as a short alias.
    dimension : int
        Between 1 and 3.
    order : int, optional
        Points per axis. Defaults to 128 for d=1, 64 for d=2 and 24 for d=3.
    center, scale : float or array_like, optional
        Per-axis location and spread (Gauss-Hermite and sinh-trapezoid).
    bounds : tuple or sequence of tuples, optional
        Box for the uniform grid, either one ``(lo, hi)`` pair for every axis
        or one pair per axis.
    half_width : float, optional
        Range ``[-T, T]`` of the sinh-trapezoid parameter.

    Returns
    -------
    QuadratureGrid
    """
    if not 1 <= int(dimension) <= 3:
        raise ValueError("quadrature grids are limited to 1 <= d <= 3")
    d = int(dimension)
    kind = _KIND_ALIASES.get(kind, kind)
    if order is None:
        order = {1: 128, 2: 64, 3: 24}[d]
    center = np.broadcast_to(np.asarray(center, dtype=float), (d,))
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (d,))
    if np.any(scale <= 0):
        raise ValueError("grid scale must be positive")
    b = np.asarray(bounds, dtype=float)
    b = np.broadcast_to(b, (d, 2)) if b.ndim == 1 else b
    axes = [_one_dim_rule(kind, order, center[a], scale[a], tuple(b[a]), half_width)
            for a in range(d)]
    mesh = np.meshgrid(*[ax[0] for ax in axes], indexing="ij")
    wmesh = np.meshgrid(*[ax[1] for ax in axes], indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=1), axis=1)
    return QuadratureGrid(nodes=nodes, weights=weights, kind=kind)


def psi_alpha_from_logs(alpha, log_q, log_p, grid):
    """Quadrature value of Psi_alpha from log-densities tabulated on ``grid``.

    Nodes where the target vanishes contribute nothing; for ``alpha >= 1``
    they make the divergence infinite when ``q`` is positive there.
    """
    lq = np.asarray(log_q, dtype=float)
    lp = np.asarray(log_p, dtype=float)
    lw = grid.log_weights
    support = np.isfinite(lp)
    if alpha >= 1.0 and np.any(~support & np.isfinite(lq)):
        return np.inf
    if alpha == 0.0:
        pw = np.exp(lp[support] + lw[support])
        return float(-np.sum(pw * (lq[support] - lp[support])))
    if alpha == 1.0:
        qw = np.exp(lq + lw)
        mask = np.isfinite(lq)
        return float(np.sum(qw[mask] * (lq[mask] - lp[mask])))
    with np.errstate(invalid="ignore"):
        mixed = alpha * lq + (1.0 - alpha) * lp
    mixed = np.where(support | (alpha > 1.0), mixed, -np.inf)
    log_i = logsumexp(mixed + lw)
    total_p = np.exp(logsumexp(lp + lw))
    return float((np.exp(log_i) - total_p) / (alpha * (alpha - 1.0)))


def _check_normalized(lq, grid):
    mass = float(np.exp(grid.log_integrate(lq)))
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        raise NormalizationError(
            f"proposal integrates to {mass:.8g} on the grid (tolerance {NORMALIZATION_TOL})")


def psi_alpha_exact(alpha, log_q, log_p, grid, check_normalized=True):
    """Psi_alpha(q; p) by quadrature.

    Parameters
    ----------
    alpha : float
    log_q, log_p : callable
        Vectorised log-densities mapping ``(K, d)`` points to ``(K,)`` values.
        ``log_p`` may be unnormalised.
    grid : QuadratureGrid
    check_normalized : bool, optional
        Raise :class:`NormalizationError` when ``q`` does not integrate to
        one within 1e-6 on the grid.
    """
    lq = np.asarray(log_q(grid.nodes), dtype=float)
    if check_normalized:
        _check_normalized(lq, grid)
    lp = np.asarray(log_p(grid.nodes), dtype=float)
    return psi_alpha_from_logs(alpha, lq, lp, grid)


def vr_bound_mc(alpha, log_q, log_p, log_proposal=None):
    """Monte Carlo estimate of the variational Rényi bound.

    .. math:: L_\\alpha = \\frac{1}{1-\\alpha} \\log \\int q^\\alpha p^{1-\\alpha}

    Parameters
    ----------
    alpha : float
        Must differ from 1.
    log_q, log_p : array_like, shape (M,)
        Log-densities of the variational density and the target at the samples.
    log_proposal : array_like, optional
        Log-density of the distribution the samples were drawn from, when it
        is not ``q`` itself (importance-weighted estimate).

    Returns
    -------
    float
    """
    if alpha == 1.0:
        raise ValueError("the Rényi bound is undefined at alpha = 1")
    lq = np.asarray(log_q, dtype=float)
    lp = np.asarray(log_p, dtype=float)
    if lq.size == 0:
        raise ValueError("vr_bound_mc needs at least one sample")
    lprop = lq if log_proposal is None else np.asarray(log_proposal, dtype=float)
    if not (np.all(np.isfinite(lq)) and np.all(np.isfinite(lp)) and np.all(np.isfinite(lprop))):
        raise ValueError("vr_bound_mc requires finite log-density values")
    terms = alpha * lq + (1.0 - alpha) * lp - lprop
    return float((logsumexp(terms) - np.log(lq.size)) / (1.0 - alpha))


def vr_bound_exact(alpha, log_q_values, log_p_values, grid):
    """Quadrature value of the variational Rényi bound from tabulated log-densities."""
    if alpha == 1.0:
        raise ValueError("the Rényi bound is undefined at alpha = 1")
    lq = np.asarray(log_q_values, dtype=float)
    lp = np.asarray(log_p_values, dtype=float)
    with np.errstate(invalid="ignore"):
        mixed = alpha * lq + (1.0 - alpha) * lp
    mixed = np.where(np.isnan(mixed), -np.inf, mixed)
    return float(grid.log_integrate(mixed) / (1.0 - alpha))
