"""Importance-sampling proposals, seeded streams and responsibility statistics.

One batch of ``M`` points is drawn per iteration from either the current
mixture (``is_n``) or the equally weighted mixture of the same components
(``is_unif``).  The same batch feeds the weight update, the component
updates and the Rényi-bound estimate.  :func:`exact_stats` computes the same
statistics by quadrature and is used as a test oracle and in exact mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .expfam import MomentEstimate
from .mixture import component_log_densities, eval_log_mixture, log_responsibilities

__all__ = [
    "SAMPLERS",
    "UNDERFLOW_LOG",
    "SampleBatch",
    "WeightedStats",
    "rng_stream",
    "draw_samples",
    "estimate_stats",
    "exact_stats",
    "stats_from_log_terms",
]

SAMPLERS = ("is_n", "is_unif")
UNDERFLOW_LOG = -745.0


def rng_stream(master_seed, trial_index, iteration):
    """Counter-based generator keyed by ``(master_seed, trial_index, iteration)``.

    The key fully determines the stream, so results do not depend on the
    order in which trials or threads request their streams.
    """
    key = [int(master_seed), int(trial_index), int(iteration)]
    if any(k < 0 for k in key):
        raise ValueError("seed, trial and iteration must be nonnegative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Points drawn from a mixture proposal.

    Attributes
    ----------
    points : ndarray, shape (M, d)
    log_q : ndarray, shape (M,)
        Log-density of the full proposal mixture at each point.
    component_indices : ndarray, shape (M,)
        Zero-based index of the component each point was drawn from.
    log_k : ndarray, shape (M, J)
        Component log-densities, kept so they are evaluated once.
    kind : str
    seed_record : tuple or None
    """

    points: np.ndarray
    log_q: np.ndarray
    component_indices: np.ndarray
    log_k: np.ndarray
    kind: str
    seed_record: tuple | None = None

    @property
    def M(self) -> int:
        return self.points.shape[0]


def draw_samples(state, kind, M, rng, seed_record=None):
    """Draw ``M`` points from the ``is_n`` or ``is_unif`` proposal.

    Parameters
    ----------
    state : MixtureState
    kind : {"is_n", "is_unif"}
    M : int
    rng : numpy.random.Generator
    seed_record : tuple, optional
        Stored on the batch for provenance.
    """
    if kind not in SAMPLERS:
        raise ValueError(f"unknown sampler {kind!r}; expected one of {SAMPLERS}")
    M = int(M)
    if M < 1:
        raise ValueError("M must be positive")
    J, d = state.J, state.dimension
    if kind == "is_n":
        cdf = np.cumsum(state.weights)
        idx = np.searchsorted(cdf, rng.random(M) * cdf[-1], side="right")
        idx = np.minimum(idx, J - 1)
    else:
        idx = rng.integers(0, J, size=M)
    z = rng.standard_normal((M, d))
    chols = np.stack([c.chol for c in state.components])
    means = state.means
    y = means[idx] + np.einsum("mab,mb->ma", chols[idx], z)
    if state.family == "student":
        dofs = np.array([c.dof for c in state.components])[idx]
        scale = rng.gamma(0.5 * dofs, 2.0 / dofs)
        y = means[idx] + (y - means[idx]) / np.sqrt(scale)[:, None]
    log_k = component_log_densities(state, y)
    if kind == "is_n":
        log_q = eval_log_mixture(state, y, log_k)
    else:
        log_q = logsumexp(log_k, axis=1) - np.log(J)
    return SampleBatch(y, log_q, idx, log_k, kind, seed_record)


@dataclass(frozen=True, eq=False)
class WeightedStats:
    """Responsibility statistics for every component.

    ``exp(log_terms[k, j])`` is the contribution of point ``k`` to the
    integral of ``phi_j``; summing over ``k`` gives ``I_j``.

    Attributes
    ----------
    points : ndarray, shape (K, d)
    log_terms : ndarray, shape (K, J)
    log_integrals : ndarray, shape (J,)
    moments : list of MomentEstimate or None
        ``None`` when the component's responsibilities all underflowed.
    ess : ndarray, shape (J,)
        ``(sum phi)^2 / sum phi^2``, zero for unavailable components.
    n_excluded : int
        Points dropped because the target vanished there.
    log_p, log_mu : ndarray, shape (K,)
        Target and mixture log-densities at ``points``.
    """

    points: np.ndarray
    log_terms: np.ndarray
    log_integrals: np.ndarray
    moments: list
    ess: np.ndarray
    n_excluded: int
    log_p: np.ndarray
    log_mu: np.ndarray

    @property
    def integrals(self):
        return np.exp(self.log_integrals)

    @property
    def available(self):
        return np.array([m is not None for m in self.moments])

    @property
    def mean_hats(self):
        return [None if m is None else m.mean for m in self.moments]


def stats_from_log_terms(points, log_terms, n_excluded, log_p, log_mu):
    """Assemble :class:`WeightedStats` from per-point log contributions."""
    y = np.atleast_2d(points)
    log_terms = np.asarray(log_terms, dtype=float)
    J = log_terms.shape[1]
    log_int = np.empty(J)
    ess = np.zeros(J)
    moments = []
    for j in range(J):
        lt = log_terms[:, j]
        top = np.max(lt) if lt.size else -np.inf
        total = logsumexp(lt) if np.isfinite(top) else -np.inf
        log_int[j] = total
        if not np.isfinite(top) or top < UNDERFLOW_LOG:
            moments.append(None)
            continue
        pi = np.exp(lt - total)
        m_hat = pi @ y
        diff = y - m_hat
        s_hat = np.einsum("k,ka,kb->ab", pi, diff, diff)
        s_hat = 0.5 * (s_hat + s_hat.T)
        ess[j] = np.exp(2.0 * total - logsumexp(2.0 * lt))
        moments.append(MomentEstimate(float(np.exp(total)), m_hat, s_hat))
    return WeightedStats(y, log_terms, log_int, moments, ess, int(n_excluded),
                         np.asarray(log_p, dtype=float), np.asarray(log_mu, dtype=float))


def estimate_stats(batch, state, target, alpha):
    """Importance-sampling responsibility statistics from one batch.

    ``phi_hat_j(Y) = k_j(Y) / q(Y) * (mu k(Y) / p(Y))^(alpha - 1)``;
    ``I_j`` is estimated by ``mean_m phi_hat_j(Y_m)`` and the moments are
    self-normalised.  The target is evaluated exactly once per point.
    """
    log_p = np.asarray(target.log_p(batch.points), dtype=float)
    log_phi, n_excluded = log_responsibilities(state, log_p, batch.points, alpha, batch.log_k)
    log_mu = eval_log_mixture(state, batch.points, batch.log_k)
    log_terms = log_phi - batch.log_q[:, None] - np.log(batch.M)
    return stats_from_log_terms(batch.points, log_terms, n_excluded, log_p, log_mu)


def exact_stats(state, log_p_nodes, grid, alpha):
    """Quadrature responsibility statistics on ``grid``.

    Parameters
    ----------
    state : MixtureState
    log_p_nodes : ndarray, shape (K,)
        Target log-density at ``grid.nodes``.
    grid : QuadratureGrid
    alpha : float
    """
    log_k = component_log_densities(state, grid.nodes)
    log_phi, n_excluded = log_responsibilities(state, log_p_nodes, grid.nodes, alpha, log_k)
    log_mu = eval_log_mixture(state, grid.nodes, log_k)
    log_terms = log_phi + grid.log_weights[:, None]
    return stats_from_log_terms(grid.nodes, log_terms, n_excluded, log_p_nodes, log_mu)
