"""Numpy implementations of the batched density kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors them loop for
loop and ``kernels.py`` picks whichever is importable.
"""
import numpy as np


def mahalanobis_sq(points, means, chols):
    """Squared Mahalanobis distances for a batch of points and components.

    Parameters
    ----------
    points : ndarray, shape (M, d)
    means : ndarray, shape (J, d)
    chols : ndarray, shape (J, d, d)
        Lower Cholesky factors of the component scale matrices.

    Returns
    -------
    ndarray, shape (M, J)
        ``(y - m_j)^T (L_j L_j^T)^{-1} (y - m_j)`` for every pair.
    """
    points = np.ascontiguousarray(points, dtype=float)
    means = np.ascontiguousarray(means, dtype=float)
    chols = np.ascontiguousarray(chols, dtype=float)
    M, d = points.shape
    J = means.shape[0]
    out = np.empty((M, J))
    for j in range(J):
        diff = points - means[j]
        # forward substitution L z = diff, vectorised across points
        L = chols[j]
        z = np.empty_like(diff)
        for a in range(d):
            acc = diff[:, a] - z[:, :a] @ L[a, :a]
            z[:, a] = acc / L[a, a]
        out[:, j] = np.einsum("ma,ma->m", z, z)
    return out


def logsumexp_rows(values, offsets):
    """Row-wise ``log sum_j exp(values[m, j] + offsets[j])``.

    Entries equal to ``-inf`` are ignored; a row with no finite entry
    returns ``-inf``.
    """
    values = np.asarray(values, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    shifted = values + offsets[None, :]
    peak = np.max(shifted, axis=1)
    finite = np.isfinite(peak)
    safe_peak = np.where(finite, peak, 0.0)
    with np.errstate(under="ignore"):
        total = np.sum(np.exp(shifted - safe_peak[:, None]), axis=1)
    with np.errstate(divide="ignore"):
        out = np.log(total) + safe_peak
    out[~finite] = peak[~finite]
    return out
