"""Unnormalised target densities.

Three built-in multimodal targets in any dimension ``d`` (``u_d`` is the
all-ones vector and ``c`` the normaliser):

* ``ewgmm``: ``c [0.5 N(-2u, I) + 0.5 N(2u, I)]``
* ``imbalanced_gmm``: ``c [0.35 N(-2u, I) + 0.25 N(2u, I) + 0.4 N(u, I)]``
* ``ewsmm``: ``c [0.5 t_2(-2u, I) + 0.5 t_2(2u, I)]``

plus targets tabulated on a rectangular grid and read from CSV.
"""
from __future__ import annotations

import csv
import threading

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gammaln, logsumexp

from .errors import ConfigError

__all__ = ["Target", "BUILTIN_KINDS", "builtin_target", "load_grid_target",
           "student_logpdf_identity", "gaussian_logpdf_identity"]

BUILTIN_KINDS = {
    "ewgmm": "equally weighted Gaussian mixture, modes at -2u and 2u",
    "imbalanced_gmm": "Gaussian mixture with weights 0.35/0.25/0.4 at -2u, 2u and u",
    "ewsmm": "equally weighted Student's t mixture (2 dof), modes at -2u and 2u",
}


class Target:
    """Unnormalised log-density with optional normaliser and true mean.

    Every call to :meth:`log_p` adds the number of evaluated points to
    :attr:`evaluations`; :meth:`fresh` returns an independent counter view.

    Parameters
    ----------
    log_density : callable
        Maps an ``(M, d)`` array to ``(M,)`` log-densities (``-inf`` allowed).
    dimension : int
    normalizer : float, optional
        ``int p`` when known.
    true_mean : array_like, optional
    label : str
    mean_flag : str, optional
        Caveat attached to ``true_mean`` (e.g. defined by symmetry only).
    """

    def __init__(self, log_density, dimension, normalizer=None, true_mean=None,
                 label="", mean_flag=None):
        self._log_density = log_density
        self.dimension = int(dimension)
        self.normalizer = normalizer
        self.true_mean = None if true_mean is None else np.asarray(true_mean, dtype=float)
        self.label = label
        self.mean_flag = mean_flag
        self.evaluations = 0
        self.outside = 0
        self._lock = threading.Lock()

    def log_p(self, points):
        y = np.atleast_2d(np.asarray(points, dtype=float))
        if y.shape[1] != self.dimension:
            raise ValueError(f"expected points of dimension {self.dimension}")
        out = np.asarray(self._log_density(y), dtype=float)
        with self._lock:
            self.evaluations += y.shape[0]
        return out

    def fresh(self):
        """Same density with its own evaluation counter."""
        return Target(self._log_density, self.dimension, self.normalizer, self.true_mean,
                      self.label, self.mean_flag)

    def __repr__(self):
        return f"Target(label={self.label!r}, dimension={self.dimension})"


def gaussian_logpdf_identity(y, mean):
    d = y.shape[1]
    diff = y - mean
    return -0.5 * np.einsum("ma,ma->m", diff, diff) - 0.5 * d * np.log(2.0 * np.pi)


def student_logpdf_identity(y, mean, dof):
    """Student's t log-density with identity scale matrix."""
    d = y.shape[1]
    diff = y - mean
    maha = np.einsum("ma,ma->m", diff, diff)
    return (gammaln(0.5 * (dof + d)) - gammaln(0.5 * dof) - 0.5 * d * np.log(dof * np.pi)
            - 0.5 * (dof + d) * np.log1p(maha / dof))


def builtin_target(kind, d, c=2.0):
    """One of the built-in targets.

    Parameters
    ----------
    kind : {"ewgmm", "imbalanced_gmm", "ewsmm"}
    d : int
    c : float, optional
        Normaliser; defaults to 2.
    """
    if kind not in BUILTIN_KINDS:
        raise ConfigError(f"unknown target kind {kind!r}; expected one of {sorted(BUILTIN_KINDS)}")
    d = int(d)
    if d < 1:
        raise ConfigError("target dimension must be at least 1")
    if not c > 0:
        raise ConfigError("normaliser c must be positive")
    u = np.ones(d)
    log_c = np.log(c)
    if kind == "ewgmm":
        centers, wts = [-2 * u, 2 * u], np.array([0.5, 0.5])
        comp = gaussian_logpdf_identity
        true_mean, flag = np.zeros(d), None
    elif kind == "imbalanced_gmm":
        centers, wts = [-2 * u, 2 * u, u], np.array([0.35, 0.25, 0.4])
        comp = gaussian_logpdf_identity
        true_mean, flag = 0.2 * u, None
    else:
        centers, wts = [-2 * u, 2 * u], np.array([0.5, 0.5])
        comp = lambda y, m: student_logpdf_identity(y, m, 2.0)
        true_mean, flag = np.zeros(d), "symmetry"
    log_w = np.log(wts)

    def log_density(y):
        parts = np.stack([comp(y, m) for m in centers], axis=1)
        return log_c + logsumexp(parts + log_w[None, :], axis=1)

    return Target(log_density, d, normalizer=float(c), true_mean=true_mean,
                  label=kind, mean_flag=flag)


def load_grid_target(path):
    """Target tabulated on a rectangular grid in a CSV file.

    The header is ``x1,...,xd,logp`` and rows are sorted lexicographically
    by coordinates (last coordinate varying fastest).  Inside the grid box
    ``log p`` is interpolated linearly; outside it is ``-inf`` and the
    target's :attr:`Target.outside` counter is incremented.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read grid target {path}: {exc}") from exc
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise ConfigError("grid target needs a header and at least one row")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header != [f"x{i + 1}" for i in range(d)] + ["logp"]:
        raise ConfigError("grid header must read x1,...,xd,logp")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise ConfigError(f"malformed grid row: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != d + 1:
        raise ConfigError("every grid row must have d + 1 fields")
    if not np.all(np.isfinite(data)):
        raise ConfigError("grid contains non-finite values")
    coords, values = data[:, :d], data[:, d]
    axes = []
    for a in range(d):
        ax = np.unique(coords[:, a])
        axes.append(ax)
    shape = tuple(len(ax) for ax in axes)
    if int(np.prod(shape)) != len(data):
        raise ConfigError("grid is not a full rectangular tensor grid")
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    if not np.array_equal(mesh, coords):
        raise ConfigError("grid rows are not sorted lexicographically or axes are not monotone")
    table = values.reshape(shape)
    live = [a for a in range(d) if shape[a] > 1]
    if live:
        interp = RegularGridInterpolator([axes[a] for a in live],
                                         table.reshape([shape[a] for a in live]),
                                         method="linear", bounds_error=False, fill_value=None)
    lo = np.array([ax[0] for ax in axes])
    hi = np.array([ax[-1] for ax in axes])
    holder = {}

    def log_density(y):
        inside = np.all((y >= lo) & (y <= hi), axis=1)
        out = np.full(y.shape[0], -np.inf)
        if np.any(inside):
            out[inside] = interp(y[inside][:, live]) if live else table.ravel()[0]
        n_out = int((~inside).sum())
        if n_out:
            target = holder["target"]
            with target._lock:
                target.outside += n_out
        return out

    target = Target(log_density, d, label=str(path))
    holder["target"] = target
    return target
