"""Backend selection for the batched density kernels.

The compiled extension is used when it imports cleanly; setting the
environment variable ``ALPHAMIX_PURE_PYTHON=1`` forces the numpy versions.
Both backends produce the same numbers up to floating point rounding.
"""
import os

from . import _pykernels

BACKEND = "numpy"
mahalanobis_sq = _pykernels.mahalanobis_sq
logsumexp_rows = _pykernels.logsumexp_rows

if os.environ.get("ALPHAMIX_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        _ckernels = None
    if _ckernels is not None:
        BACKEND = "cython"
        mahalanobis_sq = _ckernels.mahalanobis_sq
        logsumexp_rows = _ckernels.logsumexp_rows

__all__ = ["BACKEND", "mahalanobis_sq", "logsumexp_rows"]
