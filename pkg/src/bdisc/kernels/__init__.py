"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The native extension is preferred when it was built; setting the
environment variable ``BDISC_PURE_PYTHON=1`` before import forces the
fallback (useful for debugging and for the backend benchmark). Both
backends implement identical semantics; see ``benchmarks/bench_kernels.py``
for a speed comparison.
"""

import os

import numpy as np

from bdisc.kernels import pykern

if os.environ.get("BDISC_PURE_PYTHON", "") not in ("", "0"):
    _impl = pykern
    BACKEND = "python"
else:
    try:
        from bdisc.kernels import _native as _impl

        BACKEND = "native"
    except ImportError:
        _impl = pykern
        BACKEND = "python"


def _c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def sq_dists(x):
    """Pairwise squared Euclidean distances of the rows of ``x``."""
    return _impl.sq_dists(_c64(x))


def tsne_forces(y, p_grad, p_kl):
    """Exact t-SNE gradient on layout ``y`` plus KL divergence vs ``p_kl``."""
    return _impl.tsne_forces(_c64(y), _c64(p_grad), _c64(p_kl))


def mixture_logpdf(queries, supports, a00, a10, a11, log_norm):
    """Equal-weight Gaussian mixture log-density at each query point."""
    return _impl.mixture_logpdf(_c64(queries), _c64(supports), a00, a10, a11, log_norm)


__all__ = ["BACKEND", "sq_dists", "tsne_forces", "mixture_logpdf", "pykern"]
