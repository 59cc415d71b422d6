"""Pure-numpy implementations of the hot kernels.

Mirrors the semantics of the native extension exactly; floating-point
results may differ from it in the last few ulps because summation order
differs.
"""

import numpy as np

_QMIN = 1e-12


def sq_dists(x):
    """Pairwise squared Euclidean distances of the rows of ``x`` (N x D)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d

def tsne_forces(y, p_grad, p_kl):
    """One exact t-SNE force evaluation on the 2D layout ``y``.

    Student-t (df=1) kernel: num_ij = 1/(1 + ||y_i-y_j||^2), q_ij = num_ij
    normalized over ordered pairs. Returns the gradient of the KL objective
    built from ``p_grad`` (possibly exaggerated) and, separately, the KL
    divergence of q from ``p_kl`` (the true affinities).
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    num = 1.0 / (1.0 + sq_dists(y))
    np.fill_diagonal(num, 0.0)
    s = num.sum()
    q = num / s
    w = (p_grad - q) * num
    grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
    mask = p_kl > 0.0
    kl = float(np.sum(p_kl[mask] * np.log(p_kl[mask] / np.maximum(q[mask], _QMIN))))
    return grad, kl

def mixture_logpdf(queries, supports, a00, a10, a11, log_norm):
    """Log-density of an equal-weight Gaussian mixture at each query point.

    Every component has the same 2x2 covariance H; ``a00/a10/a11`` are the
    entries of inv(L) for H = L L^T (lower triangular), and ``log_norm``
    collects -log(M) - log(2*pi) - log(det L).
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    supports = np.ascontiguousarray(supports, dtype=np.float64)
    out = np.empty(len(queries))
    step = 512
    for lo in range(0, len(queries), step):
        chunk = queries[lo : lo + step]
        dx = chunk[:, None, 0] - supports[None, :, 0]
        dy = chunk[:, None, 1] - supports[None, :, 1]
        u1 = a00 * dx
        u2 = a10 * dx + a11 * dy
        e = -0.5 * (u1 * u1 + u2 * u2)
        m = e.max(axis=1)
        out[lo : lo + step] = m + np.log(np.exp(e - m[:, None]).sum(axis=1))
    return out + log_norm
