"""Exact (O(N^2)) t-SNE to 2D for density estimation and scatter figures.

Conditional-probability precisions come from a per-row bisection on the
target perplexity; the low-dimensional kernel is Student-t with one degree
of freedom; optimization is plain gradient descent with momentum, the
standard adaptive per-dimension gains, early exaggeration, and a
deterministic PCA initialization. Labeled and unlabeled embeddings are
projected jointly so downstream densities share one 2D space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bdisc import kernels
from bdisc.encoder import EmbeddingSet
from bdisc.errors import ValidationError

_MIN_GAIN = 0.01


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    n_iter: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    init_std: float = 1e-4
    search_tol: float = 1e-5
    search_max_steps: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("perplexity", "n_iter", "early_exaggeration", "learning_rate", "init_std"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


@dataclass
class Projection2D:
    coords: np.ndarray
    ids: list[str]
    kl_divergence: float
    kl_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not np.all(np.isfinite(self.coords)):
            raise ValidationError("non-finite projection coordinates")
        if len(self.coords) != len(self.ids):
            raise ValidationError("coordinate rows and ids must align")


def perplexity_search(sq_distances, target_perplexity, tol=1e-5, max_steps=64):
    """Find the Gaussian precision matching a target perplexity for one row.

    ``sq_distances`` holds squared Euclidean distances to all *other*
    points. Bisection runs on beta = 1/(2 sigma^2) until the entropy of the
    conditional distribution is within ``tol`` (in nats) of log(target).
    Degenerate all-equal rows yield the uniform distribution (perplexity
    N-1 for any sigma) and simply exhaust the step budget.

    Returns ``(sigma, probs)`` with probs aligned to the input row.
    """
    d = np.asarray(sq_distances, dtype=np.float64)
    n_others = len(d)
    if target_perplexity >= n_others + 1:
        raise ValidationError("perplexity must be < N")
    target_entropy = np.log(target_perplexity)

    d = d - d.min()
    beta, beta_lo, beta_hi = 1.0, 0.0, np.inf

    def entropy_probs(b):
        p = np.exp(-d * b)
        s = p.sum()
        if s <= 0.0:
            p = np.zeros_like(d)
            p[np.argmin(d)] = 1.0
            return 0.0, p
        p /= s
        nz = p > 0.0
        h = float(-(p[nz] * np.log(p[nz])).sum())
        return h, p

    h, probs = entropy_probs(beta)
    for _ in range(max_steps):
        diff = h - target_entropy
        if abs(diff) <= tol:
            break
        if diff > 0:  # entropy too high -> sharpen
            beta_lo = beta
            beta = beta * 2.0 if np.isinf(beta_hi) else 0.5 * (beta_lo + beta_hi)
        else:
            beta_hi = beta
            beta = beta / 2.0 if beta_lo == 0.0 else 0.5 * (beta_lo + beta_hi)
        h, probs = entropy_probs(beta)
    return float(np.sqrt(0.5 / beta)), probs


def conditional_probabilities(x, cfg: TsneConfig):
    """Row-conditional affinities p_{j|i} at the configured perplexity."""
    n = len(x)
    d = kernels.sq_dists(x)
    p = np.zeros((n, n))
    others = ~np.eye(n, dtype=bool)
    for i in range(n):
        _, row = perplexity_search(
            d[i][others[i]], cfg.perplexity, cfg.search_tol, cfg.search_max_steps
        )
        p[i][others[i]] = row
    return p


def joint_probabilities(x, cfg: TsneConfig):
    """Symmetrized affinities p_ij = (p_{j|i} + p_{i|j}) / 2N; total mass 1."""
    cond = conditional_probabilities(x, cfg)
    return (cond + cond.T) / (2.0 * len(cond))


def _pca_init(x, init_std):
    xc = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    components = vt[:2]
    # deterministic sign: largest-magnitude loading is positive
    for j in range(components.shape[0]):
        lead = components[j, np.argmax(np.abs(components[j]))]
        if lead < 0:
            components[j] = -components[j]
    coords = xc @ components.T
    if coords.shape[1] < 2:
        coords = np.hstack([coords, np.zeros((len(coords), 2 - coords.shape[1]))])
    scale = coords[:, 0].std()
    if scale > 0:
        coords = coords / scale * init_std
    return coords


def tsne_fit(emb: EmbeddingSet, cfg: TsneConfig) -> Projection2D:
    """Project an embedding set to 2D; deterministic for a fixed config."""
    x = emb.vectors
    n = len(x)
    if n < 5:
        raise ValidationError("t-SNE needs at least 5 points")
    if cfg.perplexity >= n:
        raise ValidationError("perplexity must be < N")

    p = joint_probabilities(x, cfg)
    y = _pca_init(x, cfg.init_std)
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_trace = []

    for it in range(cfg.n_iter):
        p_eff = p * cfg.early_exaggeration if it < cfg.exaggeration_iters else p
        grad, kl = kernels.tsne_forces(y, p_eff, p)
        if not np.all(np.isfinite(grad)):
            raise RuntimeError(f"non-finite t-SNE gradient at iteration {it}")
        kl_trace.append(kl)
        momentum = cfg.momentum_early if it < cfg.momentum_switch_iter else cfg.momentum_late
        same_dir = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_dir, gains * 0.8, gains + 0.2)
        np.maximum(gains, _MIN_GAIN, out=gains)
        velocity = momentum * velocity - cfg.learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)

    return Projection2D(coords=y, ids=list(emb.ids), kl_divergence=kl_trace[-1], kl_trace=kl_trace)
