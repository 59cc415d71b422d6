"""Label-guided semi-supervised K-means with extra free clusters.

Labeled rows are hard-pinned to their own class's cluster at every
iteration; unlabeled rows go to the nearest centroid. One or more free
clusters beyond the known classes can absorb structure the labeled classes
do not explain. Fully deterministic: farthest-point initialization and
repair, lowest-index tie-breaks, no RNG anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bdisc.encoder import EmbeddingSet
from bdisc.errors import ValidationError


@dataclass
class ClusterModel:
    """Fitted model: clusters 0..n_known-1 are identified with the known
    classes via ``class_indices``; clusters n_known.. are free."""

    centroids: np.ndarray
    assignments: np.ndarray
    n_known: int
    n_free: int
    class_indices: list[int]
    iterations_run: int
    inertia: float
    inertia_trace: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.n_known + self.n_free

    def free_cluster(self) -> int:
        if self.n_free < 1:
            raise ValidationError("model has no free cluster")
        return self.n_known

    def cluster_points(self, vectors: np.ndarray, cluster: int) -> np.ndarray:
        return vectors[self.assignments == cluster]


def _sq_dist_to_centroids(x, centroids):
    # (N, K) squared Euclidean distances
    d = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", d, d)


def init_centroids(emb: EmbeddingSet, n_free: int = 1) -> np.ndarray:
    """Known-class centroids = labeled class means; free centroids by the
    farthest-point rule over unlabeled rows (ties: lowest row index)."""
    if n_free < 0:
        raise ValidationError("n_free must be >= 0")
    classes = emb.known_classes()
    if not classes:
        raise ValidationError("no labeled rows to initialize known clusters")
    x = emb.vectors
    centroids = []
    for cls in classes:
        rows = x[emb.labels == cls]
        if len(rows) == 0:
            raise ValidationError(f"class {cls} has no labeled embeddings")
        centroids.append(rows.mean(axis=0))
    centroids = np.array(centroids)

    unlabeled = x[~emb.labeled_mask]
    if n_free > len(unlabeled):
        raise ValidationError(
            f"n_free={n_free} exceeds the {len(unlabeled)} unlabeled points"
        )
    for _ in range(n_free):
        d = _sq_dist_to_centroids(unlabeled, centroids).min(axis=1)
        centroids = np.vstack([centroids, unlabeled[int(np.argmax(d))]])
    return centroids


def ss_kmeans(emb: EmbeddingSet, n_free: int = 1, max_iter: int = 300,
              tol: float = 1e-6, iteration_hook=None) -> ClusterModel:
    """Semi-supervised K-means over labeled and unlabeled embeddings.

    Per iteration: (a) assign - labeled rows pinned to their class cluster,
    unlabeled rows to the nearest centroid (ties: lowest cluster index);
    (b) update - centroid = mean of assigned rows, empty clusters re-seeded
    at the unlabeled point farthest from its assigned centroid. Stops when
    assignments are unchanged, the max centroid shift drops below ``tol``,
    or ``max_iter`` is reached. Inertia is recorded after every assignment
    step and is non-increasing.
    """
    classes = emb.known_classes()
    class_to_cluster = {c: i for i, c in enumerate(classes)}
    x = emb.vectors
    n = len(x)
    labeled_mask = emb.labeled_mask
    pinned = np.array([class_to_cluster.get(int(c), -1) for c in emb.labels])

    centroids = init_centroids(emb, n_free)
    k = len(centroids)
    assignments = np.zeros(n, dtype=int)
    prev_assignments = None
    trace: list[float] = []
    iterations = 0

    for _ in range(max_iter):
        iterations += 1
        d = _sq_dist_to_centroids(x, centroids)
        assignments = np.where(labeled_mask, pinned, d.argmin(axis=1))
        inertia = float(d[np.arange(n), assignments].sum())
        if trace and inertia > trace[-1] + 1e-9 * max(1.0, trace[-1]):
            raise RuntimeError("inertia increased between iterations")
        trace.append(inertia)
        if iteration_hook is not None:
            iteration_hook(assignments.copy(), centroids.copy(), inertia)
        if prev_assignments is not None and np.array_equal(assignments, prev_assignments):
            break
        prev_assignments = assignments.copy()

        new_centroids = centroids.copy()
        empties = []
        for c in range(k):
            members = x[assignments == c]
            if len(members) == 0:
                empties.append(c)
            else:
                new_centroids[c] = members.mean(axis=0)
        if empties:
            unlabeled_idx = np.flatnonzero(~labeled_mask)
            own = new_centroids[assignments[unlabeled_idx]]
            diffs = x[unlabeled_idx] - own
            dist_own = np.einsum("nd,nd->n", diffs, diffs)
            order = np.argsort(-dist_own, kind="stable")
            for c, pos in zip(empties, order):
                new_centroids[c] = x[unlabeled_idx[pos]]
        shift = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        if shift < tol:
            break

    return ClusterModel(
        centroids=centroids,
        assignments=assignments,
        n_known=len(classes),
        n_free=n_free,
        class_indices=classes,
        iterations_run=iterations,
        inertia=trace[-1],
        inertia_trace=trace,
    )


def withheld_accuracy(model: ClusterModel, emb: EmbeddingSet, withheld_class: int | None):
    """Fraction of withheld-class unlabeled rows assigned to the free cluster.

    Returns None for negative-control trials (no withheld class) - absence,
    not zero.
    """
    if withheld_class is None:
        return None
    if emb.truth is None:
        raise ValidationError("withheld accuracy needs hidden truth labels")
    free = model.free_cluster()
    rows = (~emb.labeled_mask) & (emb.truth == withheld_class)
    if not np.any(rows):
        raise ValidationError(f"no unlabeled rows of withheld class {withheld_class}")
    return float(np.mean(model.assignments[rows] == free))


def confusion_matrix(model: ClusterModel, emb: EmbeddingSet):
    """Counts of truth class x assigned cluster over the unlabeled pool.

    Returns ``(truth_classes, matrix)`` with one row per truth class present
    in the unlabeled pool (sorted) and one column per cluster 0..K-1.
    """
    if emb.truth is None:
        raise ValidationError("confusion matrix needs hidden truth labels")
    mask = ~emb.labeled_mask
    truth = emb.truth[mask]
    assigned = model.assignments[mask]
    classes = sorted(int(c) for c in np.unique(truth))
    matrix = np.zeros((len(classes), model.k), dtype=int)
    for row, cls in enumerate(classes):
        sel = truth == cls
        for c in range(model.k):
            matrix[row, c] = int(np.sum(assigned[sel] == c))
    return classes, matrix
