from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..embed import EmbeddingMatrix


class KMeansError(ValueError):
    pass


class KTooLargeError(KMeansError):
    pass


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    # inertia after each assignment step, in order
    history: tuple[float, ...] = field(default=())
    n_iter: int = 0

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def _sq_distances(x: np.ndarray, centroids: np.ndarray, chunk: int = 256) -> np.ndarray:
    out = np.empty((x.shape[0], centroids.shape[0]))
    for start in range(0, x.shape[0], chunk):
        diff = x[start:start + chunk, None, :] - centroids[None, :, :]
        out[start:start + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_distances(x, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a centroid already; duplicates allowed
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_distances(x, x[idx:idx + 1])[:, 0])
    return x[chosen].copy()


def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid labels (lowest index wins ties) with empty clusters
    re-seeded from the point farthest from its own centroid."""
    d2 = _sq_distances(x, centroids)
    labels = np.argmin(d2, axis=1)
    k = centroids.shape[0]
    own = d2[np.arange(x.shape[0]), labels]
    counts = np.bincount(labels, minlength=k)
    for j in range(k):
        if counts[j] > 0:
            continue
        movable = np.flatnonzero((counts[labels] > 1) & (own > 0))
        if movable.size == 0:
            break
        far = movable[np.argmax(own[movable])]
        counts[labels[far]] -= 1
        centroids[j] = x[far]
        labels[far] = j
        own[far] = 0.0
        counts[j] = 1
    return labels, own


def kmeans(
    embeddings: EmbeddingMatrix | np.ndarray,
    k: int,
    max_iter: int = 100,
    seed: int = 0,
) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeding.

    Stops when an assignment step changes no label, or after ``max_iter``
    update steps. ``history`` records the inertia after every assignment,
    which is non-increasing.
    """
    x = embeddings.rows if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise KMeansError("k must be at least 1")
    if k > n:
        raise KTooLargeError(f"k={k} exceeds the number of rows ({n})")
    if max_iter < 1:
        raise KMeansError("max_iter must be at least 1")

    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(x, k, rng)
    labels, own = _assign(x, centroids)
    history = [float(own.sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        for j in range(k):
            mask = labels == j
            if mask.any():
                centroids[j] = x[mask].mean(axis=0)
        new_labels, own = _assign(x, centroids)
        history.append(float(own.sum()))
        changed = bool(np.any(new_labels != labels))
        labels = new_labels
        if not changed:
            break

    return ClusterModel(
        k=k,
        centroids=centroids,
        labels=labels,
        inertia=history[-1],
        history=tuple(history),
        n_iter=n_iter,
    )
