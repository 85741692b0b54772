"""Block detection: normalised spectral clustering with modularity-selected block count."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from netdex.graph import Network
from netdex.models import BlockPartition

DEFAULT_KMEANS_RESTARTS = 20
MAX_LLOYD_ITERATIONS = 300


class ClusteringError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    """First ``kappa`` eigenvectors of ``L_rw`` (columns), eigenvalues ascending."""

    U: np.ndarray
    eigenvalues: np.ndarray

    @property
    def kappa(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class ModularityCurve:
    entries: list[tuple[int, float, BlockPartition]]
    argmax_kappa: int

    def rows(self) -> list[tuple[int, float]]:
        return [(k, q) for k, q, _ in self.entries]


def rw_spectrum(net: Network, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of ``I - D^{-1} A`` via the symmetric normalised Laplacian.

    Eigenvectors are mapped back with ``D^{-1/2}``, scaled to unit norm, and
    signed so that their largest-magnitude entry is positive.
    """
    d = net.degrees.astype(float)
    if np.any(d == 0):
        raise ClusteringError("spectral embedding needs all degrees positive")
    s = 1.0 / np.sqrt(d)
    L_sym = np.eye(net.n) - s[:, None] * net.adjacency * s[None, :]
    try:
        w, V = scipy.linalg.eigh(L_sym)
    except np.linalg.LinAlgError as exc:
        raise ClusteringError(f"eigensolver failed: {exc}") from exc
    residual = np.abs(L_sym @ V - V * w).max()
    if residual > tol * max(1.0, np.abs(w).max()) * net.n:
        raise ClusteringError(f"eigensolver residual {residual:.3g} above tolerance")
    U = s[:, None] * V
    U /= np.linalg.norm(U, axis=0)
    pivot = np.argmax(np.abs(U), axis=0)
    U *= np.sign(U[pivot, np.arange(U.shape[1])])
    return w, U


def spectral_embedding(net: Network, kappa: int, spectrum=None) -> SpectralEmbedding:
    if not 2 <= kappa <= net.n // 2:
        raise ValueError(f"kappa must lie in 2..{net.n // 2}, got {kappa}")
    w, U = spectrum if spectrum is not None else rw_spectrum(net)
    return SpectralEmbedding(U[:, :kappa].copy(), w[:kappa].copy())


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (points**2).sum(1)[:, None] - 2 * points @ centroids.T + (centroids**2).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _maximin_init(points: np.ndarray, kappa: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(points.shape[0]))]
    nearest = _sq_dists(points, points[chosen])[:, 0]
    for _ in range(1, kappa):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, _sq_dists(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int):
    n, kappa = points.shape[0], centroids.shape[0]
    labels = None
    for _ in range(max_iter):
        dist = _sq_dists(points, centroids)
        new = np.argmin(dist, axis=1)
        # empty clusters take the point farthest from its own centroid
        for c in range(kappa):
            if np.any(new == c):
                continue
            sizes = np.bincount(new, minlength=kappa)
            own = dist[np.arange(n), new]
            own = np.where(sizes[new] > 1, own, -1.0)
            j = int(np.argmax(own))
            new[j] = c
            centroids[c] = points[j]
            dist[:, c] = _sq_dists(points, points[[j]])[:, 0]
        for c in range(kappa):
            centroids[c] = points[new == c].mean(axis=0)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    labels = new
    wcss = float(((points - centroids[labels]) ** 2).sum())
    return labels, centroids, wcss


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters ``1..k`` in order of first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    mapping = np.empty(order.size, dtype=np.int64)
    mapping[order] = np.arange(1, order.size + 1)
    _, inverse = np.unique(labels, return_inverse=True)
    return mapping[inverse]


def kmeans_fit(
    points: np.ndarray,
    kappa: int,
    seed: int = 0,
    restarts: int = DEFAULT_KMEANS_RESTARTS,
    max_iter: int = MAX_LLOYD_ITERATIONS,
) -> tuple[np.ndarray, float]:
    """Best-of-``restarts`` Lloyd k-means; returns (labels 1..kappa, WCSS)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not 1 <= kappa <= n:
        raise ValueError(f"need 1 <= kappa <= {n}")
    rng = np.random.default_rng(seed)
    best_labels, best_wcss = None, np.inf
    for _ in range(max(1, restarts)):
        centroids = _maximin_init(points, kappa, rng)
        labels, _, wcss = _lloyd(points, centroids, max_iter)
        if wcss < best_wcss - 1e-12 * max(1.0, best_wcss if np.isfinite(best_wcss) else 0.0):
            best_labels, best_wcss = labels, wcss
    return canonical_labels(best_labels), best_wcss


def kmeans(
    points: np.ndarray,
    kappa: int,
    seed: int = 0,
    restarts: int = DEFAULT_KMEANS_RESTARTS,
) -> np.ndarray:
    return kmeans_fit(points, kappa, seed, restarts)[0]


def modularity(net: Network, labels) -> float:
    """Newman modularity ``Q`` of a vertex partition."""
    labels = np.asarray(labels.labels if isinstance(labels, BlockPartition) else labels)
    two_l = float(net.degrees.sum())
    _, groups = np.unique(labels, return_inverse=True)
    k = groups.max() + 1
    onehot = np.zeros((net.n, k))
    onehot[np.arange(net.n), groups] = 1.0
    within = np.einsum("jc,jh,hc->", onehot, net.adjacency.astype(float), onehot)
    degree_sums = onehot.T @ net.degrees.astype(float)
    return within / two_l - float((degree_sums**2).sum()) / two_l**2


def select_blocks(
    net: Network,
    kappa_min: int = 2,
    kappa_max: int | None = None,
    seed: int = 0,
    restarts: int = DEFAULT_KMEANS_RESTARTS,
) -> tuple[BlockPartition, ModularityCurve]:
    """Spectral partitions for each ``kappa`` in range; keep the one with largest ``Q``.

    ``kappa`` uses k-means seed ``seed + kappa``. Ties go to the smaller ``kappa``.
    """
    if kappa_max is None:
        kappa_max = net.n // 2
    if not 2 <= kappa_min <= kappa_max <= net.n // 2:
        raise ValueError(f"need 2 <= kappa_min <= kappa_max <= {net.n // 2}")
    spectrum = rw_spectrum(net)
    entries = []
    best_k, best_q, best_part = None, -np.inf, None
    for kappa in range(kappa_min, kappa_max + 1):
        emb = spectral_embedding(net, kappa, spectrum)
        labels = kmeans(emb.U, kappa, seed=seed + kappa, restarts=restarts)
        part = BlockPartition(labels)
        q = modularity(net, labels)
        entries.append((kappa, q, part))
        if q > best_q + 1e-12:
            best_k, best_q, best_part = kappa, q, part
    return best_part, ModularityCurve(entries, best_k)
