"""Undirected, unweighted, connected graphs and their edge-list format."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Invalid graph input (self-loop, disconnected, malformed file, ...)."""


@dataclass(frozen=True, eq=False)
class Network:
    """An immutable simple graph on vertices ``0..n-1``.

    ``vertex_ids`` keeps the identifiers used in the source file, in order of
    first appearance, so that outputs can be written back in the caller's ids.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    vertex_ids: tuple[int, ...] = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple[int, int]],
        vertex_ids: Sequence[int] | None = None,
        require_connected: bool = True,
    ) -> "Network":
        """Build a network from ``(u, v)`` pairs of dense 0-based indices.

        Duplicate edges (in either orientation) are merged.
        """
        pairs = set()
        n = 0
        for u, v in edges:
            u, v = int(u), int(v)
            if u < 0 or v < 0:
                raise GraphError(f"negative vertex index in edge ({u}, {v})")
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            pairs.add((min(u, v), max(u, v)))
            n = max(n, u + 1, v + 1)
        if vertex_ids is not None:
            if len(vertex_ids) < n:
                raise GraphError("fewer vertex ids than vertices")
            n = len(vertex_ids)
        if n == 0:
            raise GraphError("graph has no edges")
        adjacency = np.zeros((n, n), dtype=np.int64)
        for u, v in pairs:
            adjacency[u, v] = adjacency[v, u] = 1
        adjacency.setflags(write=False)
        degrees = adjacency.sum(axis=1)
        degrees.setflags(write=False)
        ids = tuple(range(n)) if vertex_ids is None else tuple(int(i) for i in vertex_ids)
        net = cls(n=n, edges=tuple(sorted(pairs)), adjacency=adjacency, degrees=degrees, vertex_ids=ids)
        if require_connected and not net.is_connected():
            raise GraphError(
                f"graph is disconnected ({net._reachable_from_zero()} of {n} vertices reachable)"
            )
        return net

    def neighbours(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[j])

    def _reachable_from_zero(self) -> int:
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            j = queue.popleft()
            for h in np.flatnonzero(self.adjacency[j]):
                if not seen[h]:
                    seen[h] = True
                    queue.append(h)
        return int(seen.sum())

    def is_connected(self) -> bool:
        return self._reachable_from_zero() == self.n

    def index_of(self, vertex_id: int) -> int:
        return self._id_index()[vertex_id]

    def _id_index(self) -> dict[int, int]:
        cache = self.__dict__.get("_id_cache")
        if cache is None:
            cache = {v: i for i, v in enumerate(self.vertex_ids)}
            object.__setattr__(self, "_id_cache", cache)
        return cache

    def permuted(self, order: Sequence[int]) -> "Network":
        """Relabel so that new vertex ``i`` is old vertex ``order[i]``."""
        inverse = np.empty(self.n, dtype=int)
        inverse[np.asarray(order)] = np.arange(self.n)
        edges = [(inverse[u], inverse[v]) for u, v in self.edges]
        ids = [self.vertex_ids[k] for k in order]
        return Network.from_edges(edges, vertex_ids=ids)


def load_edge_list(path: str | Path) -> Network:
    """Read a whitespace-separated edge list.

    Lines starting with ``#`` and blank lines are skipped. Vertex ids are
    arbitrary nonnegative integers, compacted to ``0..n-1`` in order of first
    appearance.
    """
    path = Path(path)
    ids: dict[int, int] = {}
    edges: list[tuple[int, int]] = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected two vertex ids, got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: non-integer vertex id in {line!r}") from None
            if u < 0 or v < 0:
                raise GraphError(f"{path}:{lineno}: negative vertex id in {line!r}")
            if u == v:
                raise GraphError(f"{path}:{lineno}: self-loop at vertex {u}")
            for w in (u, v):
                if w not in ids:
                    ids[w] = len(ids)
            edges.append((ids[u], ids[v]))
    if not edges:
        raise GraphError(f"{path}: empty edge list")
    return Network.from_edges(edges, vertex_ids=list(ids))


def write_edge_list(net: Network, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write(f"# n={net.n} l={net.n_edges}\n")
        for u, v in net.edges:
            fh.write(f"{net.vertex_ids[u]} {net.vertex_ids[v]}\n")


def normalized_laplacian_rw(net: Network) -> np.ndarray:
    """Random-walk Laplacian ``I - D^{-1} A``."""
    d = net.degrees.astype(float)
    if np.any(d == 0):
        raise GraphError("random-walk Laplacian needs all degrees positive")
    return np.eye(net.n) - net.adjacency / d[:, None]


def is_regular(net: Network) -> bool:
    return bool(np.all(net.degrees == net.degrees[0]))
