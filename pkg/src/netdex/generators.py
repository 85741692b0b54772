"""Small deterministic graph fixtures used by tests and the bundled examples."""

from __future__ import annotations

import itertools

import numpy as np

from netdex.graph import Network


def path_graph(n: int) -> Network:
    return Network.from_edges((j, j + 1) for j in range(n - 1))


def cycle_graph(n: int) -> Network:
    return Network.from_edges((j, (j + 1) % n) for j in range(n))


def complete_graph(n: int) -> Network:
    return Network.from_edges(itertools.combinations(range(n), 2))


def star_graph(leaves: int) -> Network:
    """Star with centre ``0`` and leaves ``1..leaves``."""
    return Network.from_edges((0, j) for j in range(1, leaves + 1))


def bridged_cliques(sizes: list[int], bridges: int = 1) -> Network:
    """Cliques joined in a chain, ``bridges`` edges between consecutive cliques."""
    edges = []
    starts = np.cumsum([0] + list(sizes))
    for k, size in enumerate(sizes):
        base = starts[k]
        edges += [(base + a, base + b) for a, b in itertools.combinations(range(size), 2)]
    for k in range(len(sizes) - 1):
        for b in range(bridges):
            u = starts[k] + (b % sizes[k])
            v = starts[k + 1] + (b % sizes[k + 1])
            edges.append((u, v))
    return Network.from_edges(edges)


def random_connected_graph(n: int, p: float, rng: np.random.Generator) -> Network:
    """Random spanning tree plus independent extra edges with probability ``p``."""
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        u, v = order[k], order[rng.integers(k)]
        edges.add((min(u, v), max(u, v)))
    for u, v in itertools.combinations(range(n), 2):
        if (u, v) not in edges and rng.random() < p:
            edges.add((u, v))
    return Network.from_edges(sorted(edges))


def random_graph_with_edges(n: int, n_edges: int, rng: np.random.Generator) -> Network:
    """Connected graph with exactly ``n_edges`` edges (spanning tree + fill)."""
    if not n - 1 <= n_edges <= n * (n - 1) // 2:
        raise ValueError("edge count out of range for a connected simple graph")
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        u, v = order[k], order[rng.integers(k)]
        edges.add((min(u, v), max(u, v)))
    rest = [e for e in itertools.combinations(range(n), 2) if e not in edges]
    picks = rng.choice(len(rest), size=n_edges - len(edges), replace=False)
    edges.update(rest[i] for i in picks)
    return Network.from_edges(sorted(edges))
