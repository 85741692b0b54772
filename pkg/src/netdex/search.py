"""Exhaustive and point-exchange (PEN) searches for L-optimal designs."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from netdex.graph import Network
from netdex.models import BlockPartition, Design, ModelSpec, design_matrix_array
from netdex.optimality import CriterionEvaluator
from netdex.randomization import count_balanced_designs

__all__ = [
    "SearchError",
    "SearchResult",
    "count_balanced_designs",
    "exhaustive_search",
    "find_optimal_design",
    "pen_search",
]

log = logging.getLogger(__name__)

EXCHANGE_EPS = 1e-10
DEFAULT_RESTARTS = 20
DEFAULT_BUDGET = 10**7
INIT_ATTEMPTS = 100


class SearchError(RuntimeError):
    pass


@dataclass
class SearchResult:
    best_design: Design
    best_value: float
    restarts_used: int
    passes: int
    evaluations: int
    method: str
    trace: list[tuple[int, int, float]] | None = None
    restarts: list[dict] = field(default_factory=list)


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, workers)
    try:
        return max(1, int(os.environ.get("NETDEX_THREADS", "1")))
    except ValueError:
        return 1


def _tie_tol(v: float) -> float:
    return 1e-12 * max(1.0, abs(v))


def exhaustive_search(
    net: Network | None,
    blocks: BlockPartition | None,
    m: int,
    model: ModelSpec | str,
    criterion: str | np.ndarray = "phi1",
    budget: int = DEFAULT_BUDGET,
) -> SearchResult:
    """Global minimum over all ``m**n`` assignments.

    Singular designs are skipped. Ties (within ``1e-12`` relative) go to the
    lexicographically smallest assignment.
    """
    ev = CriterionEvaluator(net, blocks, m, model, criterion)
    n = ev.n
    total = m**n
    if total > budget:
        raise SearchError(f"{m}^{n} = {total} designs exceed the exhaustive budget {budget}; use pen_search")
    powers = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    chunk = max(1, 2_000_000 // max(1, n * ev.p))
    best_val, best_idx = math.inf, -1
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        designs = (idx[:, None] // powers) % m
        vals = ev.values(designs, chunk=chunk)
        k = int(np.argmin(vals))
        v = vals[k]
        if math.isfinite(v) and v < best_val - _tie_tol(best_val if math.isfinite(best_val) else v):
            tol = _tie_tol(v)
            k = int(np.flatnonzero(vals <= v + tol)[0])
            best_val, best_idx = float(vals[k]), start + k
    if best_idx < 0:
        raise SearchError("no non-singular design exists for this instance")
    assign0 = (best_idx // powers) % m
    value = ev.value(assign0)
    return SearchResult(
        best_design=Design(assign0 + 1, m),
        best_value=value,
        restarts_used=0,
        passes=0,
        evaluations=total,
        method="exhaustive",
    )


def _random_start(n: int, m: int, rng: np.random.Generator) -> np.ndarray | None:
    for _ in range(INIT_ATTEMPTS):
        a = rng.integers(m, size=n)
        if np.unique(a).size == m:
            return a
    return None


def _rows(ev: CriterionEvaluator, assign0: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Rows ``rows`` of the design matrix for ``assign0``."""
    if not ev.model.kind.has_network:
        return design_matrix_array(
            assign0[rows], ev.m, ev.model, None, ev._W[rows] if ev._W is not None else None
        )
    m = ev.m
    U = (assign0[:, None] == np.arange(m)).astype(float)
    keep = m - 1 if ev.model.gamma_constraint else m
    parts = [np.ones((rows.size, 1)), U[rows, : m - 1]]
    if ev._W is not None and ev._W.shape[1]:
        parts.append(ev._W[rows])
    parts.append(ev._A[rows] @ U[:, :keep])
    return np.concatenate(parts, axis=1)


def _pen_restart(ev: CriterionEvaluator, r: int, seed: int, keep_trace: bool, start=None) -> dict:
    n, m = ev.n, ev.m
    if start is not None:
        a = np.array(start, dtype=np.int64)
    else:
        a = _random_start(n, m, np.random.default_rng(seed + r))
    if a is None:
        return {"restart": r, "seed": seed + r, "value": math.inf, "passes": 0,
                "evaluations": 0, "assignment": None, "trace": [], "status": "no-initial-design"}
    X = ev.design_matrix(a)
    M = X.T @ X
    value = ev.value_from_information(M)
    evaluations = 1
    trace = []
    passes = 0
    improved = True
    while improved:
        improved = False
        passes += 1
        for j in range(n):
            rows = ev.changed_rows(j)
            old_rows = X[rows]
            base = M - old_rows.T @ old_rows
            current = a[j]
            best_t, best_v, best_rows = None, value, None
            for t in range(m):
                if t == current:
                    continue
                a[j] = t
                new_rows = _rows(ev, a, rows)
                v = ev.value_from_information(base + new_rows.T @ new_rows)
                evaluations += 1
                better = v < best_v - EXCHANGE_EPS if math.isfinite(best_v) else math.isfinite(v)
                if better:
                    best_t, best_v, best_rows = t, v, new_rows
            a[j] = current
            if best_t is not None:
                a[j] = best_t
                X[rows] = best_rows
                M = X.T @ X
                value = ev.value_from_information(M)
                improved = True
        if keep_trace:
            trace.append((r, passes, value))
    status = "ok" if math.isfinite(value) else "singular"
    return {"restart": r, "seed": seed + r if start is None else None, "value": value, "passes": passes,
            "evaluations": evaluations, "assignment": a.copy(), "trace": trace, "status": status}


def pen_search(
    net: Network | None,
    blocks: BlockPartition | None,
    m: int,
    model: ModelSpec | str,
    criterion: str | np.ndarray = "phi1",
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    workers: int | None = None,
    keep_trace: bool = True,
    initial_designs: list[Design] | None = None,
) -> SearchResult:
    """Point Exchange on Networks with ``restarts`` random initial designs.

    Each restart sweeps units ``0..n-1``, trying every other treatment for the
    current unit and keeping the best one if it lowers the criterion by more
    than ``1e-10``; sweeps repeat until one makes no change. Restart ``r``
    draws from ``default_rng(seed + r)``, so results do not depend on
    ``workers``. ``initial_designs`` are run as extra restarts (indices
    ``restarts, restarts + 1, ...``) from the given designs.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    ev = CriterionEvaluator(net, blocks, m, model, criterion)
    starts = [None] * restarts + [d.assignment - 1 for d in (initial_designs or [])]
    for d in initial_designs or []:
        if d.m != m or d.n != ev.n:
            raise ValueError(f"initial design must have n={ev.n} and m={m}")
    total = len(starts)
    nworkers = worker_count(workers)
    if nworkers > 1 and total > 1:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            runs = list(pool.map(lambda r: _pen_restart(ev, r, seed, keep_trace, starts[r]), range(total)))
    else:
        runs = [_pen_restart(ev, r, seed, keep_trace, starts[r]) for r in range(total)]

    best = None
    for run in runs:
        if math.isfinite(run["value"]) and (best is None or run["value"] < best["value"] - _tie_tol(best["value"])):
            best = run
    if best is None:
        statuses = {run["status"] for run in runs}
        raise SearchError(
            f"no restart reached a non-singular design ({total} restarts, statuses {sorted(statuses)}); "
            "the model may be unidentifiable on this graph (e.g. network effects on a regular graph)"
        )
    value = ev.value(best["assignment"])
    if abs(value - best["value"]) > 1e-10 * max(1.0, abs(value)):
        raise SearchError(f"tracked value {best['value']} disagrees with recomputed {value}")
    trace = [t for run in runs for t in run["trace"]] if keep_trace else None
    summary = [
        {k: run[k] for k in ("restart", "seed", "value", "passes", "evaluations", "status")}
        for run in runs
    ]
    return SearchResult(
        best_design=Design(best["assignment"] + 1, m),
        best_value=value,
        restarts_used=total,
        passes=sum(run["passes"] for run in runs),
        evaluations=sum(run["evaluations"] for run in runs),
        method="pen",
        trace=trace,
        restarts=summary,
    )


def find_optimal_design(
    net: Network | None,
    blocks: BlockPartition | None,
    m: int,
    model: ModelSpec | str,
    criterion: str | np.ndarray = "phi1",
    method: str = "auto",
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    exhaustive_limit: int = 2**16,
    initial_designs: list[Design] | None = None,
) -> SearchResult:
    """Exhaustive search for small instances, PEN otherwise (``method='auto'``).

    ``initial_designs`` only affect PEN, as extra warm-start restarts.
    """
    n = net.n if net is not None else blocks.n
    if method == "auto":
        method = "exhaustive" if m**n <= exhaustive_limit else "pen"
    if method == "exhaustive":
        return exhaustive_search(net, blocks, m, model, criterion)
    if method == "pen":
        return pen_search(net, blocks, m, model, criterion, restarts=restarts, seed=seed,
                          initial_designs=initial_designs)
    raise ValueError(f"unknown search method {method!r}")
