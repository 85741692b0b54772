import itertools
import math

import numpy as np
import pytest

from netdex.generators import bridged_cliques, cycle_graph, path_graph, random_connected_graph
from netdex.models import BlockPartition, Design, Model, ModelSpec
from netdex.optimality import CriterionEvaluator
from netdex.search import (
    SearchError,
    exhaustive_search,
    find_optimal_design,
    pen_search,
)

from conftest import random_instance


def brute_minimum(net, blocks, m, model, criterion):
    ev = CriterionEvaluator(net, blocks, m, model, criterion)
    vals = [ev.value_from_information_eigh(ev.design_matrix(np.array(a)).T @ ev.design_matrix(np.array(a)))
            for a in itertools.product(range(m), repeat=ev.n)]
    return float(np.min(vals))


def test_p4_crm_optimum():
    res = exhaustive_search(path_graph(4), None, 2, "crm")
    assert res.best_value == pytest.approx(1.0, abs=1e-12)
    assert sorted(res.best_design.replication()) == [2, 2]
    # ties break to the lexicographically smallest assignment
    assert res.best_design.assignment.tolist() == [1, 1, 2, 2]


@pytest.mark.parametrize("model, criterion", [("lnm", "phi1"), ("nbm", "phi2"), ("rbm", "phi1")])
def test_exhaustive_matches_brute_force(model, criterion):
    net, blocks = random_instance(np.random.default_rng(17), (7, 8))
    res = exhaustive_search(net, blocks, 2, model, criterion)
    assert res.best_value == pytest.approx(brute_minimum(net, blocks, 2, model, criterion), rel=1e-10)
    ev = CriterionEvaluator(net, blocks, 2, model, criterion)
    assert res.best_value == pytest.approx(ev.value(res.best_design.assignment - 1), rel=1e-12)


def test_cycle_constrained_lnm_pen_reaches_exhaustive():
    spec = ModelSpec(Model.LNM, gamma_constraint=True)
    ex = exhaustive_search(cycle_graph(6), None, 2, spec)
    pen = pen_search(cycle_graph(6), None, 2, spec, restarts=20, seed=0)
    assert pen.best_value == pytest.approx(ex.best_value, abs=1e-10)


def test_cycle_unconstrained_lnm_has_no_identifiable_design():
    with pytest.raises(SearchError):
        exhaustive_search(cycle_graph(6), None, 2, "lnm")
    with pytest.raises(SearchError, match="non-singular"):
        pen_search(cycle_graph(6), None, 2, "lnm", restarts=3)


def test_all_singular_instance():
    # one unit per block: treatment and block indicators coincide
    with pytest.raises(SearchError, match="no non-singular design"):
        exhaustive_search(path_graph(2), BlockPartition([1, 2]), 2, "nbm")


def test_budget():
    with pytest.raises(SearchError, match="budget"):
        exhaustive_search(path_graph(30), None, 2, "crm")


def test_three_treatments_pen_vs_exhaustive():
    net, blocks = random_instance(np.random.default_rng(5), (7, 7))
    ex = exhaustive_search(net, blocks, 3, "nbm", "phi1")
    pen = pen_search(net, blocks, 3, "nbm", "phi1", restarts=20)
    assert pen.best_value >= ex.best_value - 1e-10
    assert pen.best_value == pytest.approx(ex.best_value, abs=1e-10)
    assert set(pen.best_design.assignment.tolist()) == {1, 2, 3}


def test_pen_trace_is_monotone_per_restart():
    net, blocks = random_instance(np.random.default_rng(8), (12, 14))
    res = pen_search(net, blocks, 2, "nbm", "phi1", restarts=8, seed=3)
    for r in range(8):
        values = [v for rr, _, v in res.trace if rr == r]
        finite = [v for v in values if math.isfinite(v)]
        assert all(b <= a + 1e-12 for a, b in zip(finite, finite[1:]))
    assert res.best_value == min(s["value"] for s in res.restarts)


def test_pen_is_deterministic_across_worker_counts():
    net = bridged_cliques([5, 6, 5], bridges=2)
    blocks = BlockPartition(np.repeat([1, 2, 3], [5, 6, 5]))
    a = pen_search(net, blocks, 2, "nbm", "phi2", restarts=6, seed=42, workers=1)
    b = pen_search(net, blocks, 2, "nbm", "phi2", restarts=6, seed=42, workers=4)
    assert a.best_design == b.best_design and a.best_value == b.best_value
    assert [s["value"] for s in a.restarts] == [s["value"] for s in b.restarts]


def test_pen_incremental_value_matches_full_recompute():
    rng = np.random.default_rng(99)
    net = random_connected_graph(20, 0.2, rng)
    res = pen_search(net, None, 3, "lnm", "phi2", restarts=4, seed=1)
    ev = CriterionEvaluator(net, None, 3, "lnm", "phi2")
    assert res.best_value == pytest.approx(ev.value(res.best_design.assignment - 1), rel=1e-12)


def test_find_optimal_design_dispatch():
    net = path_graph(6)
    assert find_optimal_design(net, None, 2, "crm").method == "exhaustive"
    assert find_optimal_design(net, None, 2, "crm", exhaustive_limit=10).method == "pen"
    with pytest.raises(ValueError):
        find_optimal_design(net, None, 2, "crm", method="anneal")


def test_design_equality():
    assert Design([1, 2], 2) == Design(np.array([1, 2]), 2)


def test_pen_results_are_single_flip_local_minima():
    net, blocks = random_instance(np.random.default_rng(21), (9, 10))
    ev = CriterionEvaluator(net, blocks, 3, "nbm", "phi1")
    res = pen_search(net, blocks, 3, "nbm", "phi1", restarts=4, seed=2)
    a = res.best_design.assignment - 1
    for j in range(a.size):
        for t in range(3):
            if t != a[j]:
                b = a.copy()
                b[j] = t
                assert ev.value(b) >= res.best_value - 1e-10


def test_warm_start_never_worse_than_its_start():
    net, blocks = random_instance(np.random.default_rng(77), (14, 16))
    ev = CriterionEvaluator(net, blocks, 2, "nbm", "phi2")
    start = Design(np.random.default_rng(0).permutation(np.arange(net.n) % 2) + 1, 2)
    res = pen_search(net, blocks, 2, "nbm", "phi2", restarts=1, seed=0, initial_designs=[start])
    assert res.restarts_used == 2 and res.restarts[1]["seed"] is None
    assert res.restarts[1]["value"] <= ev.value(start.assignment - 1)
    with pytest.raises(ValueError):
        pen_search(net, blocks, 2, "nbm", initial_designs=[Design([1, 2], 2)])
