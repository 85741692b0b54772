import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netdex.bias import (
    NonNestedModelError,
    SingularReducedModelError,
    average_bias,
    batch_bias,
    bias_matrix,
    bias_vs_edge_proportion,
    closed_form_bias,
    edges_between_treatments,
    generalized_inverse_bias,
)
from netdex.generators import complete_graph, path_graph, random_connected_graph
from netdex.models import BlockPartition, Design, ModelSpec, build_design_matrix, parameter_layout
from netdex.randomization import Sampler, enumerate_balanced

from oracles import lsq_refit_bias


def refit_W(X, keep):
    p = X.shape[1]
    return np.column_stack([lsq_refit_bias(X, np.eye(p)[c], keep) for c in range(p)])


def random_case(seed, n_range=(6, 12)):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(*n_range))
    net = random_connected_graph(n, 0.35, rng)
    blocks = BlockPartition(np.concatenate([[1, 1, 2, 2], rng.integers(1, 3, n - 4)]))
    design = Design(np.concatenate([[1, 2, 1, 2], rng.integers(1, 3, n - 4)]), 2)
    return rng, net, blocks, design


@pytest.mark.parametrize("model", ["crm", "rbm", "lnm", "nbm"])
def test_assumed_equals_true_gives_zero(model):
    _, net, blocks, design = random_case(1)
    W = bias_matrix(net, blocks, design, model, model)
    assert np.all(W.W_coeff == 0)


@pytest.mark.parametrize("assumed, true", [("crm", "lnm"), ("crm", "rbm"), ("rbm", "nbm"), ("lnm", "nbm"), ("crm", "nbm")])
def test_nested_true_inside_assumed_gives_zero(assumed, true):
    _, net, blocks, design = random_case(2)
    W = bias_matrix(net, blocks, design, true, assumed)
    assert np.all(W.W_coeff == 0)


@pytest.mark.parametrize("a, b", [("rbm", "lnm"), ("lnm", "rbm")])
def test_non_nested_pairs(a, b):
    _, net, blocks, design = random_case(3)
    with pytest.raises(NonNestedModelError, match="non-nested model"):
        bias_matrix(net, blocks, design, a, b)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), assumed=st.sampled_from(["crm", "rbm", "lnm"]))
def test_closed_form_matches_refit(seed, assumed):
    rng, net, blocks, design = random_case(seed)
    X = build_design_matrix(net, blocks, design, "nbm").X
    labels = parameter_layout(ModelSpec("nbm"), 2, blocks.kappa).column_labels
    kept = set(parameter_layout(ModelSpec(assumed), 2, blocks.kappa).column_labels)
    keep = [i for i, lab in enumerate(labels) if lab in kept]
    if np.linalg.matrix_rank(X[:, keep]) < len(keep):
        with pytest.raises(SingularReducedModelError):
            bias_matrix(net, blocks, design, assumed, "nbm")
        return
    W = bias_matrix(net, blocks, design, assumed, "nbm")
    np.testing.assert_allclose(W.W_general, W.W_coeff, atol=1e-8)
    beta = rng.normal(size=X.shape[1])
    np.testing.assert_allclose(W.bias(beta), lsq_refit_bias(X, beta, keep), atol=1e-8)
    gammas = [i for i, lab in enumerate(labels) if lab.startswith("gamma")]
    if assumed != "lnm":
        np.testing.assert_array_equal(W.W_coeff[np.ix_(gammas, gammas)], -np.eye(len(gammas)))


def test_generalized_inverse_route_directly():
    _, net, blocks, design = random_case(5)
    X = build_design_matrix(net, blocks, design, "nbm").X
    keep, omit = [0, 1, 2], [3, 4]
    np.testing.assert_allclose(closed_form_bias(X, keep, omit), generalized_inverse_bias(X, keep, omit), atol=1e-10)


def test_average_bias_k4_by_enumeration():
    net = complete_graph(4)
    designs = enumerate_balanced(4, 2)
    assert designs.shape[0] == 6
    Ws = []
    for d in designs:
        X = build_design_matrix(net, None, Design(d + 1, 2), "lnm").X
        Ws.append(refit_W(X, [0, 1]))
    avg = average_bias(net, None, "crm", "lnm")
    assert avg.designs == 6 and avg.mode == "enumerate"
    np.testing.assert_allclose(avg.W_mean, np.mean(Ws, axis=0), atol=1e-12)


def test_average_bias_mc_is_deterministic():
    net = random_connected_graph(30, 0.1, np.random.default_rng(0))
    blocks = BlockPartition(np.arange(30) % 3 + 1)
    s = Sampler("mc", count=500, seed=9)
    a = average_bias(net, blocks, "rbm", "nbm", sampler=s)
    b = average_bias(net, blocks, "rbm", "nbm", sampler=s)
    assert a.mode == "mc" and np.array_equal(a.W_mean, b.W_mean)


def test_batch_matches_single():
    _, net, blocks, _ = random_case(6)
    designs = enumerate_balanced(net.n, 2, blocks)[:50]
    bb = batch_bias(net, blocks, designs, 2, ModelSpec("rbm"), ModelSpec("nbm"))
    for W, d in zip(bb.W, bb.designs):
        np.testing.assert_allclose(W, bias_matrix(net, blocks, Design(d + 1, 2), "rbm", "nbm").W_coeff, atol=1e-10)


def test_edges_between_treatments():
    net = path_graph(4)
    assert edges_between_treatments(net, np.array([[0, 0, 1, 1], [0, 1, 0, 1]])).tolist() == [1, 3]


def test_p4_bias_study_by_hand():
    # assumed CRM, true LNM with gamma = 1: tau1 bias = mean degree of T1 units minus that of T2 units
    net = path_graph(4)
    study = bias_vs_edge_proportion(net, None, "lnm")
    assert study.total == 6 and sum(g.count for g in study.groups) == 6
    by_l12 = {g.l12: g for g in study.groups}
    assert sorted(by_l12) == [1, 2, 3]
    assert {k: g.count for k, g in by_l12.items()} == {1: 2, 2: 2, 3: 2}
    d = net.degrees
    hand = {}
    for a in itertools.combinations(range(4), 2):
        t1 = np.zeros(4, bool)
        t1[list(a)] = True
        l12 = sum(t1[u] != t1[v] for u, v in net.edges)
        hand.setdefault(l12, []).append(d[t1].mean() - d[~t1].mean())
    for k, vals in hand.items():
        assert by_l12[k].mean_tau_bias == pytest.approx(np.mean(vals), abs=1e-12)
        assert by_l12[k].proportion == Fraction(k, 3)
    near = study.nearest_half()
    assert {g.l12 for g in near} == {1, 2}
    assert all(g.mean_tau_bias == pytest.approx(0, abs=1e-12) for g in near)
