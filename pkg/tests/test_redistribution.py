import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cpattn.errors import ParameterError
from cpattn.graph import CPGraph, DEFAULT_THRESHOLDS, generate_baseline, generate_cp_graph
from cpattn.mask import assign_patches
from cpattn.redistribution import apply_plan, core_capacity, rank_patches, redistribute


@st.composite
def plans(draw):
    n = draw(st.integers(2, 12))
    m = draw(st.integers(1, n))
    g = generate_cp_graph(n, m, DEFAULT_THRESHOLDS, draw(st.integers(0, 10**6)))
    P = n + draw(st.integers(0, 20))
    # few distinct values so ties are common
    alpha = draw(arrays(np.float64, P, elements=st.sampled_from([-1.0, -0.25, 0.0, 0.5, 2.0, 3.5])))
    return g, P, alpha


def top_k_oracle(alpha, K):
    """Top-K patch set by (alpha desc, index asc) via a plain sort of tuples."""
    return {i for _, i in sorted((-a, i) for i, a in enumerate(alpha))[:K]}


def test_core_capacity_examples():
    g5 = CPGraph(5, 2, np.zeros((5, 5), dtype=np.uint8))
    assert core_capacity(g5, 196) == 79
    g196 = CPGraph(196, 50, np.zeros((196, 196), dtype=np.uint8))
    assert core_capacity(g196, 196) == 50
    for m in (1, 3, 6):
        assert core_capacity(CPGraph(7, m, np.zeros((7, 7), dtype=np.uint8)), 7) == m


def test_all_ties_keep_identity():
    # identity needs core degrees non-increasing in node index
    g = generate_cp_graph(8, 2, DEFAULT_THRESHOLDS, 0)
    assert g.degrees[0] >= g.degrees[1]
    assert redistribute(np.zeros(16), g, 16).new_order == tuple(range(16))
    assert redistribute(np.zeros(9), generate_baseline("complete", 9), 9).new_order == tuple(range(9))


def test_all_ties_follow_core_degree_order():
    adj = np.zeros((4, 4), dtype=np.uint8)
    for i, j in [(1, 0), (1, 2), (1, 3)]:
        adj[i, j] = adj[j, i] = 1
    plan = redistribute(np.zeros(4), CPGraph(4, 2, adj), 4)
    assert plan.new_order == (1, 0, 2, 3)


def test_hand_worked_example():
    adj = np.zeros((4, 4), dtype=np.uint8)
    # node0 degree 3, node1 degree 2
    for i, j in [(0, 1), (0, 2), (0, 3), (1, 2)]:
        adj[i, j] = adj[j, i] = 1
    g = CPGraph(4, 2, adj)
    assert list(g.degrees[:2]) == [3, 2]
    plan = redistribute([0.1, 0.9, 0.5, 0.2], g, 4)
    a = apply_plan(plan, g)
    assert a.patches_of_node == ((1,), (2,), (3,), (0,))
    assert plan.core_capacity == 2 and plan.core_patches == {1, 2}


def test_higher_degree_core_takes_best_patches():
    adj = np.zeros((4, 4), dtype=np.uint8)
    for i, j in [(1, 0), (1, 2), (1, 3)]:
        adj[i, j] = adj[j, i] = 1
    g = CPGraph(4, 2, adj)  # node 1 outranks node 0
    a = apply_plan(redistribute([0.1, 0.9, 0.5, 0.2, 0.0, 0.3, 0.8, 0.7], g, 8), g)
    assert a.patches_of_node[1] == (1, 6)
    assert a.patches_of_node[0] == (7, 2)


def test_idempotent_on_fixed_alpha():
    g = generate_cp_graph(10, 3, DEFAULT_THRESHOLDS, 4)
    alpha = np.random.default_rng(0).normal(size=23)
    first, second = redistribute(alpha, g, 23), redistribute(alpha, g, 23)
    assert first.new_order == second.new_order
    assert first.core_patches == second.core_patches


def test_length_mismatch():
    g = generate_baseline("complete", 4)
    with pytest.raises(ParameterError):
        redistribute(np.zeros(5), g, 6)


@given(plans())
def test_new_order_is_permutation(case):
    g, P, alpha = case
    plan = redistribute(alpha, g, P)
    assert sorted(plan.new_order) == list(range(P))


@given(plans())
def test_core_set_is_top_k(case):
    g, P, alpha = case
    plan = redistribute(alpha, g, P)
    K = core_capacity(g, P)
    assert plan.core_capacity == K
    a = apply_plan(plan, g)
    on_core = {p for node in range(g.m) for p in a.patches_of_node[node]}
    assert on_core == top_k_oracle(alpha, K) == set(plan.core_patches)


@given(plans())
def test_best_patch_on_max_degree_core(case):
    g, P, alpha = case
    a = apply_plan(redistribute(alpha, g, P), g)
    best = int(rank_patches(alpha)[0])
    node = int(a.node_of_patch[best])
    assert node < g.m
    assert g.degrees[node] == g.degrees[: g.m].max()


@given(plans(), st.sampled_from(["exp", "affine", "cube"]))
def test_rank_invariance(case, kind):
    g, P, alpha = case
    f = {"exp": np.exp, "affine": lambda a: 3.0 * a - 7.0, "cube": lambda a: a**3 + a}[kind]
    assert redistribute(f(alpha), g, P).new_order == redistribute(alpha, g, P).new_order


@given(plans())
def test_plan_realized_by_assignment(case):
    g, P, alpha = case
    plan = redistribute(alpha, g, P, assign_patches(P, g))
    assert tuple(apply_plan(plan, g).order) == plan.new_order
    # within each node, patches are stored in importance order
    for block in apply_plan(plan, g).patches_of_node:
        ranks = [list(rank_patches(alpha)).index(p) for p in block]
        assert ranks == sorted(ranks)
