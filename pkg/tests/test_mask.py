import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpattn.errors import ConsistencyError, ParameterError
from cpattn.graph import CPGraph, DEFAULT_THRESHOLDS, generate_baseline, generate_cp_graph
from cpattn.mask import (
    AttentionMask,
    assign_patches,
    build_mask,
    connection_ratio,
    mask_for_graph,
    mask_from_bytes,
    mask_to_bytes,
    read_bitset,
    read_pbm,
    write_bitset,
    write_pbm,
)


@st.composite
def graphs_and_orders(draw, max_n=12, max_extra=10):
    n = draw(st.integers(2, max_n))
    m = draw(st.integers(1, n))
    t = draw(st.tuples(*[st.floats(0, 1)] * 3))
    seed = draw(st.integers(0, 10**6))
    P = n + draw(st.integers(0, max_extra))
    order = draw(st.permutations(range(P)))
    return generate_cp_graph(n, m, t, seed), P, order


def test_floor_rule_five_nodes():
    a = assign_patches(196, 5)
    assert a.counts() == [40, 39, 39, 39, 39]


def test_one_patch_per_node():
    a = assign_patches(196, 196)
    assert a.counts() == [1] * 196
    assert list(a.node_of_patch) == list(range(196))


def test_seven_patches_three_nodes():
    a = assign_patches(7, 3)
    assert a.counts() == [3, 2, 2]
    assert a.patches_of_node[0] == (0, 1, 2)


def test_assign_rejects_too_few_patches():
    with pytest.raises(ParameterError):
        assign_patches(3, 4)
    with pytest.raises(ParameterError):
        assign_patches(4, 2, [0, 1, 1, 3])


@given(graphs_and_orders())
def test_assignment_invariants(case):
    g, P, order = case
    a = assign_patches(P, g, order)
    base, extra = divmod(P, g.n)
    counts = a.counts()
    assert set(counts) <= {base, base + 1}
    if extra:
        assert sum(c == base + 1 for c in counts) == extra
    for node, block in enumerate(a.patches_of_node):
        assert all(a.node_of_patch[p] == node for p in block)
    assert sorted(a.order) == list(range(P))
    assert a.order == list(order)


def test_complete_graph_mask_is_all_ones():
    g = generate_baseline("complete", 5)
    m = mask_for_graph(g, 13, [12, 3, 4, 0, 1, 2, 5, 6, 7, 8, 9, 10, 11])
    assert m.bits.all() and m.size == 14 and m.cls_index == 13


def test_empty_graph_mask_is_identity_plus_cls():
    g = generate_cp_graph(4, 2, (1, 1, 1), 0)
    m = mask_for_graph(g, 4)
    expected = np.eye(5, dtype=bool)
    expected[-1, :] = expected[:, -1] = True
    assert np.array_equal(m.bits, expected)
    assert connection_ratio(m) == 13 / 25 == 0.52


def test_worked_example_mask(toy_graph):
    m = mask_for_graph(toy_graph, 4)
    inner = m.bits[:4, :4].copy()
    np.fill_diagonal(inner, False)
    assert {tuple(map(int, ij)) for ij in np.argwhere(inner)} == {(0, 1), (1, 0), (0, 2), (2, 0), (1, 3), (3, 1)}


def test_block_structure_five_nodes():
    adj = np.zeros((5, 5), dtype=np.uint8)
    adj[0, 1] = adj[1, 0] = 1
    g = CPGraph(5, 2, adj)
    bits = mask_for_graph(g, 196).bits
    # half-open 0-based blocks: node 0 holds 0..39, node 1 holds 40..78
    assert bits[0:40, 40:79].all() and bits[40:79, 0:40].all()
    assert not bits[0:40, 79:118].any()


def test_build_mask_rejects_mismatched_graph():
    a = assign_patches(10, 5)
    with pytest.raises(ConsistencyError):
        build_mask(a, generate_baseline("complete", 4))


def test_full_vit_ratio():
    assert connection_ratio(AttentionMask.full(196)) == 1.0
    assert f"{100 * connection_ratio(AttentionMask.full(196)):.2f}" == "100.00"


def test_cp_ratio_band_at_50_10():
    crs = [connection_ratio(mask_for_graph(generate_cp_graph(50, 10, DEFAULT_THRESHOLDS, s), 196)) for s in range(5)]
    assert 0.20 <= np.mean(crs) <= 0.40


@given(graphs_and_orders())
def test_mask_invariants(case):
    g, P, order = case
    a = assign_patches(P, g, order)
    m = build_mask(a, g)
    assert m.is_valid()
    b = m.bits
    node = a.node_of_patch
    for p in range(P):
        for q in range(P):
            if node[p] == node[q]:
                assert b[p, q]
            else:
                assert b[p, q] == bool(g.adjacency[node[p], node[q]])
    assert 0 < connection_ratio(m) <= 1


@given(graphs_and_orders())
def test_complete_graph_ignores_order(case):
    g, P, order = case
    full = generate_baseline("complete", g.n)
    assert build_mask(assign_patches(P, full, order), full).bits.all()


@given(n=st.integers(2, 8), k=st.integers(1, 4), seed=st.integers(0, 10**6), data=st.data())
def test_ratio_order_invariant_when_divisible(n, k, seed, data):
    g = generate_cp_graph(n, max(1, n // 2), DEFAULT_THRESHOLDS, seed)
    P = n * k
    order = data.draw(st.permutations(range(P)))
    assert connection_ratio(mask_for_graph(g, P, order)) == connection_ratio(mask_for_graph(g, P))


@given(graphs_and_orders(), st.data())
def test_adding_edge_never_lowers_ratio(case, data):
    g, P, order = case
    i = data.draw(st.integers(0, g.n - 1))
    j = data.draw(st.integers(0, g.n - 1).filter(lambda x: x != i))
    adj = g.adjacency.copy()
    adj[i, j] = adj[j, i] = 1
    denser = CPGraph(g.n, g.m, adj)
    assert connection_ratio(mask_for_graph(denser, P, order)) >= connection_ratio(mask_for_graph(g, P, order))


@given(graphs_and_orders())
def test_bitset_round_trip(case):
    g, P, order = case
    m = mask_for_graph(g, P, order)
    data = mask_to_bytes(m)
    assert data[:8] == b"CPMASK01"
    assert int.from_bytes(data[8:12], "little") == P + 1
    assert len(data) == 12 + ((P + 1) ** 2 + 7) // 8
    assert np.array_equal(mask_from_bytes(data).bits, m.bits)


def test_file_exports(tmp_path, toy_graph):
    m = mask_for_graph(toy_graph, 8)
    write_pbm(m, tmp_path / "m.pgm")
    text = (tmp_path / "m.pgm").read_text().splitlines()
    assert text[0] == "P1" and text[1] == "9 9"
    assert np.array_equal(read_pbm(tmp_path / "m.pgm").bits, m.bits)
    write_bitset(m, tmp_path / "m.bin")
    assert np.array_equal(read_bitset(tmp_path / "m.bin").bits, m.bits)
    with pytest.raises(ParameterError):
        mask_from_bytes(b"NOTAMASK" + bytes(8))
