import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbvb.graph import (
    GraphError,
    GraphSpec,
    build_random_regular,
    dumps_graph,
    induced_check_partition,
    induced_variable_partition,
    loads_graph,
    valid_n,
)


def test_smallest_graph_has_two_distinct_neighbours_per_check():
    g = build_random_regular(GraphSpec(4, 1, 2, seed=7))
    assert g.m == 2
    for row in g.check_adj:
        assert len(set(row.tolist())) == 2


def test_handshake_identity():
    g = build_random_regular(GraphSpec(6, 2, 3, seed=1))
    assert g.m == 4
    H = g.incidence_matrix()
    assert H.sum(axis=0).sum() == H.sum(axis=1).sum() == 12


def test_exhaustive_simplicity_scan():
    g = build_random_regular(GraphSpec(3000, 5, 6, seed=42))
    assert g.m == 2500
    pairs = set()
    for v, row in enumerate(g.var_adj.tolist()):
        for c in row:
            assert (v, c) not in pairs
            pairs.add((v, c))
    assert len(pairs) == 3000 * 5
    assert not g.has_parallel_edges()


def test_divisibility_is_enforced():
    with pytest.raises(GraphError):
        GraphSpec(100000, 5, 6)
    assert valid_n(100000, 5, 6) == 100002
    GraphSpec(valid_n(100000, 5, 6), 5, 6)


def test_pathological_spec_fails_cleanly():
    with pytest.raises(GraphError):
        build_random_regular(GraphSpec(4, 3, 6))  # m = 2 < d_v


def test_same_seed_same_graph_and_round_trip():
    spec = GraphSpec(300, 3, 4, seed=11)
    a, b = build_random_regular(spec), build_random_regular(spec)
    assert np.array_equal(a.var_adj, b.var_adj)
    c = loads_graph(dumps_graph(a))
    assert np.array_equal(c.var_adj, a.var_adj) and np.array_equal(c.check_adj, a.check_adj)


@settings(max_examples=40, deadline=None)
@given(
    dv=st.integers(1, 6),
    dc=st.integers(2, 8),
    n=st.integers(8, 400),
    seed=st.integers(0, 2**64 - 1),
)
def test_random_graphs_are_regular_and_simple(dv, dc, n, seed):
    n = valid_n(n, dv, dc)
    spec = GraphSpec(n, dv, dc, seed)
    if dv > spec.m:
        return
    g = build_random_regular(spec)
    H = g.incidence_matrix()
    assert H.max() == 1
    assert np.all(H.sum(axis=1) == dv) and np.all(H.sum(axis=0) == dc)
    for j, row in enumerate(g.check_adj):
        assert np.all(H[row, j] == 1)


def test_check_partition_edge_cases():
    g = build_random_regular(GraphSpec(60, 5, 6, seed=0))
    empty = induced_check_partition(g, [])
    assert empty.counts.tolist() == [g.m] + [0] * 6
    full = induced_check_partition(g, range(g.n))
    assert full.counts.tolist() == [0] * 6 + [g.m]
    with pytest.raises(IndexError):
        induced_check_partition(g, [g.n])


def test_check_partition_matches_direct_count():
    g = build_random_regular(GraphSpec(600, 5, 6, seed=3))
    rng = np.random.default_rng(3)
    subset = rng.choice(600, 120, replace=False)
    cp = induced_check_partition(g, subset)
    assert (np.arange(7) @ cp.counts) == 600
    members = set(subset.tolist())
    direct = [sum(v in members for v in row) for row in g.check_adj.tolist()]
    assert cp.degree.tolist() == direct
    assert cp.counts.tolist() == np.bincount(direct, minlength=7).tolist()


def test_variable_partition_singleton_and_empty():
    g = build_random_regular(GraphSpec(60, 5, 6, seed=0))
    cp = induced_check_partition(g, [17])
    assert induced_variable_partition(g, [17], cp).counts.tolist() == [0, 0, 0, 0, 0, 1]
    cp0 = induced_check_partition(g, [])
    assert induced_variable_partition(g, [], cp0).counts.tolist() == [0] * 6
    with pytest.raises(ValueError):
        induced_variable_partition(g, [3], cp)


def test_variable_partition_matches_brute_force():
    g = build_random_regular(GraphSpec(400, 3, 4, seed=9))
    subset = np.random.default_rng(9).choice(400, 80, replace=False)
    cp = induced_check_partition(g, subset)
    vp = induced_variable_partition(g, subset, cp)
    H = g.incidence_matrix()
    mask = np.zeros(400, dtype=int)
    mask[subset] = 1
    check_deg = mask @ H
    per_var = [int(np.sum((H[v] == 1) & (check_deg == 1))) for v in subset]
    assert vp.counts.tolist() == np.bincount(per_var, minlength=4).tolist()
