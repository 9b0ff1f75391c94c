import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrhc_consensus import oracle
from nrhc_consensus.graph import (EXAMPLE3_ADJACENCY, SwitchingSchedule, Topology, degree_laplacian,
                                  has_spanning_tree, is_jointly_connected, neighbors, paired_edge_topologies,
                                  reachability, ring_edge_topologies, sigma_at, union_graph)


def path_graph(m):
    # 0 -> 1 -> ... -> m-1, i receives i-1
    a = np.zeros((m, m))
    for i in range(1, m):
        a[i, i - 1] = 1.0
    return Topology(a)


def test_topology_validation():
    with pytest.raises(ValueError):
        Topology(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        Topology([[0, -1], [0, 0]])
    with pytest.raises(ValueError):
        Topology([[1, 0], [0, 0]])
    with pytest.raises(ValueError):
        Topology([[0, np.nan], [0, 0]])
    with pytest.raises(ValueError):
        Topology([0, 1, 0])


def test_flat_row_major_input_and_immutability():
    t = Topology([0, 1, 0, 0])
    assert t.m == 2 and t.adjacency[0, 1] == 1
    with pytest.raises(ValueError):
        t.adjacency[0, 1] = 2
    assert t == Topology([[0, 1], [0, 0]])
    assert hash(t) == hash(Topology([[0, 1], [0, 0]]))
    assert t.to_list() == [0.0, 1.0, 0.0, 0.0]


def test_neighbors_follow_receiving_convention():
    t = Topology(EXAMPLE3_ADJACENCY)
    assert neighbors(t, 0) == frozenset({2})
    assert neighbors(t, 1) == frozenset({0, 2})
    assert neighbors(t, 3) == frozenset({0})
    with pytest.raises(IndexError):
        neighbors(t, 4)


def test_degree_laplacian_rows_sum_to_zero():
    t = Topology(EXAMPLE3_ADJACENCY)
    D, L = degree_laplacian(t)
    assert np.array_equal(np.diag(D), [1, 2, 2, 1])
    assert np.allclose(L.sum(axis=1), 0)


def test_spanning_tree_examples():
    assert has_spanning_tree(path_graph(4))
    a = path_graph(4).adjacency.copy()
    a[3, 2] = 0
    assert not has_spanning_tree(Topology(a))
    assert has_spanning_tree(Topology(EXAMPLE3_ADJACENCY))
    assert has_spanning_tree(Topology(np.zeros((1, 1))))


def test_reachability_is_reflexive_closure():
    R = reachability(path_graph(5))
    assert R[4, 0] and not R[0, 4] and R.diagonal().all()


def test_union_is_entrywise_max():
    u = union_graph(ring_edge_topologies(4))
    assert u.adjacency.sum() == 4 and has_spanning_tree(u)
    with pytest.raises(ValueError):
        union_graph([Topology(np.zeros((2, 2))), Topology(np.zeros((3, 3)))])
    with pytest.raises(ValueError):
        union_graph([])


@pytest.mark.parametrize("family", [ring_edge_topologies(4), paired_edge_topologies()])
def test_default_families_jointly_connected_but_never_instantaneously(family):
    assert not any(has_spanning_tree(t) for t in family)
    assert is_jointly_connected(family)


def test_schedule_validation():
    topos = ring_edge_topologies(4)
    with pytest.raises(ValueError, match="first switch"):
        SwitchingSchedule.fixed(topos, [(0.5, 0)])
    with pytest.raises(ValueError, match="increasing"):
        SwitchingSchedule.fixed(topos, [(0.0, 0), (1.0, 1), (1.0, 2)])
    with pytest.raises(ValueError):
        SwitchingSchedule.fixed(topos, [(0.0, 7)])
    with pytest.raises(ValueError):
        SwitchingSchedule.fixed(topos, [])
    with pytest.raises(ValueError):
        SwitchingSchedule.auto(topos, initial=4)
    with pytest.raises(ValueError):
        SwitchingSchedule.fixed([Topology(np.zeros((2, 2))), Topology(np.zeros((3, 3)))], [(0.0, 0)])


def test_sigma_at_is_right_continuous():
    s = SwitchingSchedule.fixed(ring_edge_topologies(4), [(0.0, 2), (1.5, 0), (3.0, 1)])
    assert sigma_at(s, 0.0) == 2
    assert sigma_at(s, 1.4999) == 2
    assert sigma_at(s, 1.5) == 0
    assert sigma_at(s, 100.0) == 1
    with pytest.raises(ValueError):
        sigma_at(s, -0.1)
    with pytest.raises(RuntimeError):
        sigma_at(SwitchingSchedule.auto(ring_edge_topologies(4)), 0.0)


def test_round_robin_cycles():
    s = SwitchingSchedule.round_robin(paired_edge_topologies(), 0.5, 3.0)
    assert [sigma_at(s, t) for t in (0.0, 0.5, 1.0, 1.5, 2.0, 2.49, 2.5)] == [0, 1, 2, 3, 0, 0, 1]
    assert not s.is_auto and s.m == 4


adjacency4 = st.lists(st.booleans(), min_size=16, max_size=16).map(
    lambda bits: np.where(np.array(bits).reshape(4, 4) & ~np.eye(4, dtype=bool), 1.0, 0.0))


@settings(max_examples=300, deadline=None)
@given(st.lists(adjacency4, min_size=1, max_size=4))
def test_joint_connectivity_matches_bruteforce(mats):
    family = [Topology(a) for a in mats]
    assert is_jointly_connected(family) == oracle.spanning_tree_bruteforce(oracle.union_bruteforce(mats))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 7).flatmap(lambda m: st.lists(st.booleans(), min_size=m * m, max_size=m * m)))
def test_spanning_tree_matches_bruteforce_any_size(bits):
    m = int(round(len(bits) ** 0.5))
    a = np.where(np.array(bits).reshape(m, m) & ~np.eye(m, dtype=bool), 1.0, 0.0)
    assert has_spanning_tree(Topology(a)) == oracle.spanning_tree_bruteforce(a)
