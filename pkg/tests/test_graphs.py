import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordreg.errors import InvariantError, NotSatisfiable
from coordreg.graphs import (
    UNBOUNDED,
    LeaderFollowerTopology,
    SwitchingSchedule,
    activation_times,
    active_graph,
    classify_topologies,
    grounded_laplacian,
    has_rooted_spanning_tree,
    verify_switching_assumptions,
)

PRESET_SCHEDULE = SwitchingSchedule(((1, 6.0), (2, 6.0), (3, 6.0), (4, 2.0)))


def test_laplacian_of_g1(preset_graphs):
    L = grounded_laplacian(LeaderFollowerTopology(preset_graphs[0]))
    np.testing.assert_array_equal(L, [[2, -1, 0], [-1, 1, 0], [0, -1, 1]])


def test_laplacian_trivial_cases():
    assert not grounded_laplacian(LeaderFollowerTopology(np.zeros((4, 4)))).any()
    np.testing.assert_array_equal(grounded_laplacian(LeaderFollowerTopology([[0, 0], [1, 0]])), [[1]])


@pytest.mark.parametrize(
    "adj, msg",
    [
        ([[1, 0], [1, 0]], "diagonal"),
        ([[0, 1], [1, 0]], "leader row"),
        ([[0, 0], [-1, 0]], "nonnegative"),
        ([[0, 0, 0]], "square"),
    ],
)
def test_adjacency_invariants(adj, msg):
    with pytest.raises(InvariantError, match=msg):
        LeaderFollowerTopology(adj)


def test_adjacency_is_read_only(preset_graphs):
    topo = LeaderFollowerTopology(preset_graphs[0])
    with pytest.raises(ValueError):
        topo.adjacency[1, 0] = 5


def test_spanning_tree(preset_graphs):
    assert has_rooted_spanning_tree(LeaderFollowerTopology(preset_graphs[0]))
    assert not has_rooted_spanning_tree(LeaderFollowerTopology(np.zeros((4, 4))))
    assert not has_rooted_spanning_tree(LeaderFollowerTopology([[0, 0, 0], [0, 0, 0], [0, 1, 0]]))


def test_classify_preset_graphs(preset_graphs):
    ts = classify_topologies(preset_graphs)
    assert ts.gamma_c == (1, 2, 3)
    assert ts.gamma_d == (4,)
    assert ts.min_real_eigs[1] == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-9)
    eig = np.sort(np.linalg.eigvals(ts.laplacian(1)).real)
    np.testing.assert_allclose(eig, [(3 - math.sqrt(5)) / 2, 1, (3 + math.sqrt(5)) / 2], atol=1e-12)
    assert not ts.laplacian(4).any()
    for k in ts.gamma_c:
        assert ts.beta[k] == pytest.approx(0.9 * ts.min_real_eigs[k])
    assert ts.theta == pytest.approx(min(min(ts.beta.values()), 0.45 * min(ts.min_real_eigs[k] for k in ts.gamma_c)))


def test_classify_rejects_bad_beta(preset_graphs):
    with pytest.raises(InvariantError):
        classify_topologies(preset_graphs, beta={1: 0.5})


def test_activation_times_examples():
    assert activation_times(PRESET_SCHEDULE, 0, 20, (1, 2, 3)) == pytest.approx((18, 2))
    assert activation_times(PRESET_SCHEDULE, 7, 7, (1, 2, 3)) == (0, 0)
    assert activation_times(PRESET_SCHEDULE, 18, 20, (1, 2, 3)) == pytest.approx((0, 2))


def test_switching_report(preset_graphs):
    ts = classify_topologies(preset_graphs)
    rep = verify_switching_assumptions(PRESET_SCHEDULE, ts)
    assert rep.tau_d == 2
    assert rep.kappa_achieved == pytest.approx(9)
    assert rep.t_bar0 == 0
    only_c = verify_switching_assumptions(SwitchingSchedule(((1, 3.0), (2, 1.0))), ts)
    assert only_c.kappa_achieved == UNBOUNDED
    assert only_c.to_dict()["kappa_achieved"] == "UNBOUNDED"
    with pytest.raises(NotSatisfiable):
        verify_switching_assumptions(SwitchingSchedule(((4, 1.0),)), ts)


def test_active_graph_examples():
    assert active_graph(PRESET_SCHEDULE, 0.0) == 1
    assert active_graph(PRESET_SCHEDULE, 6.0) == 2
    assert active_graph(PRESET_SCHEDULE, 19.9) == 4
    assert active_graph(PRESET_SCHEDULE, 20.0) == 1


def test_non_periodic_schedule_holds_last_graph():
    sch = SwitchingSchedule(((4, 2.0), (1, 1.0)), periodic=False)
    assert active_graph(sch, 1.0) == 4
    assert active_graph(sch, 1e6) == 1


def test_schedule_invariants():
    with pytest.raises(InvariantError):
        SwitchingSchedule(((1, 0.0),))
    with pytest.raises(InvariantError):
        SwitchingSchedule(((0, 1.0),))


@st.composite
def adjacency(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    vals = draw(st.lists(st.sampled_from([0.0, 0.0, 0.5, 1.0, 2.0]), min_size=(n + 1) ** 2, max_size=(n + 1) ** 2))
    a = np.array(vals).reshape(n + 1, n + 1)
    a[0] = 0
    np.fill_diagonal(a, 0)
    return a


@settings(max_examples=200, deadline=None)
@given(adjacency())
def test_row_sum_identity(a):
    topo = LeaderFollowerTopology(a)
    L = grounded_laplacian(topo)
    # exact: each row sum is a difference of the same floating sums
    np.testing.assert_array_equal(L @ np.ones(topo.n), topo.leader_weights)


@settings(max_examples=200, deadline=None)
@given(adjacency())
def test_spanning_tree_implies_open_rhp(a):
    topo = LeaderFollowerTopology(a)
    if has_rooted_spanning_tree(topo):
        assert np.linalg.eigvals(grounded_laplacian(topo)).real.min() > 1e-9


durations = st.lists(st.tuples(st.integers(1, 3), st.sampled_from([0.5, 1.0, 2.0, 3.0])), min_size=1, max_size=5)


@settings(max_examples=100, deadline=None)
@given(durations, st.floats(0, 30), st.floats(0, 30), st.floats(0, 30))
def test_activation_additivity(segs, a, b, c):
    t0, t1, t2 = sorted((a, b, c))
    sch = SwitchingSchedule(tuple(segs))
    gc = (1, 2)
    c01 = activation_times(sch, t0, t1, gc)
    c12 = activation_times(sch, t1, t2, gc)
    c02 = activation_times(sch, t0, t2, gc)
    assert c01[0] + c12[0] == pytest.approx(c02[0], abs=1e-9)
    assert c01[1] + c12[1] == pytest.approx(c02[1], abs=1e-9)
    assert sum(c02) == pytest.approx(t2 - t0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(durations)
def test_right_continuity(segs):
    sch = SwitchingSchedule(tuple(segs))
    for start, _, k in sch.iter_segments(2 * sch.period):
        assert active_graph(sch, start) == k
