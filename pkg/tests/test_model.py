import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import cluster_chain, node, pinned
from pulleytens.io import load_model
from pulleytens.model import (BarOnPulley, DuplicateSegmentInCluster, Member, ModelError,
                              NonPlanarModel, Segment, StructureModel, TerminalOnPulley,
                              UnsharedJunction, build_topology, expand_side_signs,
                              partition_dofs)


def test_compound_pulley_side_and_radius_vectors():
    topo = load_model("compound_pulley").topology
    assert topo.n_attach == 9
    np.testing.assert_array_equal(topo.mu, [0, 1, 0, -1, 1, 0, 0, 0, 0])
    np.testing.assert_array_equal(topo.R, [0, 0.005, 0, 0.03, 0.023, 0, 0, 0, 0])
    assert topo.C.shape == (6, 9)
    assert topo.S.shape == (3, 6)
    np.testing.assert_array_equal(topo.S[0], [1, 1, 1, 1, 0, 0])
    np.testing.assert_array_equal(topo.S_T, np.eye(6))
    np.testing.assert_array_equal(np.abs(topo.C).sum(axis=1), 2)
    np.testing.assert_array_equal(topo.C.sum(axis=1), 0)


def test_single_segment_identity():
    m = StructureModel([pinned(1, 0, 0), node(2, 1, 0)], [Segment(1, (1, 1), (2, 1))],
                       [Member(1, (1,), 1.0, 1.0, 1.0)])
    topo = m.topology
    np.testing.assert_array_equal(topo.C, [[-1, 1]])
    np.testing.assert_array_equal(topo.S, [[1]])
    np.testing.assert_array_equal(topo.S_T, [[1]])


def test_equal_radii_opposite_sides_keep_plus_signs():
    m = cluster_chain([(0, 0), (1, 0.4), (2, -0.4), (3, 0)], [0.05, 0.05], [-1, 1])
    topo = m.topology
    np.testing.assert_array_equal(topo.xi_start, 1)
    np.testing.assert_array_equal(topo.xi_end, 1)
    assert topo.R_bar[1] == pytest.approx(0.1)


def test_equal_radii_same_side_cancel():
    m = cluster_chain([(0, 0), (1, 0.4), (2, 0.4), (3, 0)], [0.05, 0.05], [-1, -1])
    topo = m.topology
    assert topo.xi_start[1] * topo.xi_end[1] == -1
    assert topo.R_bar[1] == 0.0


def test_unequal_same_side_smaller_radius_negative():
    m = cluster_chain([(0, 0), (1, 0.4), (2, 0.4), (3, 0)], [0.05, 0.02], [-1, -1])
    topo = m.topology
    assert topo.xi_start[1] == 1 and topo.xi_end[1] == -1
    assert topo.R_bar[1] == pytest.approx(0.03)


def test_side_signs_of_compound_pulley_segment_two():
    topo = load_model("compound_pulley").topology
    mu_start, mu_end = expand_side_signs(topo)
    assert (mu_start[1], mu_end[1]) == (1, -1)


def test_side_signs_pinned_segment_are_zero():
    topo = load_model("compound_pulley").topology
    mu_start, mu_end = expand_side_signs(topo)
    assert (mu_start[4], mu_end[4]) == (0, 0)


def test_side_signs_match_direct_lookup():
    m = cluster_chain([(0, 0), (1, 0.5), (2, 0)], [0.1], [-1])
    topo = m.topology
    mu_start, mu_end = expand_side_signs(topo)
    atts = {(nd.id, j + 1): a for nd in m.nodes for j, a in enumerate(nd.attachments)}
    for k, seg in enumerate(m.segments):
        assert mu_start[k] == atts[seg.start].side
        assert mu_end[k] == atts[seg.end].side


def test_no_constraints_gives_identity_selection():
    m = StructureModel([node(1, 0, 0, ""), node(2, 1, 0, "")], [Segment(1, (1, 1), (2, 1))],
                       [Member(1, (1,), 1.0, 1.0, 1.0)])
    topo = m.topology
    np.testing.assert_array_equal(topo.E_a, np.eye(6))
    n_a, n_b = partition_dofs(topo, m.nodal_vector())
    assert n_b.size == 0
    np.testing.assert_array_equal(n_a, m.nodal_vector())


def test_compound_pulley_fixed_dofs():
    topo = load_model("compound_pulley").topology
    fixed = {(nid, ax) for nid, ax in topo.fixed_labels}
    for nid in (1, 3, 5):
        assert {(nid, "x"), (nid, "y"), (nid, "z")} <= fixed
    assert not {(2, "x"), (2, "y"), (4, "x"), (4, "y")} & fixed
    # the pulley wheel of node 3 moves with its pinned center
    n_a, n_b = partition_dofs(topo, load_model("compound_pulley").nodal_vector())
    assert n_a.size == 8 and n_b.size == 13


def test_selection_matrices_expand_physical_dofs():
    topo = load_model("compound_pulley").topology
    np.testing.assert_array_equal(np.hstack([topo.E_a, topo.E_b]).sum(axis=1), 1)
    assert topo.E_a.shape[1] + topo.E_b.shape[1] == 3 * len(topo.node_ids)


@given(st.randoms(use_true_random=False), st.integers(2, 8))
def test_partition_round_trip(rnd, count):
    fixed_sets = ["", "x", "y", "z", "xy", "xz", "yz", "xyz"]
    nodes = [node(k + 1, k * 1.0, rnd.uniform(-1, 1), rnd.choice(fixed_sets)) for k in range(count)]
    nodes[0] = node(1, 0.0, 0.0, "")
    segs = [Segment(k, (k, 1), (k + 1, 1)) for k in range(1, count)]
    m = StructureModel(nodes, segs, [Member(k, (k,), 1.0, 1.0, 1.0) for k in range(1, count)])
    topo = m.topology
    n = np.array([rnd.uniform(-5, 5) for _ in range(topo.n_dof)])
    n = topo.expand(topo.P.T @ n / np.maximum(topo.P.sum(axis=0), 1))
    n_a, n_b = partition_dofs(topo, n)
    np.testing.assert_array_equal(topo.assemble(n_a, n_b), n)


def _model(nodes, segs, mems):
    return StructureModel(nodes, segs, mems)


def test_rejects_bar_on_pulley():
    nodes = [pinned(1, 0, 0), node(2, 1, 0, "z", ((0.0, 0), (0.1, 1))), pinned(3, 2, 0)]
    segs = [Segment(1, (1, 1), (2, 2), "bar"), Segment(2, (2, 2), (3, 1), "bar")]
    with pytest.raises(BarOnPulley):
        _model(nodes, segs, [Member(1, (1,), 1, 1, 1), Member(2, (2,), 1, 1, 1)])


def test_rejects_cluster_through_unshared_attachment():
    nodes = [pinned(1, 0, 0), node(2, 1, 0), node(3, 1, 1), pinned(4, 2, 0)]
    segs = [Segment(1, (1, 1), (2, 1)), Segment(2, (3, 1), (4, 1))]
    with pytest.raises(UnsharedJunction):
        _model(nodes, segs, [Member(1, (1, 2), 1, 1, 1)])


def test_rejects_segment_in_two_members():
    nodes = [pinned(1, 0, 0), node(2, 1, 0), pinned(3, 2, 0)]
    segs = [Segment(1, (1, 1), (2, 1)), Segment(2, (2, 1), (3, 1))]
    with pytest.raises(DuplicateSegmentInCluster):
        _model(nodes, segs, [Member(1, (1, 2), 1, 1, 1), Member(2, (2,), 1, 1, 1)])


def test_rejects_member_ending_on_pulley():
    nodes = [pinned(1, 0, 0), node(2, 1, 0, "z", ((0.0, 0), (0.1, 1)))]
    segs = [Segment(1, (1, 1), (2, 2))]
    with pytest.raises(TerminalOnPulley):
        _model(nodes, segs, [Member(1, (1,), 1, 1, 1)])


def test_rejects_pulleys_out_of_plane():
    nodes = [pinned(1, 0, 0), node(2, 1, 0.5, "", ((0.0, 0), (0.1, 1))), pinned(3, 2, 0)]
    segs = [Segment(1, (1, 1), (2, 2)), Segment(2, (2, 2), (3, 1))]
    with pytest.raises(NonPlanarModel):
        _model(nodes, segs, [Member(1, (1, 2), 1, 1, 1)])


@pytest.mark.parametrize("side,radius", [(0, 0.1), (1, 0.0), (2, 0.1)])
def test_rejects_inconsistent_attachment(side, radius):
    nodes = [pinned(1, 0, 0), node(2, 1, 0, "z", ((0.0, 0), (radius, side))), pinned(3, 2, 0)]
    segs = [Segment(1, (1, 1), (2, 2)), Segment(2, (2, 2), (3, 1))]
    with pytest.raises(ModelError):
        _model(nodes, segs, [Member(1, (1, 2), 1, 1, 1)])


def test_rejects_empty_segment_list():
    with pytest.raises(ModelError):
        build_topology([pinned(1, 0, 0)], [], [])


def test_with_radius_replaces_one_wheel():
    m = load_model("compound_pulley")
    m2 = m.with_radius(2, 1, 0.035)
    assert m2.topology.R[1] == 0.035
    np.testing.assert_array_equal(np.delete(m2.topology.R, 1), np.delete(m.topology.R, 1))
    m0 = m.with_radius(2, 1, 0.0)
    assert m0.topology.mu[1] == 0 and m0.topology.R[1] == 0
