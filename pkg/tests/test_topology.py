from collections import deque
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distdykstra.core import PreconditionError, StructuralError
from distdykstra.topology import (COORDINATE, Graph, connects, decompose_edge_duals,
                                  expand_edge_dual, in_D_perp, incidence_matrix, normalize_edge,
                                  project_D)


def bfs_connected(num_nodes, pairs):
    adj = {i: set() for i in range(num_nodes)}
    for i, j in pairs:
        adj[i].add(j)
        adj[j].add(i)
    seen, todo = {0}, deque([0])
    while todo:
        a = todo.popleft()
        for b in adj[a] - seen:
            seen.add(b)
            todo.append(b)
    return len(seen) == num_nodes


@st.composite
def graphs(draw, max_nodes=6):
    n = draw(st.integers(1, max_nodes))
    all_pairs = list(combinations(range(n), 2))
    edges = draw(st.lists(st.sampled_from(all_pairs), unique=True)) if all_pairs else []
    return Graph(n, tuple(edges))


def test_edge_normalization():
    assert normalize_edge((3, 1)) == (1, 3)
    assert normalize_edge([4, 2, 0]) == (2, 4, 0)
    with pytest.raises(StructuralError):
        normalize_edge((1, 1))
    with pytest.raises(StructuralError):
        Graph(2, ((0, 1), (1, 0)))
    with pytest.raises(StructuralError):
        Graph(2, ((0, 2),))


def test_edge_subspaces_modes():
    g = Graph.path(3, edge_mode=COORDINATE)
    assert g.edge_subspaces(2) == [(0, 1, 0), (0, 1, 1), (1, 2, 0), (1, 2, 1)]
    assert Graph.star(4).edge_subspaces(5) == [(0, 1), (0, 2), (0, 3)]
    assert len(Graph.ring(5).edges) == 5


@given(graphs())
def test_connects_matches_bfs(g):
    assert connects(g.edges, g, 3) == bfs_connected(g.num_nodes, g.edges)


def test_coordinate_edges_need_every_coordinate():
    g = Graph.path(3, edge_mode=COORDINATE)
    assert connects(g.edge_subspaces(2), g, 2)
    assert not connects([(0, 1, 0), (1, 2, 0), (0, 1, 1)], g, 2)
    assert connects([], Graph(1), 3)


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_project_D_is_orthogonal_projection(n, m, seed):
    u = np.random.default_rng(seed).normal(size=(n, m))
    p = project_D(u)
    assert np.allclose(project_D(p), p)
    assert in_D_perp(u - p)
    assert np.sum(p * (u - p)) == pytest.approx(0.0, abs=1e-10)


@given(graphs(), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_decomposition_is_minimum_norm_flow(g, m, seed):
    if not bfs_connected(g.num_nodes, g.edges) or g.num_nodes == 1:
        return
    v = np.random.default_rng(seed).normal(size=(g.num_nodes, m))
    v -= v.mean(axis=0)
    rep = decompose_edge_duals(v, g.edges, m)
    total = sum(expand_edge_dual(e, t, g.num_nodes, m) for e, t in rep.edge_duals.items())
    assert np.allclose(total, v, atol=1e-9)
    # oracle: pseudo-inverse of the incidence matrix gives the least-norm flow
    flows = np.linalg.pinv(incidence_matrix(g.num_nodes, list(g.edges))) @ v
    ours = np.array([rep.edge_duals[e] for e in g.edges])
    assert np.allclose(ours, flows, atol=1e-9)
    assert rep.c_reg_witness >= 0


def test_decomposition_coordinate_mode():
    g = Graph.ring(4, edge_mode=COORDINATE)
    v = np.array([[1.0, 0.0], [-1.0, 2.0], [0.5, -1.0], [-0.5, -1.0]])
    active = [e for e in g.edge_subspaces(2) if e != (0, 1, 1)]
    rep = decompose_edge_duals(v, active, 2)
    total = sum(expand_edge_dual(e, t, 4, 2) for e, t in rep.edge_duals.items())
    assert np.allclose(total, v)
    assert (0, 1, 1) not in rep.edge_duals


def test_decomposition_preconditions():
    g = Graph.path(3)
    with pytest.raises(PreconditionError):
        decompose_edge_duals(np.ones((3, 1)), g.edges, 1)
    v = np.array([[1.0], [-1.0], [0.0]])
    with pytest.raises(PreconditionError):
        decompose_edge_duals(v, [(0, 1)], 1)


def test_incidence_matrix_columns_sum_to_zero():
    inc = incidence_matrix(4, [(0, 1), (1, 3), (2, 3)])
    assert np.allclose(inc.sum(axis=0), 0)
    assert inc.shape == (4, 3)
