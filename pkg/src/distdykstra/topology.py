"""Graphs, edge subspaces H_alpha, the consensus diagonal D, and edge-dual decomposition.

Edge identifiers are tuples: ``(i, j)`` for a full-edge subspace
``{x : [x]_i = [x]_j}`` and ``(i, j, k)`` for the single-coordinate subspace
``{x : [[x]_i]_k = [[x]_j]_k}``. Endpoints are always stored with ``i < j``.

An edge dual ``z_alpha`` in ``H_alpha^perp`` is stored by its payload ``t``:
``[z]_i = t``, ``[z]_j = -t`` (restricted to coordinate ``k`` for coordinate
edges), zero elsewhere.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import PreconditionError, StructuralError

FULL = "full"
COORDINATE = "coordinate"

DPERP_TOL = 1e-9


def normalize_edge(edge):
    edge = tuple(int(e) for e in edge)
    if len(edge) not in (2, 3):
        raise StructuralError(f"edge id must be (i, j) or (i, j, k), got {edge!r}")
    i, j = edge[:2]
    if i == j:
        raise StructuralError(f"self-loop {edge!r}")
    return (min(i, j), max(i, j)) + edge[2:]


def is_edge(block):
    return isinstance(block, tuple)


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    edges: tuple = ()
    edge_mode: str = FULL

    def __post_init__(self):
        if self.num_nodes < 1:
            raise StructuralError("graph needs at least one node")
        if self.edge_mode not in (FULL, COORDINATE):
            raise StructuralError(f"unknown edge mode {self.edge_mode!r}")
        edges = tuple(normalize_edge(e) for e in self.edges)
        if any(len(e) != 2 for e in edges):
            raise StructuralError("graph edges are node pairs")
        if len(set(edges)) != len(edges):
            raise StructuralError("duplicate edges")
        for i, j in edges:
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise StructuralError(f"edge {(i, j)} references a missing node")
        object.__setattr__(self, "edges", edges)

    def edge_subspaces(self, m):
        """All edge ids of E-bar for dimension ``m``."""
        if self.edge_mode == FULL:
            return list(self.edges)
        return [(i, j, k) for (i, j) in self.edges for k in range(m)]

    @classmethod
    def star(cls, num_nodes, center=0, edge_mode=FULL):
        edges = tuple((center, j) for j in range(num_nodes) if j != center)
        return cls(num_nodes, edges, edge_mode)

    @classmethod
    def path(cls, num_nodes, edge_mode=FULL):
        return cls(num_nodes, tuple((i, i + 1) for i in range(num_nodes - 1)), edge_mode)

    @classmethod
    def ring(cls, num_nodes, edge_mode=FULL):
        edges = [(i, (i + 1) % num_nodes) for i in range(num_nodes)]
        return cls(num_nodes, tuple(edges), edge_mode)


def edge_coords(edge, m):
    """Coordinates touched by an edge id: all of them, or the single one."""
    return range(m) if len(edge) == 2 else (edge[2],)


def expand_edge_dual(edge, payload, num_nodes, m):
    """Stacked-vector form of an edge dual."""
    out = np.zeros((num_nodes, m))
    i, j = edge[:2]
    if len(edge) == 2:
        out[i] = payload
        out[j] = -np.asarray(payload)
    else:
        out[i, edge[2]] = payload
        out[j, edge[2]] = -payload
    return out


def zero_payload(edge, m):
    return np.zeros(m) if len(edge) == 2 else 0.0


def _components_connected(num_nodes, pairs):
    parent = list(range(num_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in pairs:
        parent[find(i)] = find(j)
    return len({find(a) for a in range(num_nodes)}) == 1


def connects(active_edges, graph, m):
    """True iff the intersection of the active edge subspaces is the diagonal D."""
    active = {normalize_edge(e) for e in active_edges}
    if graph.num_nodes == 1:
        return True
    for k in range(m):
        pairs = [e[:2] for e in active if len(e) == 2 or e[2] == k]
        if not _components_connected(graph.num_nodes, pairs):
            return False
    return True


def project_D(u):
    """Orthogonal projection onto the diagonal: every block becomes the block mean."""
    u = np.asarray(u, dtype=np.float64)
    return np.tile(u.mean(axis=0), (u.shape[0], 1))


def in_D_perp(v, tol=DPERP_TOL):
    return bool(np.all(np.abs(np.asarray(v).sum(axis=0)) <= tol))


@dataclass
class DecompositionReport:
    edge_duals: dict
    max_component_norm: float
    input_norm: float
    potentials: np.ndarray = field(repr=False, default=None)

    @property
    def c_reg_witness(self):
        if self.input_norm == 0.0:
            return 0.0
        return self.max_component_norm / self.input_norm


def _gauged_laplacian(num_nodes, pairs):
    lap = np.full((num_nodes, num_nodes), 1.0 / num_nodes)
    for i, j in pairs:
        lap[i, i] += 1.0
        lap[j, j] += 1.0
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
    return lap


def decompose_edge_duals(v, active_edges, m=None):
    """Write ``v`` in D-perp as a sum of active edge duals (minimum-norm flow).

    Per coordinate, solves the graph Laplacian system on the edges covering
    that coordinate with the potential mean fixed to zero; the payload on
    edge (i, j) is the potential difference ``p_i - p_j``.
    """
    v = np.asarray(v, dtype=np.float64)
    num_nodes, m_v = v.shape
    m = m_v if m is None else m
    active = sorted({normalize_edge(e) for e in active_edges})
    colsum = np.abs(v.sum(axis=0))
    if np.any(colsum > DPERP_TOL):
        raise PreconditionError(f"vector not in D-perp (block-sum residual {colsum.max():.3e})")
    graph = Graph(num_nodes, tuple({e[:2] for e in active}))
    if not connects(active, graph, m):
        raise PreconditionError("active edge set does not connect V")

    duals = {}
    potentials = np.zeros((num_nodes, m))
    full = [e for e in active if len(e) == 2]
    if full:
        pairs = [e[:2] for e in full]
        potentials = np.linalg.solve(_gauged_laplacian(num_nodes, pairs), v)
        for e in full:
            duals[e] = potentials[e[0]] - potentials[e[1]]
    coord = [e for e in active if len(e) == 3]
    if coord:
        for k in range(m):
            on_k = [e for e in coord if e[2] == k]
            if not on_k:
                continue
            pairs = [e[:2] for e in on_k]
            p = np.linalg.solve(_gauged_laplacian(num_nodes, pairs), v[:, k])
            potentials[:, k] = p
            for e in on_k:
                duals[e] = float(p[e[0]] - p[e[1]])

    norms = [np.linalg.norm(expand_edge_dual(e, t, num_nodes, m)) for e, t in duals.items()]
    return DecompositionReport(
        edge_duals=duals,
        max_component_norm=float(max(norms, default=0.0)),
        input_norm=float(np.linalg.norm(v)),
        potentials=potentials,
    )


def incidence_matrix(num_nodes, pairs):
    """Signed node-by-edge incidence: +1 at the first endpoint, -1 at the second."""
    inc = np.zeros((num_nodes, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        inc[i, col] = 1.0
        inc[j, col] = -1.0
    return inc
