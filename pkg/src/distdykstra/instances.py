"""Problem instances: graph, anchor x-bar, node functions and an optional planted optimum.

Random instances are drawn with :class:`Xoshiro256` (xoshiro256** seeded
through splitmix64; uniforms use the top 53 bits). The generator is written
out in full so other implementations can reproduce instances bit for bit.

Draw order for the planted families, node by node:
``v`` (m draws), ``r`` (1 draw), target subgradient ``v_i`` (m draws), and for
the nonsmooth family the split direction ``d`` (m draws, redrawn while
``||d|| < 1e-6``).
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .core import StructuralError, broadcast_block, stacked
from .funcs import (V1, V4, MaxTwoQuadratics, Quadratic, Zero, function_from_dict,
                    function_to_dict)
from .topology import FULL, Graph

FORMAT = "distdykstra-instance/1"
MASK64 = (1 << 64) - 1


def splitmix64(state):
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** with splitmix64 seeding."""

    def __init__(self, seed):
        state = int(seed) & MASK64
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self.s = s

    def next_u64(self):
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self):
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniforms(self, n):
        return np.array([self.uniform() for _ in range(n)])


@dataclass(eq=False)
class Instance:
    graph: Graph
    m: int
    anchor: np.ndarray
    functions: list
    planted_optimum: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.anchor = stacked(self.anchor)
        if self.anchor.shape != (self.graph.num_nodes, self.m):
            raise StructuralError(
                f"anchor shape {self.anchor.shape} != ({self.graph.num_nodes}, {self.m})")
        if len(self.functions) != self.graph.num_nodes:
            raise StructuralError("need one function per node")
        for i, f in enumerate(self.functions):
            if f.dim != self.m:
                raise StructuralError(f"node {i} function has dimension {f.dim}, expected {self.m}")
        if self.planted_optimum is not None:
            self.planted_optimum = np.asarray(self.planted_optimum, dtype=np.float64)

    @property
    def num_nodes(self):
        return self.graph.num_nodes

    def node_classes(self):
        return [f.node_class for f in self.functions]

    def v4_nodes(self):
        return [i for i, f in enumerate(self.functions) if f.node_class == V4]

    def with_treatment(self, treatment):
        """Reclassify every full-domain node: ``subdiff`` -> V4, ``prox`` -> V1."""
        target = {"subdiff": V4, "prox": V1}[treatment]
        funcs = [f if f.is_indicator else f.with_class(target) for f in self.functions]
        return Instance(self.graph, self.m, self.anchor.copy(), funcs,
                        None if self.planted_optimum is None else self.planted_optimum.copy(),
                        dict(self.meta))

    def smoothness(self):
        """Per-node gradient-Lipschitz modulus (max eigenvalue of A); None if not quadratic."""
        out = []
        for f in self.functions:
            A = getattr(f, "A", None)
            out.append(None if A is None else float(np.linalg.eigvalsh(A).max()))
        return out

    def designated_subgradients(self, x):
        return [f.subgradient(x) for f in self.functions]

    def kkt_residual(self):
        """||sum_i v_i + sum_i (e - anchor_i)|| at the planted optimum e."""
        if self.planted_optimum is None:
            raise StructuralError("instance has no planted optimum")
        e = self.planted_optimum
        total = sum(self.designated_subgradients(e)) + (e - self.anchor).sum(axis=0)
        return float(np.linalg.norm(total))

    def to_dict(self):
        d = {
            "format": FORMAT,
            "m": self.m,
            "graph": {"num_nodes": self.graph.num_nodes,
                      "edges": [list(e) for e in self.graph.edges],
                      "edge_mode": self.graph.edge_mode},
            "anchor": self.anchor.tolist(),
            "nodes": [function_to_dict(f) for f in self.functions],
        }
        if self.planted_optimum is not None:
            d["planted_optimum"] = self.planted_optimum.tolist()
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d):
        g = d["graph"]
        graph = Graph(int(g["num_nodes"]), tuple(tuple(e) for e in g["edges"]),
                      g.get("edge_mode", FULL))
        return cls(graph, int(d["m"]), np.array(d["anchor"], dtype=np.float64),
                   [function_from_dict(n) for n in d["nodes"]],
                   d.get("planted_optimum"), dict(d.get("meta", {})))

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _curvature(rng, m):
    v = rng.uniforms(m)
    r = rng.uniform()
    return np.outer(v, v) + r * np.eye(m)


def _planted_anchor(targets, num_nodes, m):
    e = np.ones(m)
    xbar = e + sum(targets) / num_nodes
    return broadcast_block(xbar, num_nodes), e


def default_graph(num_nodes):
    return Graph.star(num_nodes) if num_nodes > 1 else Graph(1, ())


def gen_smooth(seed, num_nodes, m, graph=None, node_class=V4):
    """Quadratic nodes with planted consensus optimum e = ones(m)."""
    rng = Xoshiro256(seed)
    e = np.ones(m)
    funcs, targets = [], []
    for _ in range(num_nodes):
        A = _curvature(rng, m)
        v_i = rng.uniforms(m)
        funcs.append(Quadratic(node_class=node_class, A=A, b=v_i - A @ e, c=0.0))
        targets.append(v_i)
    anchor, e = _planted_anchor(targets, num_nodes, m)
    graph = graph or default_graph(num_nodes)
    return Instance(graph, m, anchor, funcs, e,
                    {"family": "smooth", "seed": int(seed)})


def gen_nonsmooth(seed, num_nodes, m, graph=None, node_class=V4):
    """Max-of-two-quadratics nodes tied at e whose gradient average is the target subgradient."""
    rng = Xoshiro256(seed)
    e = np.ones(m)
    funcs, targets = [], []
    for _ in range(num_nodes):
        A = _curvature(rng, m)
        v_i = rng.uniforms(m)
        d = rng.uniforms(m)
        while np.linalg.norm(d) < 1e-6:
            d = rng.uniforms(m)
        base = v_i - A @ e
        funcs.append(MaxTwoQuadratics(node_class=node_class, A=A, b1=base + d, c1=0.0,
                                      b2=base - d, c2=2.0 * float(d @ e)))
        targets.append(v_i)
    anchor, e = _planted_anchor(targets, num_nodes, m)
    graph = graph or default_graph(num_nodes)
    return Instance(graph, m, anchor, funcs, e,
                    {"family": "nonsmooth", "seed": int(seed)})


FAMILIES = {"smooth": gen_smooth, "nonsmooth": gen_nonsmooth}


def trivial_instance(anchor, graph=None):
    """All-zero functions; the primal optimum is the mean anchor block."""
    anchor = stacked(anchor)
    n, m = anchor.shape
    return Instance(graph or default_graph(n), m, anchor, [Zero(V1, m) for _ in range(n)])


def primal_value_at(instance, x):
    """sum_i [ 1/2 ||x - anchor_i||^2 + f_i(x) ] for a consensus point x."""
    x = np.asarray(x, dtype=np.float64)
    total = 0.0
    for i, f in enumerate(instance.functions):
        fx = f.value(x)
        if not np.isfinite(fx):
            return np.inf
        total += 0.5 * float(np.sum((x - instance.anchor[i]) ** 2)) + fx
    return total
