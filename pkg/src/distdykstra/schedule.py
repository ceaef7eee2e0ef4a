"""Block schedules: per-cycle active edge set and the ordered block sets S_{n,1..w_bar}.

A block is a node id (``int``) or an edge id (``tuple``, see
:mod:`distdykstra.topology`). A block set is a tuple of blocks.
"""

import json
from dataclasses import dataclass

from .core import PreconditionError, StructuralError
from .funcs import V4
from .instances import Xoshiro256
from .topology import FULL, connects, edge_coords, is_edge, normalize_edge

MAX_REJECTIONS = 10_000


def normalize_block(block):
    if isinstance(block, (list, tuple)):
        return normalize_edge(block)
    return int(block)


@dataclass(frozen=True)
class Cycle:
    active_edges: tuple
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "active_edges",
                           tuple(sorted({normalize_edge(e) for e in self.active_edges})))
        object.__setattr__(self, "blocks",
                           tuple(tuple(normalize_block(b) for b in s) for s in self.blocks))


@dataclass(frozen=True)
class Schedule:
    """``cycles`` is used periodically when ``repeat`` is true, else it must cover the run."""

    w_bar: int
    cycles: tuple
    repeat: bool = True

    def __post_init__(self):
        if self.w_bar < 1:
            raise StructuralError("w_bar must be >= 1")
        object.__setattr__(self, "cycles", tuple(self.cycles))
        if not self.cycles:
            raise StructuralError("schedule has no cycles")
        for c in self.cycles:
            if len(c.blocks) != self.w_bar:
                raise StructuralError(
                    f"cycle has {len(c.blocks)} block sets, expected {self.w_bar}")

    def cycle(self, n):
        """Cycle ``n`` (1-based)."""
        if n < 1:
            raise PreconditionError("cycles are numbered from 1")
        if self.repeat:
            return self.cycles[(n - 1) % len(self.cycles)]
        if n > len(self.cycles):
            raise PreconditionError(f"schedule defines {len(self.cycles)} cycles, asked for {n}")
        return self.cycles[n - 1]

    def to_dict(self):
        return {
            "w_bar": self.w_bar,
            "repeat": self.repeat,
            "cycles": [{"active_edges": [list(e) for e in c.active_edges],
                        "blocks": [[list(b) if is_edge(b) else b for b in s] for s in c.blocks]}
                       for c in self.cycles],
        }

    @classmethod
    def from_dict(cls, d):
        cycles = [Cycle(tuple(tuple(e) for e in c["active_edges"]),
                        tuple(tuple(s) for s in c["blocks"])) for c in d["cycles"]]
        return cls(int(d["w_bar"]), tuple(cycles), bool(d.get("repeat", True)))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def last_index(cycle):
    """p(n, alpha): last inner index (1-based) at which each block appears."""
    p = {}
    for w, s in enumerate(cycle.blocks, start=1):
        for b in s:
            p[b] = w
    return p


def block_support(block, m):
    """Set of (node, coordinate) pairs a block's dual can touch."""
    if is_edge(block):
        i, j = block[:2]
        return {(v, k) for v in (i, j) for k in edge_coords(block, m)}
    return {(block, k) for k in range(m)}


def star_schedule(graph, v4_nodes=()):
    """The w_bar = 8 star sweep: edge (c, j) then node set {c, j}, for each leaf j."""
    center = 0
    leaves = [j for j in range(graph.num_nodes) if j != center]
    expected = {(center, j) for j in leaves}
    if graph.num_nodes != 5 or set(graph.edges) != expected or graph.edge_mode != FULL:
        raise PreconditionError("star schedule needs the 5-node full-edge star centred at node 0")
    v4 = set(v4_nodes)
    blocks = []
    for j in leaves:
        pair = {center, j}
        if v4 & pair and not pair <= v4:
            raise PreconditionError(f"node set {sorted(pair)} would mix V4 and non-V4 nodes")
        blocks.append(((center, j),))
        blocks.append((center, j))
    return Schedule(len(blocks), (Cycle(tuple(graph.edges), tuple(blocks)),))


def _sweep(edge_ids, other_nodes, v4_nodes, order):
    blocks = [tuple(sorted(v4_nodes))] if v4_nodes else []
    edges = [(e,) for e in edge_ids]
    nodes = [(i,) for i in other_nodes]
    if order == "edges-then-nodes":
        blocks += edges + nodes
    elif order == "interleaved":
        for k in range(max(len(edges), len(nodes))):
            blocks += edges[k:k + 1] + nodes[k:k + 1]
    else:
        raise StructuralError(f"unknown sweep order {order!r}")
    return blocks


def cyclic_schedule(graph, node_classes, m=1, order="interleaved"):
    """Every edge subspace and node once per cycle; the V4 set leads when nonempty."""
    edge_ids = graph.edge_subspaces(m)
    if not connects(edge_ids, graph, m):
        raise PreconditionError("graph is not connected")
    v4 = [i for i, c in enumerate(node_classes) if c == V4]
    others = [i for i, c in enumerate(node_classes) if c != V4]
    blocks = _sweep(edge_ids, others, v4, order)
    return Schedule(len(blocks), (Cycle(tuple(edge_ids), tuple(blocks)),))


def time_varying_schedule(graph, node_classes, seed, drop_prob, cycles, m=1,
                          order="interleaved"):
    """Per cycle, drop each edge subspace independently and resample until the rest connects V.

    Cycles with fewer active edges are padded with extra node blocks so every
    cycle has the same w_bar.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise PreconditionError("drop_prob must lie in [0, 1)")
    rng = Xoshiro256(seed)
    edge_ids = graph.edge_subspaces(m)
    v4 = [i for i, c in enumerate(node_classes) if c == V4]
    others = [i for i, c in enumerate(node_classes) if c != V4]
    w_bar = len(_sweep(edge_ids, others, v4, order))
    filler = [(i,) for i in others] or [tuple(v4)]
    out = []
    for _ in range(cycles):
        for _attempt in range(MAX_REJECTIONS):
            active = [e for e in edge_ids if rng.uniform() >= drop_prob]
            if connects(active, graph, m):
                break
        else:
            raise StructuralError("no connected active edge set after 10^4 draws")
        blocks = _sweep(active, others, v4, order)
        k = 0
        while len(blocks) < w_bar:
            blocks.append(filler[k % len(filler)])
            k += 1
        out.append(Cycle(tuple(active), tuple(blocks)))
    return Schedule(w_bar, tuple(out), repeat=False)


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    code: str
    cycle: int
    message: str


def _check_cycle(n, cycle, graph, classes, m, findings):
    edge_universe = set(graph.edge_subspaces(m))
    v4 = {i for i, c in enumerate(classes) if c == V4}
    used_edges, used_nodes = set(), set()

    def add(sev, code, msg):
        findings.append(Finding(sev, code, n, msg))

    for w, s in enumerate(cycle.blocks, start=1):
        if not s:
            add("error", "empty-block", f"S_{{{n},{w}}} is empty")
            continue
        nodes = [b for b in s if not is_edge(b)]
        edges = [b for b in s if is_edge(b)]
        for b in edges:
            if b not in edge_universe:
                add("error", "unknown-edge", f"block {b} is not an edge subspace of the graph")
        used_edges.update(edges)
        used_nodes.update(nodes)
        s_v4 = [b for b in nodes if b in v4]
        if s_v4 and (edges or len(s_v4) != len(nodes)):
            add("error", "mixed-v4", f"S_{{{n},{w}}} mixes V4 nodes with other blocks")
        if len(s) > 1:
            seen = set()
            for b in s:
                sup = block_support(b, m)
                if seen & sup:
                    add("error", "overlap", f"S_{{{n},{w}}} has overlapping supports")
                    break
                seen |= sup

    active = set(cycle.active_edges)
    if active != used_edges:
        add("error", "active-mismatch", "Ē_n mismatch: active edges differ from scheduled edges")
    if not active <= edge_universe:
        add("error", "active-unknown", "active edge set is not a subset of the graph's edges")
    if not connects(active, graph, m):
        add("error", "disconnected", "active edge set does not connect V")
    missing = set(range(graph.num_nodes)) - used_nodes
    if missing:
        add("error", "uncovered-nodes", f"nodes {sorted(missing)} never scheduled")

    if v4:
        if set(cycle.blocks[0]) != v4:
            add("warning", "first-not-v4", "first block set is not the V4 set")
        for i in sorted(v4):
            updates = [w for w, s in enumerate(cycle.blocks, start=1) if i in s]
            if not updates:
                continue
            for w, s in enumerate(cycle.blocks, start=1):
                if w <= updates[0] or i in s:
                    continue
                if any(is_edge(b) and i in b[:2] for b in s):
                    where = "after its last update" if w > updates[-1] else "between its updates"
                    add("warning", "v4-touched",
                        f"S_{{{n},{w}}} touches V4 node {i} {where}")


def validate(schedule, graph, node_classes, m=1):
    """Structural errors and Assumption-style warnings for every stored cycle."""
    findings = []
    for n, cycle in enumerate(schedule.cycles, start=1):
        _check_cycle(n, cycle, graph, node_classes, m, findings)
    return findings


def errors(findings):
    return [f for f in findings if f.severity == "error"]


def warnings(findings):
    return [f for f in findings if f.severity == "warning"]
