"""Distributed Dykstra iteration (dual block-coordinate ascent) over a block schedule.

State kept per the sparsity structure of the duals:

* ``z[i]``: own block of node dual i (other blocks are zero by construction),
* ``edge_duals[alpha]``: payload of edge dual alpha (see :mod:`topology`),
* ``v_H``: cached sum of expanded edge duals,
* ``minorants[i]``: the single affine minorant carried by each V4 node,
* ``witness[i]``: a primal point certifying the node's conjugate value.

The primal estimate is ``x = anchor - v_H - z``.
"""

import csv
import io
import math
from dataclasses import astuple, dataclass

import numpy as np

from .core import (PreconditionError, StructuralError,
                   UnsupportedScheduleError)
from .funcs import (SLOPE_TOL, V4, AffineMinorant, conjugate_at, linearize,
                    prox_max_two_minorants)
from .schedule import block_support
from .topology import (connects, decompose_edge_duals, in_D_perp, is_edge,
                       normalize_edge, zero_payload)

CSV_HEADER = ("n", "w", "dual_value", "gap", "dist_sq", "step_norm_sq")


@dataclass
class HistoryRecord:
    n: int
    w: int
    dual_value: float
    gap: float = math.nan
    dist_sq: float = math.nan
    step_norm_sq: float = 0.0


def _fmt(x):
    return format(float(x), ".17g")


class RunHistory(list):
    """List of :class:`HistoryRecord`, one per inner step."""

    def to_csv(self, path_or_buf=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self:
            writer.writerow([r.n, r.w] + [_fmt(v) for v in astuple(r)[2:]])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_buf):
        if hasattr(path_or_buf, "read"):
            rows = list(csv.DictReader(path_or_buf))
        else:
            with open(path_or_buf, newline="") as fh:
                rows = list(csv.DictReader(fh))
        if rows and set(CSV_HEADER) - set(rows[0]):
            raise StructuralError(f"CSV must have columns {CSV_HEADER}")
        return cls(HistoryRecord(int(r["n"]), int(r["w"]), float(r["dual_value"]),
                                 float(r["gap"]), float(r["dist_sq"]), float(r["step_norm_sq"]))
                   for r in rows)

    def cycle_ends(self, column="gap"):
        """(n, value) at the last inner step of every cycle."""
        last = {}
        for r in self:
            last[r.n] = getattr(r, column)
        return sorted(last.items())


@dataclass
class Reference:
    """Primal optimum (one block) and primal value used for gap and distance records."""

    x: np.ndarray
    value: float


class StepError(RuntimeError):
    def __init__(self, n, w, cause):
        super().__init__(f"step (n={n}, w={w}) failed: {cause}")
        self.n, self.w, self.cause = n, w, cause


class DualState:
    """Dual iterate of the distributed Dykstra algorithm for one instance."""

    def __init__(self, instance, schedule=None, z_node_init=None, v_H_init=None,
                 minorant_bias=0.0):
        self.instance = instance
        self.schedule = schedule
        self.num_nodes, self.m = instance.num_nodes, instance.m
        self.anchor = instance.anchor
        self.functions = instance.functions
        self.edge_universe = instance.graph.edge_subspaces(self.m)
        # fault injection for verification tooling: lifts every refreshed minorant
        self.minorant_bias = float(minorant_bias)

        shape = (self.num_nodes, self.m)
        self.z = np.zeros(shape) if z_node_init is None else np.array(z_node_init, dtype=float)
        self.v_H = np.zeros(shape) if v_H_init is None else np.array(v_H_init, dtype=float)
        if self.z.shape != shape or self.v_H.shape != shape:
            raise StructuralError(f"initial duals must have shape {shape}")
        if not in_D_perp(self.v_H):
            raise PreconditionError("initial v_H is not in D-perp")

        self.active = tuple(self.edge_universe)
        self.edge_duals = {}
        if np.any(self.v_H):
            self.edge_duals = decompose_edge_duals(self.v_H, self.active, self.m).edge_duals

        self.minorants = {}
        self.witness = {}
        self.conj = np.zeros(self.num_nodes)
        self.updated = set()
        x0 = self.primal_estimate()
        for i, f in enumerate(self.functions):
            if f.node_class == V4:
                cut = linearize(f, x0[i])
                self.minorants[i] = cut
                self.witness[i] = (x0[i].copy(), cut(x0[i]))
                self.conj[i] = (-cut.intercept if np.linalg.norm(self.z[i] - cut.slope) <= SLOPE_TOL
                                else math.inf)
            else:
                xw = f.conjugate_witness(self.z[i])
                if xw is None:
                    self.witness[i] = None
                    self.conj[i] = math.inf
                else:
                    self.witness[i] = (xw, f.value(xw))
                    self.conj[i] = f.conjugate_at(self.z[i], xw)
        self.n, self.w = 1, 0
        self.reset_log = []
        self.last_cut = None

    # -- derived quantities -------------------------------------------------

    def is_v4(self, i):
        return self.functions[i].node_class == V4

    def primal_estimate(self):
        return self.anchor - self.v_H - self.z

    def v_A(self):
        return self.v_H + self.z

    def expanded_edge_sum(self):
        total = np.zeros((self.num_nodes, self.m))
        for e, t in self.edge_duals.items():
            i, j = e[:2]
            if len(e) == 2:
                total[i] += t
                total[j] -= t
            else:
                total[i, e[2]] += t
                total[j, e[2]] -= t
        return total

    def _node_conjugate(self, i):
        """f*_{i,n,w}(z_i) recomputed from the stored witness or minorant."""
        if self.is_v4(i):
            mino = self.minorants[i]
            if i in self.updated:
                return conjugate_at(mino, self.z[i])
            if np.linalg.norm(self.z[i] - mino.slope) <= SLOPE_TOL:
                return -mino.intercept
            return math.inf
        if self.witness[i] is None:
            return math.inf
        return conjugate_at(self.functions[i], self.z[i], self.witness[i][0])

    def _dual_from(self, x, conj_total):
        if not math.isfinite(conj_total):
            return -math.inf
        return -0.5 * float(np.sum(x * x)) + 0.5 * float(np.sum(self.anchor ** 2)) - conj_total

    def dual_value(self):
        """F^{n,w} evaluated from scratch (edge duals re-summed, conjugates re-derived)."""
        x = self.anchor - self.expanded_edge_sum() - self.z
        return self._dual_from(x, sum(self._node_conjugate(i) for i in range(self.num_nodes)))

    def dual_value_incremental(self):
        """F^{n,w} from the cached v_H and per-node conjugate values."""
        return self._dual_from(self.primal_estimate(), float(np.sum(self.conj)))

    def duality_gap(self, reference):
        return reference.value - self.dual_value_incremental()

    def dist_sq(self, reference):
        return 0.5 * float(np.sum((self.primal_estimate() - reference.x) ** 2))

    # -- Algorithm steps ---------------------------------------------------

    def reset_edges(self, active_edges):
        """Redistribute v_H over the active edge set with the minimum-norm flow."""
        active = tuple(sorted({normalize_edge(e) for e in active_edges}))
        unknown = set(active) - set(self.edge_universe)
        if unknown:
            raise PreconditionError(f"edges {sorted(unknown)} are not in the graph")
        if not connects(active, self.instance.graph, self.m):
            raise PreconditionError("active edge set does not connect V")
        before = self.dual_value()
        if self.num_nodes > 1:
            report = decompose_edge_duals(self.v_H, active, self.m)
            self.edge_duals = report.edge_duals
        self.active = active
        residual = float(np.max(np.abs(self.expanded_edge_sum() - self.v_H), initial=0.0))
        after = self.dual_value()
        drift = 0.0 if before == after else abs(after - before)
        self.reset_log.append((self.n, residual, drift))
        return residual, drift

    def _check_block_set(self, blocks):
        if not blocks:
            raise UnsupportedScheduleError("empty block set")
        for b in blocks:
            if is_edge(b):
                if b not in self.active:
                    raise PreconditionError(f"edge {b} is not active in cycle {self.n}")
            elif not 0 <= b < self.num_nodes:
                raise StructuralError(f"node {b} out of range")
        nodes = [b for b in blocks if not is_edge(b)]
        v4 = [b for b in nodes if self.is_v4(b)]
        if v4 and len(v4) != len(blocks):
            raise UnsupportedScheduleError("block set mixes V4 nodes with other blocks")
        seen = set()
        for b in blocks:
            sup = block_support(b, self.m)
            if seen & sup:
                raise UnsupportedScheduleError("block set has overlapping supports")
            seen |= sup
        return bool(v4)

    def step_block(self, blocks):
        """One inner step on the block set S (Dykstra subproblem or bundle update)."""
        blocks = tuple(sorted({normalize_edge(b) if isinstance(b, (tuple, list)) else int(b)
                               for b in blocks}, key=lambda b: (is_edge(b), b)))
        if self._check_block_set(blocks):
            updates = [self._subdiff_update_plan(i) for i in blocks]
            for i, plan in zip(blocks, updates):
                self._apply_subdiff(i, *plan)
            return
        x = self.primal_estimate()
        plans = []
        for b in blocks:
            if is_edge(b):
                i, j = b[:2]
                delta = 0.5 * (x[i] - x[j]) if len(b) == 2 else 0.5 * (x[i, b[2]] - x[j, b[2]])
                plans.append((b, delta))
            else:
                p = x[b] + self.z[b]
                plans.append((b, self.functions[b].prox(p)))
        for b, plan in plans:
            if is_edge(b):
                i, j = b[:2]
                old = self.edge_duals.get(b, zero_payload(b, self.m))
                self.edge_duals[b] = old + plan
                if len(b) == 2:
                    self.v_H[i] += plan
                    self.v_H[j] -= plan
                else:
                    self.v_H[i, b[2]] += plan
                    self.v_H[j, b[2]] -= plan
            else:
                f = self.functions[b]
                self.z[b] = plan.z
                self.witness[b] = (plan.x, plan.witness_value)
                self.conj[b] = f.conjugate_at(plan.z, plan.x)

    def _subdiff_update_plan(self, i):
        p = self.anchor[i] - self.v_H[i]
        q = p - self.z[i]
        cut = linearize(self.functions[i], q)
        old = self.minorants[i]
        res, theta, error = prox_max_two_minorants(self.functions[i], old, cut, p, q)
        new = AffineMinorant.through(res.x, res.witness_value + self.minorant_bias, res.z,
                                     error - self.minorant_bias)
        return res, new, cut, theta

    def _apply_subdiff(self, i, res, new, cut, theta):
        self.minorants[i] = new
        self.z[i] = new.slope
        self.witness[i] = (res.x, new(res.x))
        self.conj[i] = -new.intercept
        self.updated.add(i)
        self.last_cut = cut

    def subdiff_update(self, i):
        """Bundle step for a single V4 node."""
        if not self.is_v4(i):
            raise PreconditionError(f"node {i} is not in V4")
        self._apply_subdiff(i, *self._subdiff_update_plan(i))

    # -- driver -------------------------------------------------------------

    def record(self, x_before, reference=None):
        x = self.primal_estimate()
        rec = HistoryRecord(self.n, self.w, self.dual_value_incremental(),
                            step_norm_sq=float(np.sum((x - x_before) ** 2)))
        if reference is not None:
            rec.gap = reference.value - rec.dual_value
            rec.dist_sq = 0.5 * float(np.sum((x - reference.x) ** 2))
        return rec

    def run(self, cycles, reference=None, observer=None):
        """Execute ``cycles`` full cycles (reset + w_bar inner steps), one record per step.

        ``observer`` may define ``after_reset(state, residual, drift)``,
        ``before_step(state, blocks)``, ``after_step(state, record, blocks)`` and
        ``end_cycle(state, records)``; any hook may raise to abort the run.
        """
        if self.schedule is None:
            raise PreconditionError("no schedule attached")

        def hook(name):
            return getattr(observer, name, None)

        history = RunHistory()
        for _ in range(cycles):
            cycle = self.schedule.cycle(self.n)
            self.w = 0
            try:
                residual, drift = self.reset_edges(cycle.active_edges)
            except Exception as exc:
                raise StepError(self.n, 0, exc) from exc
            if hook("after_reset"):
                observer.after_reset(self, residual, drift)
            records = []
            for w, blocks in enumerate(cycle.blocks, start=1):
                self.w = w
                if hook("before_step"):
                    observer.before_step(self, blocks)
                x_before = self.primal_estimate()
                try:
                    self.step_block(blocks)
                except Exception as exc:
                    raise StepError(self.n, w, exc) from exc
                rec = self.record(x_before, reference)
                records.append(rec)
                if hook("after_step"):
                    observer.after_step(self, rec, blocks)
            if hook("end_cycle"):
                observer.end_cycle(self, records)
            history.extend(records)
            self.n += 1
        return history
