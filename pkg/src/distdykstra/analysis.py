"""Reference optima, convergence-rate fits, and runtime checks of the iteration's guarantees."""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CapabilityError, PreconditionError
from .engine import Reference
from .funcs import V4, AffineMinorant, Quadratic, Zero, linearize, prox_max_two_minorants
from .instances import primal_value_at
from .topology import is_edge


def reference_optimum(instance):
    """(x*, primal value) from the planted optimum or, for all-quadratic nodes, a direct solve."""
    if instance.planted_optimum is not None:
        x = np.asarray(instance.planted_optimum, dtype=np.float64)
        return x, primal_value_at(instance, x)
    if not all(isinstance(f, (Quadratic, Zero)) for f in instance.functions):
        raise CapabilityError("reference optimum needs a planted optimum or quadratic nodes")
    m, n = instance.m, instance.num_nodes
    lhs = n * np.eye(m)
    rhs = instance.anchor.sum(axis=0).copy()
    for f in instance.functions:
        if isinstance(f, Quadratic):
            lhs += f.A
            rhs -= f.b
    x = np.linalg.solve(lhs, rhs)
    return x, primal_value_at(instance, x)


def reference(instance):
    x, value = reference_optimum(instance)
    return Reference(x, value)


# -- exact-prox probes -------------------------------------------------------

@dataclass
class NodeProbe:
    node: int
    delta_z: np.ndarray
    delta_f: float
    z_hat: np.ndarray
    lipschitz: float

    @property
    def slack(self):
        """sqrt(delta_f) - ||delta_z||; nonnegative when the bound holds."""
        return math.sqrt(max(self.delta_f, 0.0)) - float(np.linalg.norm(self.delta_z))


def probe_v4(state):
    """Compare each updated V4 node's dual block with the exact-prox dual at the same center."""
    x = state.primal_estimate()
    probes = []
    for i in sorted(state.updated):
        f = state.functions[i]
        center = x[i] + state.z[i]
        exact = f.prox(center)
        mino = state.minorants[i]
        probes.append(NodeProbe(
            node=i,
            delta_z=exact.z - state.z[i],
            delta_f=mino.gap(f, x[i]),
            z_hat=exact.z,
            lipschitz=float(np.linalg.norm(f.subgradient(x[i]))),
        ))
    return probes


# -- rate estimation ----------------------------------------------------------

@dataclass
class RateFit:
    model: str
    parameter: float
    r_squared: float
    window: tuple
    points: int = 0

    def to_dict(self):
        return {"model": self.model, "parameter": self.parameter,
                "r_squared": self.r_squared, "window": list(self.window),
                "points": self.points}


def default_window(num_cycles):
    return (max(10, num_cycles // 4), num_cycles)


def resolution_floor(instance, reference_value):
    """Gap magnitude below which a computed gap is rounding noise.

    The dual value is a sum of terms of size about ||anchor||^2 / 2 and
    |F*|; gaps within a thousand ulps of that scale carry no rate information.
    """
    scale = 0.5 * float(np.sum(instance.anchor ** 2)) + abs(float(reference_value))
    return 1e3 * np.finfo(np.float64).eps * max(1.0, scale)


def fit_rate(ns, values, model="linear", window=None, floor=0.0):
    """Least-squares rate of a positive series.

    ``linear``: log(value) against n, parameter is the per-cycle ratio exp(slope).
    ``power``: log(value) against log(n), parameter is the exponent.
    Non-finite entries and entries ``<= floor`` (zero at working precision)
    are dropped.
    """
    ns = np.asarray(ns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if window is None:
        window = default_window(int(ns.max()) if ns.size else 0)
    lo, hi = window
    keep = (ns >= lo) & (ns <= hi) & np.isfinite(values) & (values > max(floor, 0.0))
    if keep.sum() < 3:
        raise PreconditionError(f"need at least 3 positive points in window {window}")
    y = np.log(values[keep])
    if model == "linear":
        t = ns[keep]
    elif model == "power":
        t = np.log(ns[keep])
    else:
        raise PreconditionError(f"unknown model {model!r}")
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    r2 = min(1.0, max(0.0, r2))
    param = float(np.exp(slope)) if model == "linear" else float(slope)
    return RateFit(model, param, r2, (int(lo), int(hi)), int(keep.sum()))


def beck_bound(a1, gamma, k):
    """Upper bound on a_k for a nonnegative sequence with a_k >= a_{k+1} + gamma a_{k+1}^4."""
    if a1 <= 0 or gamma <= 0 or k < 1:
        raise PreconditionError("need a1 > 0, gamma > 0, k >= 1")
    step = 3.0 * gamma / (3.0 * gamma * a1 ** 3 + 1.0)
    return (1.0 / a1 ** 3 + (k - 1) * step) ** (-1.0 / 3.0)


# -- single-node bundle decrease ---------------------------------------------

def quad_root_t(delta_f, lipschitz):
    """Nonnegative root t of t^2 / (2 (L+1)^2) + t = delta_f."""
    if delta_f <= 0:
        return 0.0
    c = (lipschitz + 1.0) ** 2
    # t = c (sqrt(1 + 2 delta_f / c) - 1), written to avoid cancellation
    return 2.0 * delta_f / (1.0 + math.sqrt(1.0 + 2.0 * delta_f / c))


def ratio_bound(grad_lipschitz):
    """Root rho in (0, 1) of rho^2 / (4 (L'+1)) + rho = 1."""
    a = 1.0 / (4.0 * (grad_lipschitz + 1.0))
    return 2.0 / (1.0 + math.sqrt(1.0 + 4.0 * a))


@dataclass
class BundleReport:
    alphas: list
    delta_fs: list
    lipschitz: float
    decrease_slacks: list
    ratio_slacks: list = field(default_factory=list)
    grad_lipschitz: float = None

    @property
    def decrease_ok(self):
        return all(s >= -1e-12 for s in self.decrease_slacks)

    @property
    def ratio_ok(self):
        return all(s >= -1e-8 for s in self.ratio_slacks)

    @property
    def nonincreasing(self):
        return all(b <= a + 1e-12 for a, b in zip(self.alphas, self.alphas[1:]))


def check_bundle_decrease(f, anchor, steps, start=None, tol=1e-12):
    """Run the one-node bundle loop with fixed prox center ``anchor``.

    alpha_k is the gap between the optimal value of
    min f(x) + 1/2 ||x - anchor||^2 and the value of the same problem with f
    replaced by the current affine minorant. Checks, per step,
    alpha_{k+1} <= alpha_k - t^2/2 with t the root of
    t^2/(2(L+1)^2) + t = f(x_k) - minorant(x_k), and for quadratic f the ratio
    bound (alpha_{k+1}/alpha_k)^2/(4(L'+1)) + alpha_{k+1}/alpha_k <= 1.
    """
    anchor = np.atleast_1d(np.asarray(anchor, dtype=np.float64))
    start = anchor if start is None else np.atleast_1d(np.asarray(start, dtype=np.float64))
    exact = f.prox(anchor)
    v_star = f.value(exact.x) + 0.5 * float(np.sum((exact.x - anchor) ** 2))

    def model_value(mino):
        a = mino.slope
        return mino.intercept + float(a @ anchor) - 0.5 * float(a @ a)

    mino = linearize(f, start)
    points = [start]
    alphas, delta_fs, minorants = [v_star - model_value(mino)], [], [mino]
    for _ in range(steps):
        x_k = anchor - mino.slope
        points.append(x_k)
        delta_fs.append(mino.gap(f, x_k))
        cut = linearize(f, x_k)
        res, _, error = prox_max_two_minorants(f, mino, cut, anchor, x_k)
        mino = AffineMinorant.through(res.x, res.witness_value, res.z, error)
        minorants.append(mino)
        alphas.append(v_star - model_value(mino))

    lip = 1.1 * max(float(np.linalg.norm(f.subgradient(p))) for p in points)
    dec = []
    for k, df in enumerate(delta_fs):
        t = quad_root_t(df, lip)
        dec.append(alphas[k] - 0.5 * t * t - alphas[k + 1] + tol)
    report = BundleReport(alphas, delta_fs, lip, dec)
    if isinstance(f, Quadratic):
        lp = float(np.linalg.eigvalsh(f.A).max())
        report.grad_lipschitz = lp
        for a_k, a_next in zip(alphas, alphas[1:]):
            if a_k <= 1e-13:
                continue
            r = max(a_next, 0.0) / a_k
            report.ratio_slacks.append(1.0 - (r * r / (4.0 * (lp + 1.0)) + r))
    return report


# -- runtime invariant monitor --------------------------------------------------

@dataclass
class FamilyResult:
    name: str
    checks: int = 0
    worst_slack: float = math.inf
    first_failure: tuple = None
    soft: bool = False

    @property
    def passed(self):
        return self.first_failure is None

    def observe(self, slack, where):
        self.checks += 1
        if slack < self.worst_slack:
            self.worst_slack = slack
        if slack < 0 and self.first_failure is None:
            self.first_failure = where

    @property
    def status(self):
        if self.passed:
            return "PASS"
        return "WARN" if self.soft else "FAIL"


CHEAP = ("dual_ascent", "telescoping", "gap_bound", "weak_duality", "reset")
ALL_CHECKS = CHEAP + ("moreau", "stagnation", "sparsity", "dual_consistency",
                      "minorant_domination", "prox_gap_bound")


class InvariantMonitor:
    """Observer for :meth:`DualState.run` that checks each guarantee as the run proceeds.

    Every check is phrased as a slack that must stay nonnegative.
    """

    def __init__(self, reference=None, checks=ALL_CHECKS, seed=0, samples=100, box=1.0):
        self.reference = reference
        self.checks = set(checks)
        self.families = {name: FamilyResult(name) for name in checks}
        self.rng = np.random.default_rng(seed)
        self.samples = samples
        self.box = box
        self.prev_dual = None
        self.max_reset_drift = 0.0
        self.max_reset_residual = 0.0
        self.max_vA_sq = 0.0

    def _fam(self, name):
        return self.families.get(name) if name in self.checks else None

    def after_reset(self, state, residual, drift):
        self.max_reset_drift = max(self.max_reset_drift, drift)
        self.max_reset_residual = max(self.max_reset_residual, residual)
        fam = self._fam("reset")
        if fam is not None:
            fam.observe(min(1e-9 - residual, 1e-9 - drift), (state.n, 0))
        self.prev_dual = state.dual_value_incremental()
        self.cycle_start_dual = self.prev_dual

    def before_step(self, state, blocks):
        if self._fam("stagnation") is not None or self._fam("moreau") is not None:
            self._z_before = state.z.copy()
            self._edges_before = {e: np.copy(t) for e, t in state.edge_duals.items()}
            self._center = state.primal_estimate() + state.z

    def after_step(self, state, rec, blocks):
        where = (rec.n, rec.w)
        F = rec.dual_value
        fam = self._fam("dual_ascent")
        if fam is not None and math.isfinite(F) and math.isfinite(self.prev_dual):
            fam.observe(F - self.prev_dual - 0.5 * rec.step_norm_sq + 1e-8 * (1 + abs(F)), where)
        self.prev_dual = F
        self.max_vA_sq = max(self.max_vA_sq, float(np.sum(state.v_A() ** 2)))

        if self.reference is not None:
            if math.isfinite(rec.gap):
                fam = self._fam("gap_bound")
                if fam is not None:
                    fam.observe(rec.gap - rec.dist_sq + 1e-9, where)
                fam = self._fam("weak_duality")
                if fam is not None:
                    fam.observe(rec.gap + 1e-9, where)

        if self._fam("stagnation") is not None:
            slack = 0.0
            for i in range(state.num_nodes):
                if i not in blocks and not np.array_equal(state.z[i], self._z_before[i]):
                    slack = -1.0
            for e, t in state.edge_duals.items():
                if e not in blocks and not np.array_equal(t, self._edges_before.get(e, t * 0)):
                    slack = -1.0
            self.families["stagnation"].observe(slack, where)

        nodes = [b for b in blocks if not is_edge(b)]
        if self._fam("moreau") is not None and nodes:
            x = state.primal_estimate()
            for i in nodes:
                err = float(np.max(np.abs(x[i] + state.z[i] - self._center[i])))
                self.families["moreau"].observe(1e-10 - err, where)

        fam = self._fam("minorant_domination")
        if fam is not None:
            x = state.primal_estimate()
            for i in nodes:
                if not state.is_v4(i):
                    continue
                f, mino = state.functions[i], state.minorants[i]
                pts = x[i] + self.rng.uniform(-self.box, self.box, size=(self.samples, state.m))
                fam.observe(float(np.min(f.values(pts) + 1e-9 - mino.values(pts))), where)

    def end_cycle(self, state, records):
        n = state.n
        fam = self._fam("telescoping")
        if fam is not None:
            duals = [self.cycle_start_dual] + [r.dual_value for r in records]
            steps = [0.0] + [r.step_norm_sq for r in records]
            csum = np.cumsum(steps)
            for w1 in range(len(duals)):
                for w2 in range(w1 + 1, len(duals)):
                    if math.isfinite(duals[w1]) and math.isfinite(duals[w2]):
                        gain = duals[w2] - duals[w1] - 0.5 * (csum[w2] - csum[w1])
                        fam.observe(gain + 1e-8, (n, w2))

        fam = self._fam("dual_consistency")
        if fam is not None:
            a, b = state.dual_value(), state.dual_value_incremental()
            if math.isfinite(a) or math.isfinite(b):
                fam.observe(1e-9 * (1 + abs(a)) - abs(a - b), (n, len(records)))

        fam = self._fam("sparsity")
        if fam is not None:
            worst = 0.0
            for e, t in state.edge_duals.items():
                i, j = e[:2]
                block = np.zeros((state.num_nodes, state.m))
                if len(e) == 2:
                    block[i], block[j] = t, -np.asarray(t)
                else:
                    block[i, e[2]], block[j, e[2]] = t, -t
                worst = max(worst, float(np.max(np.abs(block.sum(axis=0)))))
            fam.observe(-worst, (n, len(records)))

        fam = self._fam("prox_gap_bound")
        if fam is not None:
            for probe in probe_v4(state):
                fam.observe(min(probe.slack + 1e-8, probe.delta_f + 1e-12), (n, len(records)))

    def results(self):
        return [self.families[name] for name in self.families]

    @property
    def ok(self):
        return all(f.passed or f.soft for f in self.families.values())

    def first_failure(self):
        fails = [f for f in self.families.values() if not f.passed and not f.soft]
        if not fails:
            return None
        return min(fails, key=lambda f: f.first_failure)


def gap_times_n_bounded(cycle_gaps, start=None):
    """Slack of max_{n >= start} gap_n * n against twice its value at ``start`` (>= 0 passes)."""
    ns = np.array([n for n, _ in cycle_gaps], dtype=float)
    gaps = np.array([g for _, g in cycle_gaps], dtype=float)
    if start is None:
        start = max(1, int(ns.max()) // 4)
    tail = ns >= start
    prod = ns[tail] * np.maximum(gaps[tail], 0.0)
    ref = float(prod[0])
    return 2.0 * ref - float(prod.max())


def v4_nodes(instance):
    return [i for i, f in enumerate(instance.functions) if f.node_class == V4]
