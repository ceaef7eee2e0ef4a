"""Convex node functions f_i on R^m.

Every function carries a node class:

* ``V1`` proximable,
* ``V2`` indicator of a closed convex set,
* ``V3`` proximable with full domain,
* ``V4`` full domain, handled through subgradients and affine minorants.

The engine only needs four capabilities from a function: ``value``,
``subgradient`` (full-domain kinds), ``prox`` and ``conjugate_at`` /
``conjugate_witness`` for evaluating f* at a dual point.
"""

from dataclasses import dataclass, replace

import numpy as np

from .core import CapabilityError, ConsistencyError, StructuralError

V1, V2, V3, V4 = "V1", "V2", "V3", "V4"
NODE_CLASSES = (V1, V2, V3, V4)

TIE_RTOL = 1e-12
SLOPE_TOL = 1e-8


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class ProxResult:
    x: np.ndarray
    z: np.ndarray
    witness_value: float


@dataclass(frozen=True, eq=False)
class AffineMinorant:
    """x -> slope . x + intercept

    ``anchor`` and ``error`` optionally record the linearization error
    ``f(anchor) - g(anchor)`` of the function being minorized, so that
    ``f(x) - g(x)`` can be evaluated without cancelling two large values.
    """

    slope: np.ndarray
    intercept: float
    anchor: np.ndarray = None
    error: float = 0.0

    def __call__(self, x):
        return float(np.dot(self.slope, x) + self.intercept)

    def values(self, points):
        return np.asarray(points) @ self.slope + self.intercept

    def gap(self, f, x):
        """f(x) - g(x)."""
        x = _vec(x)
        if self.anchor is None:
            return f.value(x) - self(x)
        return f.difference(x, self.anchor) - float(self.slope @ (x - self.anchor)) + self.error

    @classmethod
    def through(cls, point, value, slope, error=None):
        """Affine function with the given slope taking ``value`` at ``point``.

        Passing ``error`` anchors the minorant at ``point``.
        """
        slope = _vec(slope).copy()
        point = _vec(point)
        intercept = float(value - np.dot(slope, point))
        if error is None:
            return cls(slope, intercept)
        return cls(slope, intercept, point.copy(), float(error))


def _tied(f1, f2):
    return abs(f1 - f2) <= TIE_RTOL * max(1.0, abs(f1), abs(f2))


@dataclass(frozen=True, eq=False)
class NodeFunction:
    node_class: str = V1

    kind = "abstract"
    is_indicator = False

    def __post_init__(self):
        if self.node_class not in NODE_CLASSES:
            raise StructuralError(f"unknown node class {self.node_class!r}")
        if self.node_class == V2 and not self.is_indicator:
            raise StructuralError(f"class V2 is reserved for indicators, not {self.kind}")
        if self.node_class in (V3, V4) and self.is_indicator:
            raise StructuralError(f"class {self.node_class} needs a full-domain function")

    @property
    def dim(self):
        raise NotImplementedError

    def with_class(self, node_class):
        return replace(self, node_class=node_class)

    def value(self, x):
        raise NotImplementedError

    def values(self, points):
        return np.array([self.value(p) for p in np.asarray(points)])

    def difference(self, x, y):
        """f(x) - f(y); subclasses evaluate it without cancellation where they can."""
        return self.value(x) - self.value(y)

    def subgradient(self, x):
        raise CapabilityError(f"{self.kind} has no subgradient oracle")

    def prox(self, p):
        raise NotImplementedError

    def conjugate_at(self, z, witness_x):
        """f*(z) given a point with z in the subdifferential at that point."""
        return float(np.dot(witness_x, z) - self.value(witness_x))

    def conjugate_witness(self, z):
        """A point x with z in the subdifferential at x, or None when f*(z) = +inf."""
        raise CapabilityError(f"{self.kind} has no conjugate witness")

    def params(self):
        return {}


@dataclass(frozen=True, eq=False)
class Zero(NodeFunction):
    m: int = 1

    kind = "zero"

    @property
    def dim(self):
        return self.m

    def value(self, x):
        return 0.0

    def values(self, points):
        return np.zeros(len(points))

    def subgradient(self, x):
        return np.zeros(self.m)

    def prox(self, p):
        p = _vec(p)
        return ProxResult(p.copy(), p - p, 0.0)

    def conjugate_witness(self, z):
        return np.zeros(self.m) if np.all(_vec(z) == 0.0) else None

    def params(self):
        return {"m": self.m}


@dataclass(frozen=True, eq=False)
class Quadratic(NodeFunction):
    """x -> 1/2 x'Ax + b'x + c with A symmetric PSD."""

    A: np.ndarray = None
    b: np.ndarray = None
    c: float = 0.0

    kind = "quadratic"

    def __post_init__(self):
        super().__post_init__()
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = _vec(self.b)
        if A.shape != (b.size, b.size):
            raise StructuralError(f"A has shape {A.shape}, expected {(b.size, b.size)}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12):
            raise StructuralError("A must be symmetric")
        if np.linalg.eigvalsh(A).min() < -1e-12:
            raise StructuralError("A must be positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "_shifted", np.eye(b.size) + A)

    @property
    def dim(self):
        return self.b.size

    def value(self, x):
        x = _vec(x)
        return float(0.5 * x @ self.A @ x + self.b @ x + self.c)

    def values(self, points):
        P = np.atleast_2d(points)
        return 0.5 * np.einsum("ij,jk,ik->i", P, self.A, P) + P @ self.b + self.c

    def gradient(self, x):
        return self.A @ _vec(x) + self.b

    def difference(self, x, y):
        y = _vec(y)
        d = _vec(x) - y
        return float(self.gradient(y) @ d + 0.5 * d @ self.A @ d)

    def subgradient(self, x):
        return self.gradient(x)

    def prox(self, p):
        p = _vec(p)
        x = np.linalg.solve(self._shifted, p - self.b)
        return ProxResult(x, p - x, self.value(x))

    def conjugate_witness(self, z):
        rhs = _vec(z) - self.b
        x, *_ = np.linalg.lstsq(self.A, rhs, rcond=None)
        if np.linalg.norm(self.A @ x - rhs) > 1e-10 * (1.0 + np.linalg.norm(rhs)):
            return None
        return x

    def params(self):
        return {"A": self.A.tolist(), "b": self.b.tolist(), "c": self.c}


@dataclass(frozen=True, eq=False)
class MaxTwoQuadratics(NodeFunction):
    """max of two quadratics sharing the curvature matrix A."""

    A: np.ndarray = None
    b1: np.ndarray = None
    c1: float = 0.0
    b2: np.ndarray = None
    c2: float = 0.0

    kind = "max_two_quadratics"

    def __post_init__(self):
        super().__post_init__()
        q1 = Quadratic(A=self.A, b=self.b1, c=self.c1)
        q2 = Quadratic(A=self.A, b=self.b2, c=self.c2)
        for name, val in (("A", q1.A), ("b1", q1.b), ("c1", q1.c), ("b2", q2.b), ("c2", q2.c)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "branches", (q1, q2))

    @property
    def dim(self):
        return self.b1.size

    def value(self, x):
        return max(q.value(x) for q in self.branches)

    def values(self, points):
        return np.maximum(*(q.values(points) for q in self.branches))

    def difference(self, x, y):
        y = _vec(y)
        q1, q2 = self.branches
        h = float((self.b1 - self.b2) @ y + self.c1 - self.c2)  # q1(y) - q2(y)
        g1, g2 = (0.0, -h) if h >= 0 else (h, 0.0)
        return max(q1.difference(x, y) + g1, q2.difference(x, y) + g2)

    def subgradient(self, x):
        q1, q2 = self.branches
        f1, f2 = q1.value(x), q2.value(x)
        if _tied(f1, f2):
            return 0.5 * (q1.gradient(x) + q2.gradient(x))
        return q1.gradient(x) if f1 > f2 else q2.gradient(x)

    def _multiplier_solution(self, lhs, rhs_base):
        # x(theta) = lhs^-1 (rhs_base - b2 - theta (b1 - b2)); the branch gap
        # q1 - q2 at x(theta) is affine in theta because A is shared.
        d = self.b1 - self.b2
        u = np.linalg.solve(lhs, rhs_base - self.b2)
        w = np.linalg.solve(lhs, d)
        slope = float(d @ w)
        gap0 = float(d @ u + self.c1 - self.c2)
        if slope <= 0.0:
            theta = 1.0 if gap0 >= 0.0 else 0.0
        else:
            theta = min(1.0, max(0.0, gap0 / slope))
        return u - theta * w, theta

    def prox_with_multiplier(self, p):
        p = _vec(p)
        x, theta = self._multiplier_solution(self.branches[0]._shifted, p)
        return ProxResult(x, p - x, self.value(x)), theta

    def prox(self, p):
        return self.prox_with_multiplier(p)[0]

    def conjugate_witness(self, z):
        if np.linalg.eigvalsh(self.A).min() <= 1e-12:
            raise CapabilityError("conjugate witness needs a positive definite A")
        x, _ = self._multiplier_solution(self.A, _vec(z))
        return x

    def params(self):
        return {"A": self.A.tolist(), "b1": self.b1.tolist(), "c1": self.c1,
                "b2": self.b2.tolist(), "c2": self.c2}


@dataclass(frozen=True, eq=False)
class AffinePair(NodeFunction):
    """x -> max(a1'x + b1, a2'x + b2); |x| is a1=1, a2=-1, b1=b2=0."""

    a1: np.ndarray = None
    b1: float = 0.0
    a2: np.ndarray = None
    b2: float = 0.0

    kind = "affine_pair"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "a1", _vec(self.a1))
        object.__setattr__(self, "a2", _vec(self.a2))
        object.__setattr__(self, "b1", float(self.b1))
        object.__setattr__(self, "b2", float(self.b2))
        if self.a1.shape != self.a2.shape:
            raise StructuralError("affine pieces must share a dimension")

    @property
    def dim(self):
        return self.a1.size

    def value(self, x):
        x = _vec(x)
        return float(max(self.a1 @ x + self.b1, self.a2 @ x + self.b2))

    def values(self, points):
        P = np.atleast_2d(points)
        return np.maximum(P @ self.a1 + self.b1, P @ self.a2 + self.b2)

    def difference(self, x, y):
        y = _vec(y)
        d = _vec(x) - y
        h = float((self.a1 - self.a2) @ y + self.b1 - self.b2)
        g1, g2 = (0.0, -h) if h >= 0 else (h, 0.0)
        return float(max(self.a1 @ d + g1, self.a2 @ d + g2))

    def subgradient(self, x):
        x = _vec(x)
        f1, f2 = self.a1 @ x + self.b1, self.a2 @ x + self.b2
        if _tied(f1, f2):
            return 0.5 * (self.a1 + self.a2)
        return self.a1.copy() if f1 > f2 else self.a2.copy()

    def prox(self, p):
        return prox_max_two_affine(self.a1, self.b1, self.a2, self.b2, p)[0]

    def conjugate_witness(self, z):
        z = _vec(z)
        d = self.a1 - self.a2
        dd = float(d @ d)
        if dd == 0.0:
            return np.zeros_like(z) if np.linalg.norm(z - self.a1) <= 1e-12 else None
        theta = float(d @ (z - self.a2)) / dd
        if theta < -1e-12 or theta > 1 + 1e-12:
            return None
        if np.linalg.norm(self.a2 + theta * d - z) > 1e-10 * (1.0 + np.linalg.norm(z)):
            return None
        # any point where both pieces are active
        return (self.b2 - self.b1) / dd * d

    def params(self):
        return {"a1": self.a1.tolist(), "b1": self.b1, "a2": self.a2.tolist(), "b2": self.b2}


@dataclass(frozen=True, eq=False)
class IndicatorBox(NodeFunction):
    lo: np.ndarray = None
    hi: np.ndarray = None
    node_class: str = V2

    kind = "indicator_box"
    is_indicator = True

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "lo", _vec(self.lo))
        object.__setattr__(self, "hi", _vec(self.hi))
        if self.lo.shape != self.hi.shape:
            raise StructuralError("box bounds must share a dimension")

    @property
    def dim(self):
        return self.lo.size

    def value(self, x):
        x = _vec(x)
        return 0.0 if bool(np.all(x >= self.lo) and np.all(x <= self.hi)) else np.inf

    def prox(self, p):
        if np.any(self.lo > self.hi):
            raise StructuralError("empty box")
        p = _vec(p)
        x = np.clip(p, self.lo, self.hi)
        return ProxResult(x, p - x, 0.0)

    def conjugate_at(self, z, witness_x):
        return float(np.dot(witness_x, z))

    def conjugate_witness(self, z):
        z = _vec(z)
        x = np.where(z > 0, self.hi, self.lo)
        x = np.where(z == 0, np.where(np.isfinite(self.lo), self.lo, self.hi), x)
        if not np.all(np.isfinite(x)):
            if np.any(~np.isfinite(x) & (z != 0)):
                return None
            x = np.where(np.isfinite(x), x, 0.0)
        return x

    def params(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class IndicatorHalfspace(NodeFunction):
    """Indicator of {x : a'x <= beta}."""

    a: np.ndarray = None
    beta: float = 0.0
    node_class: str = V2

    kind = "indicator_halfspace"
    is_indicator = True

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "a", _vec(self.a))
        object.__setattr__(self, "beta", float(self.beta))
        if not np.any(self.a):
            raise StructuralError("halfspace normal must be nonzero")

    @property
    def dim(self):
        return self.a.size

    def value(self, x):
        return 0.0 if float(self.a @ _vec(x)) <= self.beta else np.inf

    def prox(self, p):
        p = _vec(p)
        excess = float(self.a @ p) - self.beta
        x = p - (excess / float(self.a @ self.a)) * self.a if excess > 0 else p.copy()
        return ProxResult(x, p - x, 0.0)

    def conjugate_at(self, z, witness_x):
        return float(np.dot(witness_x, z))

    def conjugate_witness(self, z):
        z = _vec(z)
        aa = float(self.a @ self.a)
        lam = float(self.a @ z) / aa
        if lam < 0 or np.linalg.norm(z - lam * self.a) > 1e-10 * (1.0 + np.linalg.norm(z)):
            return None
        return (self.beta / aa) * self.a

    def params(self):
        return {"a": self.a.tolist(), "beta": self.beta}


KINDS = {cls.kind: cls for cls in (Zero, Quadratic, MaxTwoQuadratics, AffinePair,
                                   IndicatorBox, IndicatorHalfspace)}


def function_to_dict(f):
    return {"kind": f.kind, "class": f.node_class, "params": f.params()}


def function_from_dict(d):
    try:
        cls = KINDS[d["kind"]]
    except KeyError:
        raise StructuralError(f"unknown function kind {d.get('kind')!r}") from None
    return cls(node_class=d.get("class", V1), **d.get("params", {}))


def prox_max_two_affine(a1, b1, a2, b2, p):
    """Prox of x -> max(a1'x + b1, a2'x + b2) at ``p``.

    Returns the prox result and the multiplier theta in [0, 1] with
    ``z = theta*a1 + (1 - theta)*a2``.
    """
    a1, a2, p = _vec(a1), _vec(a2), _vec(p)
    d = a1 - a2
    dd = float(d @ d)
    if dd == 0.0:
        theta = 1.0 if b1 >= b2 else 0.0
    else:
        theta = (float(d @ (p - a2)) + b1 - b2) / dd
        theta = min(1.0, max(0.0, theta))
    z = a2 + theta * d
    x = p - z
    value = max(float(a1 @ x) + b1, float(a2 @ x) + b2)
    return ProxResult(x, z, value), theta


def prox_max_two_minorants(f, g1, g2, p, at):
    """Prox of max(g1, g2) at ``p`` for two anchored minorants of ``f``.

    Same result as :func:`prox_max_two_affine`, but the intercept difference is
    taken as ``g1(at) - g2(at) = gap2(at) - gap1(at)`` with ``at`` close to
    both anchors. When the slopes nearly coincide the multiplier divides by
    ``||a1 - a2||^2``, and subtracting two raw intercepts there would leave it
    dominated by rounding. Returns (ProxResult, theta, linearization error at x).
    """
    p, at = _vec(p), _vec(at)
    a1, a2 = g1.slope, g2.slope
    d = a1 - a2
    dd = float(d @ d)
    h = g2.gap(f, at) - g1.gap(f, at)
    if dd == 0.0:
        theta = 1.0 if h >= 0 else 0.0
    else:
        theta = (h + float(d @ ((p - at) - a2))) / dd
        theta = min(1.0, max(0.0, theta))
    z = a2 + theta * d
    x = p - z
    value = max(g1(x), g2(x))
    error = min(g1.gap(f, x), g2.gap(f, x))
    return ProxResult(x, z, value), theta, error


def conjugate_at(f, z, witness_x=None):
    """f*(z) for a node function (via a primal witness) or an affine minorant."""
    if isinstance(f, AffineMinorant):
        if np.linalg.norm(_vec(z) - f.slope) > SLOPE_TOL:
            raise ConsistencyError("dual point does not match the minorant slope")
        return -f.intercept
    return f.conjugate_at(_vec(z), _vec(witness_x))


def linearize(f, q):
    """Tangent cut of a full-domain function at ``q``."""
    q = _vec(q)
    return AffineMinorant.through(q, f.value(q), f.subgradient(q), error=0.0)
