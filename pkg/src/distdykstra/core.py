"""Stacked vectors over X = [R^m]^|V| and the package's error types.

A stacked vector is a float64 ndarray of shape ``(num_nodes, m)``; row ``i``
is the block owned by node ``i``.
"""

import numpy as np


class DykstraError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(DykstraError, ValueError):
    """Malformed input: shape mismatch, empty feasible set, bad graph."""


class PreconditionError(DykstraError, ValueError):
    """An operation was called outside its documented preconditions."""


class CapabilityError(DykstraError, TypeError):
    """A function kind lacks the requested capability (e.g. subgradient of an indicator)."""


class ConsistencyError(DykstraError, RuntimeError):
    """Internal state no longer satisfies a representation invariant."""


class UnsupportedScheduleError(DykstraError, ValueError):
    """A block set the engine cannot execute (mixed classes, overlapping supports)."""


def stacked(blocks, m=None):
    """Coerce ``blocks`` to a validated stacked vector (2-D float64 array, copied)."""
    arr = np.array(blocks, dtype=np.float64)
    if arr.ndim == 1 and m is not None:
        arr = arr.reshape(-1, m)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise StructuralError(f"stacked vector needs shape (|V|>=1, m>=1), got {arr.shape}")
    return arr


def zeros(num_nodes, m):
    return np.zeros((num_nodes, m))


def check_same_shape(u, v):
    if np.shape(u) != np.shape(v):
        raise StructuralError(f"shape mismatch: {np.shape(u)} vs {np.shape(v)}")


def axpy(a, u, v):
    """Return ``a*u + v`` for stacked vectors of equal shape."""
    check_same_shape(u, v)
    return a * np.asarray(u, dtype=np.float64) + np.asarray(v, dtype=np.float64)


def norm_sq(u):
    """Sum of squares of all entries."""
    u = np.asarray(u, dtype=np.float64)
    return float(np.sum(u * u))


def dot(u, v):
    check_same_shape(u, v)
    return float(np.sum(np.asarray(u) * np.asarray(v)))


def embed_block(num_nodes, i, block):
    """Stacked vector that is ``block`` at node ``i`` and zero elsewhere."""
    block = np.asarray(block, dtype=np.float64)
    out = np.zeros((num_nodes, block.shape[0]))
    out[check_block_index(i, num_nodes)] = block
    return out


def check_block_index(i, num_nodes):
    if not (isinstance(i, (int, np.integer)) and 0 <= i < num_nodes):
        raise StructuralError(f"block index {i!r} out of range [0, {num_nodes})")
    return int(i)


def broadcast_block(x, num_nodes):
    """The diagonal element (x, x, ..., x)."""
    x = np.asarray(x, dtype=np.float64)
    return np.tile(x, (num_nodes, 1))
