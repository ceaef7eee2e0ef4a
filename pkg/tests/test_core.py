import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from distdykstra.core import (StructuralError, axpy, broadcast_block, check_block_index, dot,
                              embed_block, norm_sq, stacked)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_stacked_copies_and_validates():
    src = [[1, 2], [3, 4]]
    arr = stacked(src)
    assert arr.dtype == np.float64 and arr.shape == (2, 2)
    arr[0, 0] = 9
    assert src[0][0] == 1
    assert stacked([1, 2, 3, 4], m=2).shape == (2, 2)
    with pytest.raises(StructuralError):
        stacked([1.0, 2.0])
    with pytest.raises(StructuralError):
        stacked(np.zeros((0, 3)))


def test_shape_mismatch_rejected():
    with pytest.raises(StructuralError):
        axpy(1.0, np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(StructuralError):
        dot(np.zeros((2, 2)), np.zeros((2, 3)))


def test_embed_and_broadcast():
    e = embed_block(3, 1, [1.0, 2.0])
    assert e.tolist() == [[0, 0], [1, 2], [0, 0]]
    assert broadcast_block([1.0, 2.0], 3).tolist() == [[1, 2]] * 3
    with pytest.raises(StructuralError):
        check_block_index(3, 3)
    with pytest.raises(StructuralError):
        check_block_index(1.0, 3)


@given(arrays(np.float64, (3, 2), elements=finite), arrays(np.float64, (3, 2), elements=finite),
       finite)
def test_vector_space_identities(u, v, a):
    assert np.allclose(axpy(a, u, v), a * u + v)
    assert norm_sq(u) == pytest.approx(dot(u, u), rel=1e-12, abs=1e-12)
    assert dot(u, v) == pytest.approx(float(np.vdot(u.ravel(), v.ravel())), rel=1e-9, abs=1e-9)
