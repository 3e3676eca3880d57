import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sphereproj.formats import (
    FormatError, decode_pgm, decode_sphc, decode_sphd, encode_pgm, encode_sphc, encode_sphd, to_gray,
)

f32 = st.floats(-1e6, 1e6, allow_nan=False, width=32)


def test_sphd_layout():
    data = encode_sphd(np.array([[1.0, 2.0, 3.0]]), 4.5)
    assert data[:4] == b"SPHD"
    assert struct.unpack_from("<IIIf", data, 4) == (1, 1, 3, 4.5)
    assert np.frombuffer(data[20:], "<f4").tolist() == [1.0, 2.0, 3.0]


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, max_side=16), elements=f32), f32)
def test_sphd_roundtrip(values, radius):
    v, r = decode_sphd(encode_sphd(values, radius))
    assert np.array_equal(v, values.astype(np.float64)) and r == radius


def test_sphd_rejects_garbage():
    with pytest.raises(FormatError):
        decode_sphd(b"XXXX" + bytes(16))
    good = encode_sphd(np.zeros((2, 2)), 1.0)
    with pytest.raises(FormatError):
        decode_sphd(good[:-4])


def test_sphc_layout_and_roundtrip(rng):
    views = rng.uniform(0, 1, (5, 4, 3)).astype(np.float32)
    data = encode_sphc(views)
    assert data[:4] == b"SPHC" and struct.unpack_from("<III", data, 4) == (4, 3, 5)
    assert np.array_equal(decode_sphc(data), views.astype(np.float64))


def test_sphc_range_checked():
    with pytest.raises(ValueError):
        encode_sphc(np.full((1, 2, 2), 1.5))


@given(hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, max_side=20)))
def test_pgm_roundtrip(img):
    assert np.array_equal(decode_pgm(encode_pgm(img)), img)


def test_pgm_header_with_comment():
    data = b"P5\n# made by hand\n2 1\n255\n\x07\x09"
    assert decode_pgm(data).tolist() == [[7, 9]]


def test_to_gray_keeps_zero_in_range():
    assert np.all(to_gray(np.full((3, 3), 7.0)) == 255)
    assert to_gray(np.array([[0.0, 5.0, 10.0]])).tolist() == [[0, 128, 255]]
    assert np.all(to_gray(np.zeros((2, 2))) == 0)
