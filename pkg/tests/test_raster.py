import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from cdnarec.errors import (MalformedHeaderError, MultiChannelError, ParseError,
                            TruncatedPayloadError)
from cdnarec.raster import (FieldMap, Raster, RasterFormat, load_raster, normalize,
                            resize_bilinear, sniff_format, to_pgm_bytes, transpose)

unit = st.floats(0.0, 1.0, allow_nan=False)


def rasters(max_side=8):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=unit)).map(Raster)


def eight_bit(max_side=8):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(np.uint8, s)).map(lambda a: Raster(a / 255.0))


def test_p2_scaling():
    r = load_raster(b"P2 2 1 255\n0 255\n")
    assert (r.width, r.height) == (2, 1)
    assert r.data.tolist() == [[0.0, 1.0]]


def test_p2_maxval_100():
    assert load_raster(b"P2\n1 1\n100\n50\n").data[0, 0] == 0.5


def test_p2_comments_are_skipped():
    r = load_raster(b"P2\n# made by hand\n2 1 # trailing\n4\n1 3\n")
    assert r.data.tolist() == [[0.25, 0.75]]


def test_p5_sixteen_bit():
    blob = b"P5 2 1 65535\n" + np.array([0, 65535], dtype=">u2").tobytes()
    assert load_raster(blob).data.tolist() == [[0.0, 1.0]]


@pytest.mark.parametrize("blob, err", [
    (b"P2 2 1\n0 1\n", MalformedHeaderError),
    (b"P2 2 1 0\n0 0\n", MalformedHeaderError),
    (b"P2 2 2 255\n0 1 2\n", TruncatedPayloadError),
    (b"P5 4 4 255\n\x00\x01", TruncatedPayloadError),
    (b"XX 1 1 1\n0\n", ParseError),
])
def test_malformed_inputs(blob, err):
    with pytest.raises(err):
        load_raster(blob)


def _png(mode, size=(3, 2)):
    buf = io.BytesIO()
    Image.new(mode, size, color=128 if mode == "L" else (10, 20, 30)).save(buf, format="PNG")
    return buf.getvalue()


def test_rgb_png_rejected():
    with pytest.raises(MultiChannelError):
        load_raster(_png("RGB"))


def test_gray_png():
    blob = _png("L")
    assert sniff_format(blob) is RasterFormat.PNG
    r = load_raster(blob)
    assert (r.width, r.height) == (3, 2)
    assert np.allclose(r.data, 128 / 255)


def test_load_from_path_and_stream(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2 1 1 2\n1\n")
    assert load_raster(path).data[0, 0] == 0.5
    assert load_raster(str(path)).data[0, 0] == 0.5
    assert load_raster(io.BytesIO(path.read_bytes())).data[0, 0] == 0.5


@pytest.mark.parametrize("fmt", [RasterFormat.PGM_P2, RasterFormat.PGM_P5])
@settings(max_examples=40, deadline=None)
@given(r=eight_bit())
def test_pgm_round_trip_bit_exact(fmt, r):
    blob = to_pgm_bytes(r, fmt)
    again = load_raster(blob)
    assert again == r
    assert to_pgm_bytes(again, fmt) == blob


def test_raster_rejects_out_of_range():
    with pytest.raises(ValueError):
        Raster(np.array([[1.5]]))
    with pytest.raises(ValueError):
        Raster(np.array([[np.nan]]))


def test_raster_data_is_read_only():
    r = Raster(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        r.data[0, 0] = 1.0


@pytest.mark.parametrize("values, expected", [
    ([0.2, 0.7], [0.0, 1.0]),
    ([0.4, 0.4, 0.4], [0.0, 0.0, 0.0]),
    ([0.0, 0.5, 1.0], [0.0, 0.5, 1.0]),
])
def test_normalize_examples(values, expected):
    assert np.allclose(normalize(Raster(np.array([values]))).data, [expected])


def test_normalize_accepts_unbounded_field():
    out = normalize(FieldMap(np.array([[-3.0, 1.0]])))
    assert out.data.tolist() == [[0.0, 1.0]]


@settings(max_examples=60, deadline=None)
@given(r=rasters())
def test_normalize_idempotent(r):
    once = normalize(r)
    assert normalize(once) == once


def test_resize_row():
    out = resize_bilinear(Raster(np.array([[0.0, 1.0]])), 3, 1)
    assert np.allclose(out.data, [[0.0, 0.5, 1.0]])


@settings(max_examples=40, deadline=None)
@given(r=rasters())
def test_resize_same_size_is_identity(r):
    assert resize_bilinear(r, r.width, r.height) == r


@settings(max_examples=40, deadline=None)
@given(c=unit, w=st.integers(1, 9), h=st.integers(1, 9))
def test_resize_preserves_constants(c, w, h):
    out = resize_bilinear(Raster(np.full((3, 4), c)), w, h)
    assert out.data.shape == (h, w)
    assert np.allclose(out.data, c, atol=1e-15)


def test_resize_keeps_corners():
    r = Raster(np.random.default_rng(3).uniform(size=(5, 7)))
    out = resize_bilinear(r, 20, 20)
    for (y, x), (yy, xx) in [((0, 0), (0, 0)), ((0, -1), (0, -1)), ((-1, 0), (-1, 0)), ((-1, -1), (-1, -1))]:
        assert out.data[yy, xx] == pytest.approx(r.data[y, x])


def test_transpose_shape_and_entries():
    r = Raster(np.arange(6).reshape(2, 3) / 10)
    t = transpose(r)
    assert t.data.shape == (3, 2)
    assert all(t.data[j, i] == r.data[i, j] for i in range(2) for j in range(3))
    assert transpose(Raster(np.zeros((1, 5)))).data.shape == (5, 1)


@settings(max_examples=60, deadline=None)
@given(r=rasters())
def test_transpose_involution_and_multiset(r):
    t = transpose(r)
    assert transpose(t) == r
    assert sorted(t.data.ravel()) == sorted(r.data.ravel())
