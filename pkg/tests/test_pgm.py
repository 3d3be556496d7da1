import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diskfit.errors import PGMError, PGMHeaderError, PGMTruncatedError, PGMUnsupportedError
from diskfit.imagepipe import GrayImage
from diskfit.pgm import encode_pgm, parse_pgm, read_pgm, write_pgm


def test_round_trip_8bit(tmp_path, rng):
    img = GrayImage(rng.integers(0, 256, (17, 23)).astype(float))
    write_pgm(img, tmp_path / "a.pgm")
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm").pixels, img.pixels)
    assert not (tmp_path / "a.pgm.tmp").exists()


def test_p2_and_p5_agree(rng):
    img = GrayImage(rng.integers(0, 256, (9, 11)).astype(float))
    a = parse_pgm(encode_pgm(img, binary=True))
    b = parse_pgm(encode_pgm(img, binary=False))
    np.testing.assert_array_equal(a.pixels, b.pixels)


@settings(max_examples=50, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 65535)), st.booleans())
def test_round_trip_property(px, binary):
    img = GrayImage(px.astype(float))
    np.testing.assert_array_equal(parse_pgm(encode_pgm(img, binary)).pixels, img.pixels)


def test_known_bytes():
    data = b"P5\n# made by hand\n3 2\n255\n" + bytes([0, 1, 2, 253, 254, 255])
    np.testing.assert_array_equal(parse_pgm(data).pixels, [[0, 1, 2], [253, 254, 255]])
    wide = b"P5 2 1 1000\n" + bytes([0x03, 0xE8, 0x00, 0x07])
    np.testing.assert_array_equal(parse_pgm(wide).pixels, [[1000, 7]])
    ascii_ = b"P2\n2 2 # dims\n15\n0 15\n# mid\n7 3\n"
    np.testing.assert_array_equal(parse_pgm(ascii_).pixels, [[0, 15], [7, 3]])


def test_no_comments_written():
    assert b"#" not in encode_pgm(GrayImage(np.ones((2, 2))))


@pytest.mark.parametrize(
    "data, err",
    [
        (b"P7\n1 1\n255\n\x00", PGMUnsupportedError),
        (b"P6\n1 1\n255\n\x00\x00\x00", PGMUnsupportedError),
        (b"P5\n2 x\n255\n\x00\x00", PGMHeaderError),
        (b"P5\n2 2\n70000\n", PGMHeaderError),
        (b"P5\n0 2\n255\n", PGMHeaderError),
        (b"P5\n2 2", PGMHeaderError),
        (b"P5\n2 2\n255\n\x00\x00\x00", PGMTruncatedError),
        (b"P2\n2 2\n255\n1 2 3", PGMTruncatedError),
        (b"P2\n1 1\n10\n11\n", PGMHeaderError),
    ],
)
def test_malformed(data, err):
    with pytest.raises(err) as info:
        parse_pgm(data)
    assert info.value.exit_code == 4


def test_distinct_codes():
    codes = {PGMHeaderError.code, PGMTruncatedError.code, PGMUnsupportedError.code}
    assert len(codes) == 3


def test_io_errors(tmp_path):
    with pytest.raises(PGMError):
        read_pgm(tmp_path / "missing.pgm")
    with pytest.raises(PGMError):
        write_pgm(GrayImage(np.ones((2, 2))), tmp_path / "no" / "dir.pgm")
    with pytest.raises(PGMError):
        encode_pgm(GrayImage(np.full((1, 1), 70000.0)))
