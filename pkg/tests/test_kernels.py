import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from renderbench.errors import BadRun, OddLength
from renderbench.kernels import BACKEND, pure

try:
    from renderbench.kernels import _speedups
    BACKENDS = [pure, _speedups]
except ImportError:
    BACKENDS = [pure]


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def impl(request):
    return request.param


class TestRleWorkedExamples:
    def test_aaab(self, impl):
        assert impl.rle_encode(b"AAAB") == bytes([3, 0x41, 1, 0x42])

    def test_empty(self, impl):
        assert impl.rle_encode(b"") == b""
        assert impl.rle_decode(b"") == b""

    def test_run_split_at_255(self, impl):
        assert impl.rle_encode(b"\x00" * 300) == bytes([0xFF, 0x00, 0x2D, 0x00])


class TestRleErrors:
    def test_zero_count(self, impl):
        with pytest.raises(BadRun):
            impl.rle_decode(bytes([0, 0x41]))

    def test_odd_length(self, impl):
        with pytest.raises(OddLength):
            impl.rle_decode(bytes([1, 0x41, 2]))


class TestRleRoundtrip:
    @given(data=st.binary(max_size=4096))
    def test_roundtrip_default_backend(self, data):
        from renderbench import kernels

        assert kernels.rle_decode(kernels.rle_encode(data)) == data

    def test_runs_are_maximal(self, impl):
        encoded = impl.rle_encode(b"AABBA")
        assert encoded == bytes([2, 0x41, 2, 0x42, 1, 0x41])

    def test_bulk_seeded(self, impl):
        rng = random.Random(7)
        for _ in range(300):
            n = rng.randint(0, 2000)
            if rng.random() < 0.5:
                data = bytes(rng.choice(b"\x00\x01") for _ in range(n))
            else:
                data = rng.randbytes(n)
            assert impl.rle_decode(impl.rle_encode(data)) == data


class TestPrefixDecode:
    def test_splits_at_pixel_boundary(self, impl):
        payload = impl.rle_encode(b"ABCD" * 4) + b"annotation"
        pixels, consumed = impl.rle_decode_prefix(payload, 16)
        assert pixels == b"ABCD" * 4
        assert payload[consumed:] == b"annotation"

    def test_overshoot_reported(self, impl):
        payload = impl.rle_encode(b"\x07" * 10)
        pixels, _ = impl.rle_decode_prefix(payload, 5)
        assert len(pixels) == 10  # run crosses the boundary; caller rejects

    def test_undershoot_reported(self, impl):
        pixels, consumed = impl.rle_decode_prefix(bytes([2, 0x41]), 10)
        assert pixels == b"AA" and consumed == 2


class TestEqualFraction:
    def test_basic(self, impl):
        assert impl.equal_fraction(b"abcd", b"abzd") == 0.75
        assert impl.equal_fraction(b"", b"") == 1.0
        assert impl.equal_fraction(b"xy", b"xy") == 1.0

    def test_length_mismatch(self, impl):
        with pytest.raises(ValueError):
            impl.equal_fraction(b"a", b"ab")

    def test_self_similarity(self, impl):
        rng = random.Random(3)
        for _ in range(100):
            data = rng.randbytes(rng.randint(1, 512))
            assert impl.equal_fraction(data, data) == 1.0


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("extension not built")
    rng = random.Random(11)
    for _ in range(200):
        data = rng.randbytes(rng.randint(0, 1500))
        assert pure.rle_encode(data) == _speedups.rle_encode(data)
        other = rng.randbytes(len(data))
        assert pure.equal_fraction(data, other) == _speedups.equal_fraction(data, other)


def test_selected_backend_exposed():
    assert BACKEND in ("cython", "pure")
