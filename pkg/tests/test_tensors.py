import io
import struct

import numpy as np
import pytest
import xxhash
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oclbench.errors import ChecksumError, ContractError, DataError, FormatError, TruncationError
from oclbench.rng import RngStream
from oclbench.tensors import FeatureMap, checksum, read_tensor_record, write_tensor_record


def _record(rank, dims, floats):
    body = b"OCLT" + struct.pack("<BB", 1, rank) + struct.pack(f"<{rank}I", *dims)
    body += struct.pack(f"<{len(floats)}f", *floats)
    return body + struct.pack("<Q", xxhash.xxh64_intdigest(body))


class TestChecksum:
    def test_xxh64_reference_vector(self):
        assert checksum(b"") == 0xEF46DB3751D8E999


class TestRead:
    def test_vector(self):
        out = read_tensor_record(_record(1, [3], [1.0, 2.0, 3.0]))
        assert out.dtype == np.float32
        np.testing.assert_array_equal(out, [1, 2, 3])

    def test_feature_map(self):
        out = read_tensor_record(_record(3, [2, 2, 1], [1, 2, 3, 4]))
        assert isinstance(out, FeatureMap)
        assert out.shape == (2, 2, 1)
        assert out.data[1, 0, 0] == 3

    def test_file_object(self):
        out = read_tensor_record(io.BytesIO(_record(1, [2], [5.0, 6.0])))
        np.testing.assert_array_equal(out, [5, 6])

    def test_truncated_payload(self):
        good = _record(3, [2, 2, 1], [1, 2, 3])  # only 3 floats for 4 slots
        with pytest.raises(TruncationError):
            read_tensor_record(good)

    def test_bad_magic(self):
        rec = bytearray(_record(1, [1], [1.0]))
        rec[0:4] = b"NOPE"
        with pytest.raises(FormatError):
            read_tensor_record(bytes(rec))

    def test_bad_version_and_rank(self):
        rec = bytearray(_record(1, [1], [1.0]))
        rec[4] = 2
        with pytest.raises(FormatError):
            read_tensor_record(bytes(rec))
        rec = bytearray(_record(1, [1], [1.0]))
        rec[5] = 2
        with pytest.raises(FormatError):
            read_tensor_record(bytes(rec))

    def test_flipped_payload_bit(self):
        rec = bytearray(_record(1, [2], [1.0, 2.0]))
        rec[12] ^= 0x01
        with pytest.raises(ChecksumError):
            read_tensor_record(bytes(rec))

    def test_nan_payload(self):
        with pytest.raises(DataError):
            read_tensor_record(_record(1, [1], [float("nan")]))


class TestWrite:
    def test_two_element_vector_is_26_bytes(self):
        assert len(write_tensor_record(np.zeros(2))) == 26

    def test_large_feature_map_round_trip(self):
        data = RngStream(0, "big").normals(100 * 100 * 100).reshape(100, 100, 100)
        fm = FeatureMap(data)
        back = read_tensor_record(write_tensor_record(fm))
        assert back == fm
        assert back.data.tobytes() == fm.data.tobytes()

    def test_negative_zero_sign(self):
        back = read_tensor_record(write_tensor_record(np.array([-0.0], dtype=np.float32)))
        assert np.signbit(back[0])

    def test_rejects_rank2(self):
        with pytest.raises(ContractError):
            write_tensor_record(np.zeros((2, 2)))

    def test_rejects_nonfinite(self):
        with pytest.raises(DataError):
            write_tensor_record(np.array([np.inf]))
        with pytest.raises(DataError):
            FeatureMap(np.full((1, 1, 1), np.nan))

    def test_feature_map_is_read_only(self):
        fm = FeatureMap(np.zeros((1, 2, 3)))
        with pytest.raises(ValueError):
            fm.data[0, 0, 0] = 1.0

    @given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=1, max_dims=1, max_side=64),
                      elements=st.floats(width=32, allow_nan=False, allow_infinity=False, allow_subnormal=True)))
    def test_vector_round_trip_bit_exact(self, arr):
        back = read_tensor_record(write_tensor_record(arr))
        assert back.tobytes() == arr.tobytes()

    @given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=3, max_dims=3, max_side=6),
                      elements=st.floats(width=32, allow_nan=False, allow_infinity=False)))
    def test_feature_map_round_trip_bit_exact(self, arr):
        fm = FeatureMap(arr)
        assert read_tensor_record(write_tensor_record(fm)).data.tobytes() == arr.tobytes()
