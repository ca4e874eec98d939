"""Frame codec: frozen byte layouts, round-trips, corruption rejection."""

import pytest
from hypothesis import given, strategies as st

from telecare.codec import (
    BadChecksum,
    BadRange,
    BadSync,
    FLAG_FINGER_OUT,
    FLAG_LOW_PERFUSION,
    FLAG_SENSOR_OK,
    FrameError,
    SensorFrame,
    checksum,
    decode_frame,
    encode_frame,
    iter_frames,
)

# Hand-derived reference encoding:
# 0xA5 + 0x01 + 72 + 97 + 0 + 1 + 0 = 336; 336 % 256 = 80 = 0x50.
REF_FRAME = SensorFrame(hr=72, spo2=97, flags=frozenset({FLAG_SENSOR_OK}), seq=1)
REF_BYTES = bytes.fromhex("a501486100010050")


def test_encode_reference_frame():
    assert encode_frame(REF_FRAME) == REF_BYTES


def test_encode_finger_out_frame():
    frame = SensorFrame(hr=None, spo2=None, flags=frozenset({FLAG_FINGER_OUT}), seq=0)
    encoded = encode_frame(frame)
    assert encoded[:7] == bytes.fromhex("a504ff7f000000")
    assert encoded[7] == (0xA5 + 0x04 + 0xFF + 0x7F) % 256


def test_checksum_values():
    assert checksum(bytes(7)) == 0x00
    assert checksum(bytes([0xA5, 0, 0, 0, 0, 0, 0])) == 0xA5
    assert checksum(REF_BYTES[:7]) == 0x50


def test_checksum_needs_exactly_seven_bytes():
    with pytest.raises(ValueError):
        checksum(bytes(8))


def test_decode_reference_frame():
    assert decode_frame(REF_BYTES) == REF_FRAME


def test_decode_bad_sync():
    corrupted = bytes([0x00]) + REF_BYTES[1:]
    with pytest.raises(BadSync):
        decode_frame(corrupted)


def test_decode_bad_checksum():
    corrupted = REF_BYTES[:7] + bytes([0x51])
    with pytest.raises(BadChecksum):
        decode_frame(corrupted)


def test_decode_bad_range_codes():
    # hr byte 251 is outside [0, 250] + {255}; fix the checksum so the
    # range check is what fires.
    body = bytearray(REF_BYTES)
    body[2] = 251
    body[7] = checksum(bytes(body[:7]))
    with pytest.raises(BadRange):
        decode_frame(bytes(body))
    body = bytearray(REF_BYTES)
    body[3] = 110  # spo2 codes stop at 100, 127 means missing
    body[7] = checksum(bytes(body[:7]))
    with pytest.raises(BadRange):
        decode_frame(bytes(body))


def test_frame_invariants_enforced():
    with pytest.raises(ValueError):
        SensorFrame(hr=251, spo2=97, flags=frozenset(), seq=0)
    with pytest.raises(ValueError):
        SensorFrame(hr=70, spo2=101, flags=frozenset(), seq=0)
    with pytest.raises(ValueError):
        SensorFrame(hr=70, spo2=97, flags=frozenset({FLAG_FINGER_OUT}), seq=0)
    with pytest.raises(ValueError):
        SensorFrame(hr=70, spo2=97, flags=frozenset({"bogus"}), seq=0)
    with pytest.raises(ValueError):
        SensorFrame(hr=70, spo2=97, flags=frozenset(), seq=1 << 16)


@st.composite
def valid_frames(draw):
    finger_out = draw(st.booleans())
    extra = draw(st.sets(st.sampled_from([FLAG_SENSOR_OK, FLAG_LOW_PERFUSION])))
    if finger_out:
        hr, spo2 = None, None
        flags = frozenset(extra | {FLAG_FINGER_OUT})
    else:
        hr = draw(st.one_of(st.none(), st.integers(0, 250)))
        spo2 = draw(st.one_of(st.none(), st.integers(0, 100)))
        flags = frozenset(extra)
    seq = draw(st.integers(0, 0xFFFF))
    return SensorFrame(hr=hr, spo2=spo2, flags=flags, seq=seq)


@given(valid_frames())
def test_round_trip_property(frame):
    assert decode_frame(encode_frame(frame)) == frame


def test_round_trip_boundary_grid():
    for hr in (None, 0, 1, 249, 250):
        for spo2 in (None, 0, 1, 99, 100):
            for seq in (0, 1, 0xFFFF):
                frame = SensorFrame(hr=hr, spo2=spo2, flags=frozenset({FLAG_SENSOR_OK}), seq=seq)
                assert decode_frame(encode_frame(frame)) == frame


def test_single_byte_corruption_always_rejected():
    encoded = encode_frame(REF_FRAME)
    rejected = 0
    for pos in range(8):
        for value in range(256):
            if value == encoded[pos]:
                continue
            corrupted = bytearray(encoded)
            corrupted[pos] = value
            with pytest.raises(FrameError):
                decode_frame(bytes(corrupted))
            rejected += 1
    assert rejected == 8 * 255


def test_iter_frames_resynchronizes_over_noise():
    f1 = SensorFrame(hr=70, spo2=98, flags=frozenset({FLAG_SENSOR_OK}), seq=10)
    f2 = SensorFrame(hr=75, spo2=96, flags=frozenset(), seq=11)
    garbage = bytes([0x13, 0xA5, 0x01])  # includes a fake sync byte
    stream = garbage + encode_frame(f1) + bytes([0x00, 0xA5]) + encode_frame(f2) + b"\x22"
    assert list(iter_frames(stream)) == [f1, f2]


def test_iter_frames_drops_trailing_partial():
    f1 = SensorFrame(hr=70, spo2=98, flags=frozenset(), seq=0)
    stream = encode_frame(f1) + encode_frame(f1)[:5]
    assert list(iter_frames(stream)) == [f1]
