"""Binary frame codec for the wearable pulse-oximeter stream.

Each reading travels as a fixed 8-byte frame:

    byte 0   sync marker, always 0xA5
    byte 1   flag bits: 0x01 sensor_ok, 0x02 low_perfusion, 0x04 finger_out
    byte 2   heart rate in bpm, 0-250; 255 encodes a missing reading
    byte 3   SpO2 percent, 0-100; 127 encodes a missing reading
    byte 4-5 sequence counter, big-endian, wraps at 2^16
    byte 6   reserved, always 0
    byte 7   arithmetic checksum: sum of bytes 0-6 modulo 256

Missing vitals are represented as ``None`` in Python. A reader that hits a
bad frame must resynchronize by scanning forward for the next 0xA5 byte;
``iter_frames`` implements that scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

SYNC_BYTE = 0xA5
HR_MISSING_CODE = 0xFF
SPO2_MISSING_CODE = 0x7F
FRAME_LEN = 8

FLAG_SENSOR_OK = "sensor_ok"
FLAG_LOW_PERFUSION = "low_perfusion"
FLAG_FINGER_OUT = "finger_out"

FLAG_BITS = {
    FLAG_SENSOR_OK: 0x01,
    FLAG_LOW_PERFUSION: 0x02,
    FLAG_FINGER_OUT: 0x04,
}

HR_MAX = 250
SPO2_MAX = 100
SEQ_MOD = 1 << 16


class FrameError(ValueError):
    """A byte sequence that is not a valid frame."""


class BadSync(FrameError):
    """First byte is not the 0xA5 sync marker."""


class BadChecksum(FrameError):
    """Checksum byte does not match the frame content."""


class BadRange(FrameError):
    """A field byte holds a code outside its legal set."""


@dataclass(frozen=True)
class SensorFrame:
    """One pulse-oximeter reading. ``None`` vitals mean the sensor had no value."""

    hr: int | None
    spo2: int | None
    flags: frozenset[str]
    seq: int

    def __post_init__(self):
        if self.hr is not None and not 0 <= self.hr <= HR_MAX:
            raise ValueError(f"hr out of range: {self.hr}")
        if self.spo2 is not None and not 0 <= self.spo2 <= SPO2_MAX:
            raise ValueError(f"spo2 out of range: {self.spo2}")
        unknown = set(self.flags) - set(FLAG_BITS)
        if unknown:
            raise ValueError(f"unknown flags: {sorted(unknown)}")
        if FLAG_FINGER_OUT in self.flags and (self.hr is not None or self.spo2 is not None):
            raise ValueError("finger_out frames must carry no vitals")
        if not 0 <= self.seq < SEQ_MOD:
            raise ValueError(f"seq out of range: {self.seq}")
        object.__setattr__(self, "flags", frozenset(self.flags))


def checksum(prefix: bytes) -> int:
    """Arithmetic sum of the 7 frame bytes before the checksum, modulo 256."""
    if len(prefix) != FRAME_LEN - 1:
        raise ValueError(f"checksum expects 7 bytes, got {len(prefix)}")
    return sum(prefix) % 256


def encode_frame(frame: SensorFrame) -> bytes:
    """Encode a valid frame into its 8-byte wire form."""
    flag_byte = 0
    for name in frame.flags:
        flag_byte |= FLAG_BITS[name]
    body = bytes(
        [
            SYNC_BYTE,
            flag_byte,
            HR_MISSING_CODE if frame.hr is None else frame.hr,
            SPO2_MISSING_CODE if frame.spo2 is None else frame.spo2,
            (frame.seq >> 8) & 0xFF,
            frame.seq & 0xFF,
            0,
        ]
    )
    return body + bytes([checksum(body)])


def decode_frame(data: bytes) -> SensorFrame:
    """Decode 8 bytes back into a SensorFrame.

    Raises BadSync, BadChecksum or BadRange when the bytes cannot have been
    produced by ``encode_frame``; the caller should then rescan the stream
    for the next sync byte.
    """
    if len(data) != FRAME_LEN:
        raise ValueError(f"frame must be {FRAME_LEN} bytes, got {len(data)}")
    if data[0] != SYNC_BYTE:
        raise BadSync(f"expected sync byte 0x{SYNC_BYTE:02X}, got 0x{data[0]:02X}")
    if data[7] != checksum(data[:7]):
        raise BadChecksum(f"checksum 0x{data[7]:02X} != computed 0x{checksum(data[:7]):02X}")

    flag_byte = data[1]
    if flag_byte & ~0x07:
        raise BadRange(f"reserved flag bits set: 0x{flag_byte:02X}")
    hr_code, spo2_code = data[2], data[3]
    if hr_code != HR_MISSING_CODE and hr_code > HR_MAX:
        raise BadRange(f"hr byte 0x{hr_code:02X} outside legal codes")
    if spo2_code != SPO2_MISSING_CODE and spo2_code > SPO2_MAX:
        raise BadRange(f"spo2 byte 0x{spo2_code:02X} outside legal codes")
    if data[6] != 0:
        raise BadRange(f"reserved byte 6 is 0x{data[6]:02X}, expected 0")

    flags = frozenset(name for name, bit in FLAG_BITS.items() if flag_byte & bit)
    return SensorFrame(
        hr=None if hr_code == HR_MISSING_CODE else hr_code,
        spo2=None if spo2_code == SPO2_MISSING_CODE else spo2_code,
        flags=flags,
        seq=(data[4] << 8) | data[5],
    )


def iter_frames(data: bytes) -> Iterator[SensorFrame]:
    """Scan a byte stream, yielding every decodable frame.

    On any bad frame the scan resumes one byte past the failed sync
    candidate, looking for the next 0xA5. Trailing partial frames are
    dropped.
    """
    i = 0
    n = len(data)
    while i < n:
        if data[i] != SYNC_BYTE:
            i += 1
            continue
        if i + FRAME_LEN > n:
            return
        try:
            yield decode_frame(data[i : i + FRAME_LEN])
            i += FRAME_LEN
        except FrameError:
            i += 1
