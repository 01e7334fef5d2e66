"""ISO 7816 style command/response APDUs and their byte framing."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import DataTooLong, MalformedApdu

SW_SUCCESS = 0x9000
SW_INS_NOT_SUPPORTED = 0x6D00
SW_INCORRECT_P1P2 = 0x6A86
SW_UNKNOWN = 0x6F00

CLA_BENCH = 0x80
PHASE_SETUP = 0x00
PHASE_RUN = 0x01
PHASE_CLEANUP = 0x02


def _check_byte(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= 0xFF:
        raise ValueError(f"{name} must be a byte, got {value!r}")


@dataclass(frozen=True)
class ApduCommand:
    cla: int
    ins: int
    p1: int
    p2: int
    data: bytes = b""

    def __post_init__(self):
        for name in ("cla", "ins", "p1", "p2"):
            _check_byte(getattr(self, name), name)
        if not isinstance(self.data, (bytes, bytearray)):
            raise TypeError("data must be bytes")
        if len(self.data) > 255:
            raise DataTooLong(f"command data is {len(self.data)} bytes, maximum is 255")
        object.__setattr__(self, "data", bytes(self.data))

    def __str__(self):
        return encode_command(self).hex(" ").upper()


@dataclass(frozen=True)
class ApduResponse:
    data: bytes = b""
    sw: int = SW_SUCCESS

    @property
    def success(self) -> bool:
        return self.sw == SW_SUCCESS

    def to_bytes(self) -> bytes:
        return bytes(self.data) + self.sw.to_bytes(2, "big")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ApduResponse":
        if len(raw) < 2:
            raise MalformedApdu(f"response of {len(raw)} bytes has no status word")
        return cls(bytes(raw[:-2]), int.from_bytes(raw[-2:], "big"))


def encode_command(cmd: ApduCommand) -> bytes:
    if len(cmd.data) > 255:
        raise DataTooLong(f"command data is {len(cmd.data)} bytes, maximum is 255")
    header = bytes((cmd.cla, cmd.ins, cmd.p1, cmd.p2))
    if not cmd.data:
        return header
    return header + bytes((len(cmd.data),)) + cmd.data


def decode_command(raw: bytes) -> ApduCommand:
    if len(raw) < 4:
        raise MalformedApdu(f"command of {len(raw)} bytes is shorter than the 4-byte header")
    cla, ins, p1, p2 = raw[:4]
    if len(raw) == 4:
        return ApduCommand(cla, ins, p1, p2)
    lc = raw[4]
    if lc == 0 or len(raw) != 5 + lc:
        raise MalformedApdu(f"length byte {lc} does not match {len(raw) - 5} data bytes")
    return ApduCommand(cla, ins, p1, p2, bytes(raw[5:]))


def bench_command(ins: int, phase: int, p2: int = 1) -> ApduCommand:
    return ApduCommand(CLA_BENCH, ins, phase, p2)
