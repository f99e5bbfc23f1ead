"""Bit-exact Art-Net ArtDmx framing of LightMaps over UDP, plus a loopback
virtual-dome sink for closed-loop tests.

Wire layout (Art-Net 4): bytes 0-7 "Art-Net\\0", 8-9 opcode 0x5000 LE,
10-11 protocol version 14 BE, 12 sequence, 13 physical=0, 14-15
port-address LE, 16-17 data length BE, then DMX data. UDP port 6454.

sACN (E1.31) would slot in behind the same frame-sink surface (encode a
frame per universe, fire datagrams); only Art-Net is implemented.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from dataclasses import dataclass

from .dome import CHANNELS_PER_PANEL, DomeGeometry
from .errors import FormatError, RangeError
from .spectral import LightMap

__all__ = [
    "ARTNET_PORT",
    "ArtDmxPacket",
    "encode_frame",
    "decode_packet",
    "ArtNetSender",
    "LoopbackSink",
    "send",
]

ARTNET_PORT = 6454
_MAGIC = b"Art-Net\x00"
_OPCODE_DMX = 0x5000
_PROTOCOL_VERSION = 14
_FULL_UNIVERSE_LENGTH = 510


@dataclass(frozen=True)
class ArtDmxPacket:
    """One ArtDmx datagram: rolling sequence byte, 15-bit port-address,
    and an even-length DMX payload of 2..512 bytes."""

    sequence: int
    universe: int
    data: bytes

    def __post_init__(self) -> None:
        if not (0 <= self.sequence <= 255):
            raise RangeError("sequence byte must be 0..255")
        if not (0 <= self.universe <= 0x7FFF):
            raise RangeError("universe must be a 15-bit port-address")
        n = len(self.data)
        if not (2 <= n <= 512) or n % 2 != 0:
            raise RangeError("DMX data length must be even and in [2, 512]")

    def to_bytes(self) -> bytes:
        return (
            _MAGIC
            + struct.pack("<H", _OPCODE_DMX)
            + struct.pack(">H", _PROTOCOL_VERSION)
            + bytes([self.sequence, 0])
            + struct.pack("<H", self.universe)
            + struct.pack(">H", len(self.data))
            + self.data
        )


def decode_packet(buf: bytes) -> ArtDmxPacket:
    """Parse an ArtDmx datagram; anything else raises FormatError."""
    if len(buf) < 18:
        raise FormatError("packet shorter than ArtDmx header")
    if buf[:8] != _MAGIC:
        raise FormatError("bad Art-Net magic")
    (opcode,) = struct.unpack_from("<H", buf, 8)
    if opcode != _OPCODE_DMX:
        raise FormatError(f"not an ArtDmx packet (opcode 0x{opcode:04x})")
    (version,) = struct.unpack_from(">H", buf, 10)
    if version < _PROTOCOL_VERSION:
        raise FormatError(f"protocol version {version} too old")
    sequence = buf[12]
    (universe,) = struct.unpack_from("<H", buf, 14)
    (length,) = struct.unpack_from(">H", buf, 16)
    if length != len(buf) - 18:
        raise FormatError("length field does not match payload")
    if not (2 <= length <= 512) or length % 2 != 0:
        raise FormatError("invalid DMX data length")
    return ArtDmxPacket(sequence=sequence, universe=universe, data=buf[18:])


def encode_frame(lightmap: LightMap, geometry: DomeGeometry, seq_no: int) -> list[ArtDmxPacket]:
    """One packet per universe the dome touches, untouched channels zero.

    Full universes carry 510 data bytes; payloads never shrink below that
    so receivers see a stable frame size.
    """
    if lightmap.n_panels != len(geometry):
        raise RangeError("lightmap panel count does not match dome")
    extents: dict[int, int] = {}
    for p in geometry.panels:
        ext = p.channel_base + CHANNELS_PER_PANEL
        extents[p.universe] = max(extents.get(p.universe, 0), ext)
    packets = []
    for universe in sorted(extents):
        length = max(_FULL_UNIVERSE_LENGTH, extents[universe] + extents[universe] % 2)
        data = bytearray(length)
        for p in geometry.panels:
            if p.universe == universe:
                data[p.channel_base : p.channel_base + CHANNELS_PER_PANEL] = lightmap.dmx[p.id].tobytes()
        packets.append(ArtDmxPacket(sequence=seq_no, universe=universe, data=bytes(data)))
    return packets


def send(packets: list[ArtDmxPacket], endpoint: tuple[str, int]) -> None:
    """Fire-and-forget UDP send of one frame's packets."""
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        for pkt in packets:
            sock.sendto(pkt.to_bytes(), endpoint)


class ArtNetSender:
    """Persistent UDP sender with the rolling 1..255 sequence byte."""

    def __init__(self, endpoint: tuple[str, int]):
        self.endpoint = (endpoint[0], int(endpoint[1]))
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._seq = 0

    def next_sequence(self) -> int:
        self._seq = self._seq % 255 + 1
        return self._seq

    def send_lightmap(self, lightmap: LightMap, geometry: DomeGeometry) -> int:
        seq_no = self.next_sequence()
        for pkt in encode_frame(lightmap, geometry, seq_no):
            self._sock.sendto(pkt.to_bytes(), self.endpoint)
        return seq_no

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "ArtNetSender":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class LoopbackSink:
    """In-process virtual dome: a UDP listener that keeps the latest DMX
    state per universe, a frame counter (max packets seen on any universe),
    and a malformed-packet counter.
    """

    def __init__(self, host: str = "127.0.0.1"):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, 0))
        self._sock.settimeout(0.05)
        self._lock = threading.Lock()
        self._state: dict[int, bytes] = {}
        self._per_universe: dict[int, int] = {}
        self.malformed = 0
        self._running = True
        self._thread = threading.Thread(target=self._listen, name="domelight-loopback", daemon=True)
        self._thread.start()

    @property
    def endpoint(self) -> tuple[str, int]:
        host, port = self._sock.getsockname()
        return host, port

    def _listen(self) -> None:
        while self._running:
            try:
                buf, _ = self._sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                pkt = decode_packet(buf)
            except FormatError:
                with self._lock:
                    self.malformed += 1
                continue
            with self._lock:
                self._state[pkt.universe] = pkt.data
                self._per_universe[pkt.universe] = self._per_universe.get(pkt.universe, 0) + 1

    @property
    def frames(self) -> int:
        with self._lock:
            return max(self._per_universe.values(), default=0)

    def snapshot(self) -> dict[int, bytes]:
        with self._lock:
            return dict(self._state)

    def dmx_for(self, universe: int, channel_base: int, n: int = CHANNELS_PER_PANEL) -> bytes:
        state = self.snapshot().get(universe, b"")
        return state[channel_base : channel_base + n]

    def wait_for_frames(self, count: int, timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.frames >= count:
                return True
            time.sleep(0.002)
        return self.frames >= count

    def close(self) -> None:
        self._running = False
        self._thread.join(timeout=2.0)
        self._sock.close()

    def __enter__(self) -> "LoopbackSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
