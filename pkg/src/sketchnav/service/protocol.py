"""Wire protocol: versioned JSON frames, length-delimited over a byte stream.

Every frame is a JSON object with a "v" schema version and a "type". The
TCP framing is a 4-byte big-endian payload length followed by UTF-8 JSON;
the WebSocket path carries the same JSON per text message.
"""
from __future__ import annotations

import json
import struct
from typing import Iterator, Optional

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 4 * 1024 * 1024

CLIENT_TYPES = (
    "LoadScenario",
    "AddSketch",
    "ClearSketches",
    "Command",
    "ClarificationAnswer",
    "SetControl",
    "ManualInput",
    "Start",
    "Reset",
    "ResyncRequest",
)
SERVER_TYPES = (
    "Ack",
    "Error",
    "StateFrame",
    "ScenarioLoaded",
    "TaskAssigned",
    "ClarificationRequest",
    "ConstraintUpdate",
    "EpisodeEnd",
    "Resync",
)


class ProtocolError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def make_frame(type_: str, **fields) -> dict:
    frame = {"v": PROTOCOL_VERSION, "type": type_}
    frame.update(fields)
    return frame


def dumps(frame: dict) -> str:
    # stable key order so replays compare byte-for-byte
    return json.dumps(frame, sort_keys=True, separators=(",", ":"))


def encode(frame: dict) -> bytes:
    payload = dumps(frame).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError("frame_too_large", f"{len(payload)} bytes")
    return struct.pack(">I", len(payload)) + payload


def validate_client_frame(frame: dict) -> dict:
    if not isinstance(frame, dict):
        raise ProtocolError("bad_frame", "frame must be a JSON object")
    if frame.get("v") != PROTOCOL_VERSION:
        raise ProtocolError("bad_version", f"expected v={PROTOCOL_VERSION}")
    t = frame.get("type")
    if t not in CLIENT_TYPES:
        raise ProtocolError("unknown_type", str(t))
    return frame


class FrameDecoder:
    """Incremental length-prefixed decoder; feed bytes, iterate frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> Iterator[dict]:
        self._buf.extend(data)
        while True:
            frame = self._next()
            if frame is None:
                return
            yield frame

    def _next(self) -> Optional[dict]:
        if len(self._buf) < 4:
            return None
        (length,) = struct.unpack(">I", self._buf[:4])
        if length > MAX_FRAME_BYTES:
            raise ProtocolError("frame_too_large", f"{length} bytes")
        if len(self._buf) < 4 + length:
            return None
        payload = bytes(self._buf[4:4 + length])
        del self._buf[:4 + length]
        try:
            return json.loads(payload.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise ProtocolError("bad_json", str(exc)) from exc
