"""Length-prefixed JSON framing shared by the socket and stdio loops.

Four-byte big-endian length, UTF-8 JSON body.  Every message carries
``"v": 1`` and a ``"type"``; the version is checked at dispatch time so
a mismatch can be answered with an error object instead of a dropped
connection.
"""

from __future__ import annotations

import json
from typing import BinaryIO

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024


class FramingError(Exception):
    """A frame that cannot be read or written; ``code`` names why."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def write_frame(stream: BinaryIO, obj: dict) -> None:
    data = json.dumps(obj, separators=(",", ":"), allow_nan=False).encode("utf-8")
    if len(data) > MAX_FRAME_BYTES:
        raise FramingError("frame_too_large", f"{len(data)} byte message")
    stream.write(len(data).to_bytes(4, "big") + data)
    stream.flush()


def read_frame(stream: BinaryIO) -> dict:
    """Read one framed message; EOFError on a cleanly closed stream."""
    head = stream.read(4)
    if not head:
        raise EOFError("stream closed")
    if len(head) < 4:
        raise FramingError("truncated_frame", "incomplete length prefix")
    length = int.from_bytes(head, "big")
    if length > MAX_FRAME_BYTES:
        raise FramingError("frame_too_large", f"{length} byte frame announced")
    data = b""
    while len(data) < length:
        chunk = stream.read(length - len(data))
        if not chunk:
            raise FramingError("truncated_frame",
                               f"got {len(data)} of {length} bytes")
        data += chunk
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError("bad_json", str(exc)) from exc
    if not isinstance(obj, dict):
        raise FramingError("bad_message", "frame payload is not an object")
    return obj
