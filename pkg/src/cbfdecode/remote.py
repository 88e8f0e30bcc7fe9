"""Client for the length-prefixed JSON wire protocol.

Frames are 4-byte big-endian length prefixes followed by UTF-8 JSON.
Every message carries ``"v": 1`` and a ``"type"``.  The client speaks:

    -> {"v":1,"type":"hello","temperature":T}
    <- {"v":1,"type":"handshake","vocab_size":N,"model_id":...,
        "temperature":T,"supports":{"predict_topm":...,"score":...},
        "eos_id":null|int}
    -> {"v":1,"type":"predict_topm","text":s,"offset":k,"m":m}
    <- {"v":1,"type":"page","offset":k,
        "entries":[[id,string,prob],...],"remaining_mass":r}
    -> {"v":1,"type":"score","text":s}
    <- {"v":1,"type":"scores","s_neg":a,"s_neu":b,"s_pos":c}
    <- {"v":1,"type":"error","code":...,"message":...}

Temperature is applied server-side before any truncation; the handshake
pins it, and a server that cannot honour the requested value refuses
the connection.  Token strings arrive carrying their own spacing, so a
remote vocabulary renders with an empty separator.
"""

from __future__ import annotations

import json
import socket
from dataclasses import dataclass
from typing import BinaryIO, Optional

import numpy as np

from .core import Text, TokenDistribution, Vocabulary
from .errors import BackendUnavailableError, ProtocolError
from .lcf import ClassScores, ScoreLCF
from .predictor import PagedPrediction, TokenPredictor

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024

#: Tolerance for a reassembled remote distribution before renormalizing.
REASSEMBLY_TOL = 1e-6


def write_frame(stream: BinaryIO, obj: dict) -> None:
    data = json.dumps(obj, separators=(",", ":"), allow_nan=False).encode("utf-8")
    if len(data) > MAX_FRAME_BYTES:
        raise ProtocolError("frame_too_large", f"{len(data)} byte message")
    stream.write(len(data).to_bytes(4, "big") + data)
    stream.flush()


def read_frame(stream: BinaryIO) -> dict:
    """Read one framed message; EOFError on a cleanly closed stream."""
    head = stream.read(4)
    if not head:
        raise EOFError("stream closed")
    if len(head) < 4:
        raise ProtocolError("truncated_frame", "incomplete length prefix")
    length = int.from_bytes(head, "big")
    if length > MAX_FRAME_BYTES:
        raise ProtocolError("frame_too_large", f"{length} byte frame announced")
    data = b""
    while len(data) < length:
        chunk = stream.read(length - len(data))
        if not chunk:
            raise ProtocolError("truncated_frame", f"got {len(data)} of {length} bytes")
        data += chunk
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("bad_json", str(exc)) from exc
    if not isinstance(obj, dict):
        raise ProtocolError("bad_message", "frame payload is not an object")
    if obj.get("v") != PROTOCOL_VERSION:
        raise ProtocolError("bad_version", f"expected v={PROTOCOL_VERSION}, got {obj.get('v')!r}")
    if "type" not in obj:
        raise ProtocolError("bad_message", "missing message type")
    return obj


@dataclass(frozen=True)
class Handshake:
    """Server identity and pinned inference settings."""

    model_id: str
    vocab_size: int
    temperature: float
    supports_predict_topm: bool
    supports_score: bool
    eos_id: Optional[int]


class RemoteBackend:
    """One protocol session over TCP, with bounded reconnect attempts.

    Transport failures are retried up to ``retries`` extra attempts and
    then reported as retryable; a handshake refusal (e.g. temperature
    mismatch) is not retryable and reported as such.
    """

    def __init__(self, host: str, port: int, temperature: float = 1.0,
                 timeout: float = 10.0, retries: int = 2, page_size: int = 64):
        self.host = host
        self.port = port
        self.temperature = float(temperature)
        self.timeout = timeout
        self.retries = retries
        self.page_size = page_size
        self.handshake: Optional[Handshake] = None
        self._sock: Optional[socket.socket] = None
        self._stream: Optional[BinaryIO] = None

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def connect(self) -> Handshake:
        last: Optional[Exception] = None
        for attempt in range(1, self.retries + 2):
            try:
                self._open()
                return self._do_handshake()
            except ProtocolError as err:
                self.close()
                raise BackendUnavailableError(
                    self.endpoint, str(err), retryable=False, attempts=attempt
                ) from err
            except (OSError, EOFError) as err:
                self.close()
                last = err
        raise BackendUnavailableError(
            self.endpoint, str(last), retryable=True, attempts=self.retries + 1
        ) from last

    def _open(self) -> None:
        self.close()
        sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        self._sock = sock
        self._stream = sock.makefile("rwb")

    def _do_handshake(self) -> Handshake:
        write_frame(self._stream, {
            "v": PROTOCOL_VERSION, "type": "hello", "temperature": self.temperature,
        })
        reply = read_frame(self._stream)
        if reply["type"] == "error":
            raise ProtocolError(str(reply.get("code", "error")),
                                str(reply.get("message", "")))
        if reply["type"] != "handshake":
            raise ProtocolError("bad_message", f"expected handshake, got {reply['type']!r}")
        supports = reply.get("supports", {})
        hs = Handshake(
            model_id=str(reply["model_id"]),
            vocab_size=int(reply["vocab_size"]),
            temperature=float(reply["temperature"]),
            supports_predict_topm=bool(supports.get("predict_topm", False)),
            supports_score=bool(supports.get("score", False)),
            eos_id=None if reply.get("eos_id") is None else int(reply["eos_id"]),
        )
        if hs.temperature != self.temperature:
            raise ProtocolError(
                "temperature_mismatch",
                f"asked for {self.temperature}, server pinned {hs.temperature}",
            )
        self.handshake = hs
        return hs

    def call(self, request: dict) -> dict:
        """Send one request, reconnecting once per allowed retry."""
        last: Optional[Exception] = None
        for attempt in range(1, self.retries + 2):
            if self._stream is None:
                self.connect()
            try:
                write_frame(self._stream, request)
                reply = read_frame(self._stream)
            except (OSError, EOFError) as err:
                self.close()
                last = err
                continue
            if reply["type"] == "error":
                raise ProtocolError(str(reply.get("code", "error")),
                                    str(reply.get("message", "")))
            return reply
        raise BackendUnavailableError(
            self.endpoint, str(last), retryable=True, attempts=self.retries + 1
        ) from last

    def close(self) -> None:
        for closer in (self._stream, self._sock):
            if closer is not None:
                try:
                    closer.close()
                except OSError:
                    pass
        self._stream = None
        self._sock = None

    def __enter__(self) -> "RemoteBackend":
        self.connect()
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _expect(reply: dict, wanted: str) -> dict:
    if reply["type"] != wanted:
        raise ProtocolError("bad_message", f"expected {wanted}, got {reply['type']!r}")
    return reply


class RemotePredictor(TokenPredictor):
    """Next-token backend speaking the wire protocol.

    The vocabulary is materialized once by requesting an exhaustive page
    for the empty text; after that the server is only asked for pages.
    Full predictions are reassembled, checked against the mass invariant,
    renormalized to exactly 1, and cached per token sequence for the
    predictor's lifetime (one server snapshot per connection).
    """

    def __init__(self, backend: RemoteBackend):
        if backend.handshake is None:
            backend.connect()
        if not backend.handshake.supports_predict_topm:
            raise BackendUnavailableError(
                backend.endpoint, "server does not support predict_topm",
                retryable=False,
            )
        self.backend = backend
        self.page_size = backend.page_size
        self.vocab = self._fetch_vocabulary()
        self._cache: dict[tuple[int, ...], TokenDistribution] = {}

    def _request_page(self, text: str, offset: int, m: int) -> dict:
        return _expect(self.backend.call({
            "v": PROTOCOL_VERSION, "type": "predict_topm",
            "text": text, "offset": offset, "m": m,
        }), "page")

    def _fetch_vocabulary(self) -> Vocabulary:
        n = self.backend.handshake.vocab_size
        page = self._request_page("", 0, n)
        entries = page["entries"]
        if len(entries) != n:
            raise ProtocolError(
                "bad_page", f"exhaustive page has {len(entries)} of {n} entries"
            )
        strings: list[Optional[str]] = [None] * n
        for tid, string, _prob in entries:
            tid = int(tid)
            if not (1 <= tid <= n) or strings[tid - 1] is not None:
                raise ProtocolError("bad_page", f"bad or duplicate token id {tid}")
            strings[tid - 1] = str(string)
        return Vocabulary(
            tokens=tuple(strings), separator="",
            eos_id=self.backend.handshake.eos_id,
            name=self.backend.handshake.model_id,
        )

    def predict(self, x: Text) -> TokenDistribution:
        cached = self._cache.get(x.ids)
        if cached is not None:
            return cached
        n = self.vocab.size
        probs = np.zeros(n, dtype=np.float64)
        offset = 0
        while offset < n:
            page = self._request_page(x.rendered, offset, self.page_size)
            entries = page["entries"]
            if not entries:
                break
            for tid, _string, prob in entries:
                probs[int(tid) - 1] = float(prob)
            offset += len(entries)
            if float(page["remaining_mass"]) == 0.0 and len(entries) < self.page_size:
                break
        total = float(probs.sum())
        if abs(total - 1.0) > REASSEMBLY_TOL:
            raise ProtocolError(
                "bad_page", f"reassembled distribution sums to {total}"
            )
        dist = TokenDistribution.validated(probs / total)
        self._cache[x.ids] = dist
        return dist

    def predict_topm(self, x: Text, offset: int, m: int) -> PagedPrediction:
        page = self._request_page(x.rendered, offset, m)
        entries = tuple(
            (int(tid), float(prob)) for tid, _string, prob in page["entries"]
        )
        return PagedPrediction(
            entries=entries,
            offset=int(page["offset"]),
            remaining_mass=float(page["remaining_mass"]),
        )


def remote_score_lcf(backend: RemoteBackend, name: str = "remote-classifier") -> ScoreLCF:
    """Constraint function backed by the server's 3-class scorer."""
    if backend.handshake is None:
        backend.connect()
    if not backend.handshake.supports_score:
        raise BackendUnavailableError(
            backend.endpoint, "server does not support score", retryable=False,
        )

    def score_fn(x: Text) -> ClassScores:
        reply = _expect(backend.call({
            "v": PROTOCOL_VERSION, "type": "score", "text": x.rendered,
        }), "scores")
        return ClassScores(
            s_neg=float(reply["s_neg"]),
            s_neu=float(reply["s_neu"]),
            s_pos=float(reply["s_pos"]),
        )

    return ScoreLCF(score_fn, name=name)
