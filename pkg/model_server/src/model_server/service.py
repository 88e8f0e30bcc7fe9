"""Request dispatch for one protocol session.

A session is stateful only in that ``hello`` must come first; after the
handshake every request is answered independently, in order.  All
failures are answered with an error object carrying a stable code, so
a client never sees a silent drop.

    -> {"v":1,"type":"hello","temperature":T}
    <- {"v":1,"type":"handshake","model_id":...,"vocab_size":N,
        "temperature":T_pinned,"supports":{...},"eos_id":null|int}
    -> {"v":1,"type":"predict_topm","text":s,"offset":k,"m":m}
    <- {"v":1,"type":"page","offset":k,
        "entries":[[id,string,prob],...],"remaining_mass":r}
    -> {"v":1,"type":"score","text":s}
    <- {"v":1,"type":"scores","s_neg":a,"s_neu":b,"s_pos":c}

The handshake always reports the server's pinned temperature; deciding
whether that is acceptable is the client's call.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .classifier import StubClassifier
from .framing import PROTOCOL_VERSION
from .stubmodel import StubModel


def error_reply(code: str, message: str) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "error",
            "code": code, "message": message}


def _as_index(value: object) -> Optional[int]:
    if isinstance(value, bool) or not isinstance(value, int):
        return None
    return value


class ServiceSession:
    """Dispatch for one connection; share nothing mutable across them."""

    def __init__(self, model: Optional[StubModel],
                 classifier: Optional[StubClassifier],
                 temperature: float = 1.0):
        self.model = model
        self.classifier = classifier
        self.temperature = float(temperature)
        self.greeted = False

    def handle(self, msg: dict) -> dict:
        if msg.get("v") != PROTOCOL_VERSION:
            return error_reply(
                "bad_version",
                f"expected v={PROTOCOL_VERSION}, got {msg.get('v')!r}")
        mtype = msg.get("type")
        if not isinstance(mtype, str):
            return error_reply("bad_message", "missing message type")
        if not self.greeted and mtype != "hello":
            return error_reply("expected_hello",
                               f"first message must be hello, got {mtype!r}")
        if mtype == "hello":
            return self._hello(msg)
        if mtype == "predict_topm":
            return self._predict(msg)
        if mtype == "score":
            return self._score(msg)
        return error_reply("unknown_type", f"no handler for {mtype!r}")

    def _hello(self, msg: dict) -> dict:
        temp = msg.get("temperature")
        if not isinstance(temp, (int, float)) or isinstance(temp, bool) \
                or not math.isfinite(temp):
            return error_reply("bad_request", "hello needs a finite temperature")
        self.greeted = True
        return {
            "v": PROTOCOL_VERSION,
            "type": "handshake",
            "model_id": self.model.model_id if self.model else "none",
            "vocab_size": self.model.vocab_size if self.model else 0,
            "temperature": self.temperature,
            "supports": {
                "predict_topm": self.model is not None,
                "score": self.classifier is not None,
            },
            "eos_id": self.model.eos_id if self.model else None,
        }

    def _predict(self, msg: dict) -> dict:
        if self.model is None:
            return error_reply("unsupported", "no model loaded")
        text = msg.get("text")
        offset = _as_index(msg.get("offset"))
        m = _as_index(msg.get("m"))
        if not isinstance(text, str):
            return error_reply("bad_request", "predict_topm needs a text string")
        if offset is None or offset < 0:
            return error_reply("bad_request", "offset must be a nonnegative integer")
        if m is None or m < 1:
            return error_reply("bad_request", "m must be a positive integer")
        try:
            probs = self.model.probabilities(text, self.temperature)
        except ValueError as exc:
            return error_reply("tokenization_failure", str(exc))
        ids = np.arange(1, probs.size + 1)
        order = np.lexsort((ids, -probs))
        page = order[offset:offset + m]
        entries = [[int(i) + 1, self.model.tokens[int(i)], float(probs[int(i)])]
                   for i in page]
        remaining = float(probs[order[offset + len(page):]].sum())
        return {
            "v": PROTOCOL_VERSION,
            "type": "page",
            "offset": offset,
            "entries": entries,
            "remaining_mass": remaining,
        }

    def _score(self, msg: dict) -> dict:
        if self.classifier is None:
            return error_reply("unsupported", "no classifier loaded")
        text = msg.get("text")
        if not isinstance(text, str) or text == "":
            return error_reply("bad_request", "score needs a non-empty text string")
        try:
            s_neg, s_neu, s_pos = self.classifier.score(text)
        except ValueError as exc:
            return error_reply("classifier_failure", str(exc))
        return {
            "v": PROTOCOL_VERSION,
            "type": "scores",
            "s_neg": s_neg,
            "s_neu": s_neu,
            "s_pos": s_pos,
        }
