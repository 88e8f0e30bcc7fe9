"""Dispatch and transport conformance: every malformed request gets an
error object with a stable code, well-formed ones get schema-shaped
replies."""

import socket
import threading

import pytest

from model_server.classifier import default_classifier_path, load_classifier
from model_server.framing import (
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    read_frame,
    write_frame,
)
from model_server.server import ModelServer, serve_connection
from model_server.service import ServiceSession
from model_server.stubmodel import default_model_path, load_model

MODEL = load_model(default_model_path())
CLASSIFIER = load_classifier(default_classifier_path())


def fresh_session(greet=True, model=MODEL, classifier=CLASSIFIER):
    s = ServiceSession(model, classifier, 1.0)
    if greet:
        reply = s.handle({"v": 1, "type": "hello", "temperature": 1.0})
        assert reply["type"] == "handshake"
    return s


class TestDispatch:
    def test_handshake_shape(self):
        s = ServiceSession(MODEL, CLASSIFIER, 1.0)
        reply = s.handle({"v": 1, "type": "hello", "temperature": 1.0})
        assert reply == {
            "v": 1, "type": "handshake", "model_id": "stub-causal-12",
            "vocab_size": 12, "temperature": 1.0,
            "supports": {"predict_topm": True, "score": True},
            "eos_id": None,
        }

    def test_hello_must_come_first(self):
        s = fresh_session(greet=False)
        reply = s.handle({"v": 1, "type": "score", "text": "good"})
        assert reply["type"] == "error"
        assert reply["code"] == "expected_hello"

    def test_version_checked_before_anything(self):
        s = fresh_session(greet=False)
        reply = s.handle({"v": 2, "type": "hello", "temperature": 1.0})
        assert reply["code"] == "bad_version"

    def test_missing_type(self):
        assert fresh_session().handle({"v": 1})["code"] == "bad_message"

    def test_unknown_type(self):
        assert fresh_session().handle(
            {"v": 1, "type": "shutdown"})["code"] == "unknown_type"

    def test_hello_rejects_bad_temperature(self):
        s = fresh_session(greet=False)
        for temp in ("hot", None, float("nan"), True):
            reply = s.handle({"v": 1, "type": "hello", "temperature": temp})
            assert reply["code"] == "bad_request"
        assert not s.greeted

    def test_pinned_temperature_reported_not_negotiated(self):
        s = ServiceSession(MODEL, CLASSIFIER, 0.5)
        reply = s.handle({"v": 1, "type": "hello", "temperature": 1.0})
        assert reply["type"] == "handshake"
        assert reply["temperature"] == 0.5

    def test_supports_reflect_loaded_components(self):
        s = ServiceSession(MODEL, None, 1.0)
        reply = s.handle({"v": 1, "type": "hello", "temperature": 1.0})
        assert reply["supports"] == {"predict_topm": True, "score": False}
        assert s.handle({"v": 1, "type": "score",
                         "text": "good"})["code"] == "unsupported"


class TestPredictTopm:
    def test_exhaustive_page(self):
        s = fresh_session()
        page = s.handle({"v": 1, "type": "predict_topm",
                         "text": "", "offset": 0, "m": 12})
        assert page["type"] == "page"
        assert page["offset"] == 0
        assert len(page["entries"]) == 12
        assert page["remaining_mass"] == 0.0
        ids = [e[0] for e in page["entries"]]
        assert sorted(ids) == list(range(1, 13))
        probs = [e[2] for e in page["entries"]]
        assert probs == sorted(probs, reverse=True)
        assert abs(sum(probs) - 1.0) < 1e-9
        for tid, string, _ in page["entries"]:
            assert string == MODEL.tokens[tid - 1]

    def test_pages_partition_the_ranking(self):
        s = fresh_session()
        full = s.handle({"v": 1, "type": "predict_topm",
                         "text": "good", "offset": 0, "m": 12})
        pieces = []
        for off in (0, 5, 10):
            page = s.handle({"v": 1, "type": "predict_topm",
                             "text": "good", "offset": off, "m": 5})
            pieces.extend(page["entries"])
        assert pieces == full["entries"]

    def test_remaining_mass_accounts_for_tail(self):
        s = fresh_session()
        page = s.handle({"v": 1, "type": "predict_topm",
                         "text": "good", "offset": 0, "m": 5})
        served = sum(e[2] for e in page["entries"])
        assert abs(served + page["remaining_mass"] - 1.0) < 1e-9
        assert page["remaining_mass"] > 0.0

    def test_same_text_same_page(self):
        s = fresh_session()
        req = {"v": 1, "type": "predict_topm",
               "text": "good good", "offset": 0, "m": 12}
        assert s.handle(dict(req)) == s.handle(dict(req))

    def test_offset_past_vocab_is_empty(self):
        s = fresh_session()
        page = s.handle({"v": 1, "type": "predict_topm",
                         "text": "", "offset": 12, "m": 4})
        assert page["entries"] == []
        assert page["remaining_mass"] == 0.0

    @pytest.mark.parametrize("patch", [
        {"text": 7}, {"offset": -1}, {"offset": "0"}, {"m": 0},
        {"m": None}, {"offset": True},
    ])
    def test_bad_arguments(self, patch):
        s = fresh_session()
        req = {"v": 1, "type": "predict_topm",
               "text": "good", "offset": 0, "m": 3}
        req.update(patch)
        assert s.handle(req)["code"] == "bad_request"

    def test_untokenizable_text(self):
        s = fresh_session()
        reply = s.handle({"v": 1, "type": "predict_topm",
                          "text": "zzz", "offset": 0, "m": 3})
        assert reply["code"] == "tokenization_failure"


class TestScore:
    def test_scores_sum_to_one(self):
        s = fresh_session()
        for text in ("good", " the sad day", "good good", "."):
            reply = s.handle({"v": 1, "type": "score", "text": text})
            assert reply["type"] == "scores"
            total = reply["s_neg"] + reply["s_neu"] + reply["s_pos"]
            assert abs(total - 1.0) < 1e-6

    def test_valence_direction(self):
        s = fresh_session()
        good = s.handle({"v": 1, "type": "score", "text": "good"})
        sad = s.handle({"v": 1, "type": "score", "text": " very sad"})
        assert good["s_pos"] > good["s_neu"] > good["s_neg"]
        assert sad["s_neg"] > sad["s_pos"]

    def test_empty_text_rejected(self):
        s = fresh_session()
        assert s.handle({"v": 1, "type": "score",
                         "text": ""})["code"] == "bad_request"

    def test_untokenizable_text(self):
        s = fresh_session()
        reply = s.handle({"v": 1, "type": "score", "text": "qqq"})
        assert reply["code"] == "classifier_failure"


class _LiveServer:
    def __init__(self):
        self.server = ModelServer(("127.0.0.1", 0), MODEL, CLASSIFIER, 1.0)
        self.port = self.server.server_address[1]
        self.thread = threading.Thread(target=self.server.serve_forever,
                                       daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def live():
    srv = _LiveServer()
    yield srv
    srv.close()


def _connect(port):
    sock = socket.create_connection(("127.0.0.1", port), timeout=5)
    return sock, sock.makefile("rwb")


class TestSocketLoop:
    def test_two_sequential_connections(self, live):
        for _ in range(2):
            sock, stream = _connect(live.port)
            write_frame(stream, {"v": 1, "type": "hello", "temperature": 1.0})
            assert read_frame(stream)["type"] == "handshake"
            write_frame(stream, {"v": 1, "type": "score", "text": "good"})
            assert read_frame(stream)["type"] == "scores"
            sock.close()

    def test_sessions_are_independent(self, live):
        # a second connection has not said hello yet
        sock1, stream1 = _connect(live.port)
        write_frame(stream1, {"v": 1, "type": "hello", "temperature": 1.0})
        read_frame(stream1)
        sock2, stream2 = _connect(live.port)
        write_frame(stream2, {"v": 1, "type": "score", "text": "good"})
        assert read_frame(stream2)["code"] == "expected_hello"
        sock1.close()
        sock2.close()

    def test_unparseable_frame_gets_error_then_close(self, live):
        sock, stream = _connect(live.port)
        payload = b"not json"
        stream.write(len(payload).to_bytes(4, "big") + payload)
        stream.flush()
        reply = read_frame(stream)
        assert reply["type"] == "error"
        assert reply["code"] == "bad_json"
        with pytest.raises(EOFError):
            read_frame(stream)
        sock.close()

    def test_oversized_announcement_refused(self, live):
        sock, stream = _connect(live.port)
        stream.write((MAX_FRAME_BYTES + 1).to_bytes(4, "big"))
        stream.flush()
        reply = read_frame(stream)
        assert reply["code"] == "frame_too_large"
        sock.close()


class TestServeConnectionLoop:
    def test_eof_ends_quietly(self, tmp_path):
        import io

        inbuf = io.BytesIO()
        write_frame(inbuf, {"v": 1, "type": "hello", "temperature": 1.0})
        write_frame(inbuf, {"v": 1, "type": "score", "text": "good"})
        inbuf.seek(0)
        outbuf = io.BytesIO()
        serve_connection(inbuf, outbuf, fresh_session(greet=False))
        outbuf.seek(0)
        assert read_frame(outbuf)["type"] == "handshake"
        assert read_frame(outbuf)["type"] == "scores"
        with pytest.raises(EOFError):
            read_frame(outbuf)

    def test_version_constant_matches_wire(self):
        assert PROTOCOL_VERSION == 1
