"""Socket and stdio service loops around ServiceSession."""

from __future__ import annotations

import socketserver
from typing import BinaryIO, Optional

from .classifier import StubClassifier
from .framing import FramingError, read_frame, write_frame
from .service import ServiceSession, error_reply
from .stubmodel import StubModel


def serve_connection(stream_in: BinaryIO, stream_out: BinaryIO,
                     session: ServiceSession) -> None:
    """Answer frames until EOF.

    A framing fault still gets an error reply, but the connection ends
    there: after a bad frame the stream position cannot be trusted.
    """
    while True:
        try:
            msg = read_frame(stream_in)
        except EOFError:
            return
        except FramingError as err:
            try:
                write_frame(stream_out, error_reply(err.code, err.message))
            except (OSError, FramingError):
                pass
            return
        try:
            write_frame(stream_out, session.handle(msg))
        except OSError:
            return


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: ModelServer = self.server  # type: ignore[assignment]
        session = ServiceSession(server.model, server.classifier,
                                 server.temperature)
        serve_connection(self.rfile, self.wfile, session)


class ModelServer(socketserver.ThreadingTCPServer):
    """One thread per connection; the models are shared read-only."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int],
                 model: Optional[StubModel],
                 classifier: Optional[StubClassifier],
                 temperature: float = 1.0):
        super().__init__(address, _Handler)
        self.model = model
        self.classifier = classifier
        self.temperature = float(temperature)
