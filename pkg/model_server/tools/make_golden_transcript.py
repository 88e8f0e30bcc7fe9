"""Record the golden request/response transcript.

Frames alternate request, response, concatenated raw into
tests/golden/transcript.bin.  Run once against the committed weights;
the replay test re-answers each request and compares response bytes.
"""

import io
from pathlib import Path

from model_server.classifier import default_classifier_path, load_classifier
from model_server.framing import write_frame
from model_server.service import ServiceSession
from model_server.stubmodel import default_model_path, load_model

REQUESTS = [
    {"v": 1, "type": "hello", "temperature": 1.0},
    {"v": 1, "type": "predict_topm", "text": "", "offset": 0, "m": 12},
    {"v": 1, "type": "predict_topm", "text": "good", "offset": 0, "m": 5},
    {"v": 1, "type": "predict_topm", "text": "good", "offset": 5, "m": 5},
    {"v": 1, "type": "predict_topm", "text": "good", "offset": 10, "m": 5},
    {"v": 1, "type": "predict_topm", "text": "good", "offset": 0, "m": 5},
    {"v": 1, "type": "predict_topm", "text": "good good", "offset": 0, "m": 12},
    {"v": 1, "type": "predict_topm", "text": " the sad day", "offset": 0, "m": 3},
    {"v": 1, "type": "score", "text": "good"},
    {"v": 1, "type": "score", "text": "good bad"},
    {"v": 1, "type": "score", "text": " very sad"},
    {"v": 1, "type": "shutdown"},
    {"v": 1, "type": "predict_topm", "text": "zzz", "offset": 0, "m": 3},
]


def main() -> None:
    session = ServiceSession(load_model(default_model_path()),
                             load_classifier(default_classifier_path()), 1.0)
    blob = io.BytesIO()
    for req in REQUESTS:
        write_frame(blob, req)
        write_frame(blob, session.handle(req))
    out = Path(__file__).resolve().parent.parent / "tests" / "golden"
    out.mkdir(parents=True, exist_ok=True)
    (out / "transcript.bin").write_bytes(blob.getvalue())
    print("wrote", out / "transcript.bin", len(blob.getvalue()), "bytes")


if __name__ == "__main__":
    main()
