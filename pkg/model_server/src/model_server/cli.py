"""model-server command line entry point."""

from __future__ import annotations

import argparse
import math
import sys
from typing import Optional

from .classifier import default_classifier_path, load_classifier
from .server import ModelServer, serve_connection
from .service import ServiceSession
from .stubmodel import ModelFileError, default_model_path, load_model


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-server",
        description="Serve next-token pages and sentiment scores over "
                    "length-prefixed JSON.",
    )
    parser.add_argument("--model", default=None,
                        help="model weights JSON (default: bundled stub)")
    parser.add_argument("--classifier", default=None,
                        help="classifier weights JSON (default: bundled stub)")
    parser.add_argument("--temperature", type=float, default=1.0,
                        help="pinned softmax temperature")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7643,
                        help="TCP port; 0 picks a free one")
    parser.add_argument("--stdio", action="store_true",
                        help="serve a single session over stdin/stdout")
    args = parser.parse_args(argv)

    if not math.isfinite(args.temperature) or args.temperature <= 0.0:
        print(f"model-server: temperature must be positive and finite, "
              f"got {args.temperature}", file=sys.stderr)
        return 4
    try:
        model = load_model(args.model or default_model_path())
        classifier = load_classifier(args.classifier or default_classifier_path())
    except ModelFileError as err:
        print(f"model-server: {err}", file=sys.stderr)
        return 4

    if args.stdio:
        session = ServiceSession(model, classifier, args.temperature)
        serve_connection(sys.stdin.buffer, sys.stdout.buffer, session)
        return 0

    with ModelServer((args.host, args.port), model, classifier,
                     args.temperature) as srv:
        host, port = srv.server_address[:2]
        # parsed by callers that passed --port 0
        print(f"listening {host}:{port}", flush=True)
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
