"""HTTP front end: /v1/generate, /v1/score, /v1/health.

Requests are served concurrently (one thread per connection); generation is
reproducible under a request seed because each decode derives its own RNG
from that seed and shares no state. Schema violations get a 400 with a
field-level message; model failures get a 500 with an error body.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .models import CannedTestModel, NGramFileModel, UniformTestModel, decode, forced_score

logger = logging.getLogger("model_server")


class SchemaError(Exception):
    """Request body does not match the wire schema; names the field."""


def _required(body: dict, field: str, kind: type):
    value = body.get(field)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise SchemaError(f"field {field!r} must be {kind.__name__}")
    if not isinstance(value, kind):
        raise SchemaError(f"field {field!r} missing or not {kind.__name__}")
    return value


def _optional(body: dict, field: str, kind: type, default):
    if field not in body:
        return default
    return _required(body, field, kind)


def handle_generate(model, body: dict) -> dict:
    prompt = _required(body, "prompt", str)
    top_p = _optional(body, "top_p", float, 1.0)
    max_tokens = _optional(body, "max_tokens", int, 32)
    stop = _optional(body, "stop", str, "</s>")
    seed = _optional(body, "seed", int, 0)
    if not 0.0 < top_p <= 1.0:
        raise SchemaError("field 'top_p' must be in (0, 1]")
    if max_tokens < 1:
        raise SchemaError("field 'max_tokens' must be >= 1")
    return decode(model, prompt, top_p, max_tokens, stop, seed)


def handle_score(model, body: dict) -> dict:
    prompt = _required(body, "prompt", str)
    continuation = _required(body, "continuation", str)
    return forced_score(model, prompt, continuation)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def model(self):
        return self.server.model  # type: ignore[attr-defined]

    def _reply(self, status: int, payload: dict) -> None:
        data = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
        logger.info("%s %s %d", self.command, self.path, status)

    def do_GET(self):
        if self.path != "/v1/health":
            self._reply(404, {"error": "unknown route"})
            return
        if self.model is None:
            self._reply(503, {"status": "loading"})
            return
        self._reply(200, {
            "status": "ok",
            "model_name": self.model.name,
            "vocab_size": self.model.vocab_size,
        })

    def do_POST(self):
        routes = {"/v1/generate": handle_generate, "/v1/score": handle_score}
        handler = routes.get(self.path)
        if handler is None:
            self._reply(404, {"error": "unknown route"})
            return
        if self.model is None:
            self._reply(503, {"status": "loading"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(body, dict):
                raise SchemaError("body must be a JSON object")
        except (json.JSONDecodeError, UnicodeDecodeError, ValueError) as exc:
            self._reply(400, {"error": f"malformed JSON body: {exc}"})
            return
        try:
            payload = handler(self.model, body)
        except SchemaError as exc:
            self._reply(400, {"error": str(exc)})
            return
        except Exception as exc:  # model failure
            logger.exception("model failure on %s", self.path)
            self._reply(500, {"error": f"model failure: {exc}"})
            return
        self._reply(200, payload)

    def log_message(self, fmt, *args):
        pass  # request lines logged with status in _reply


def create_server(model, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build the server with a loaded model (None serves 503s)."""
    httpd = ThreadingHTTPServer((host, port), _Handler)
    httpd.model = model  # type: ignore[attr-defined]
    return httpd


def load_model(spec_model: str | None, spec_test: str | None):
    if (spec_model is None) == (spec_test is None):
        raise ValueError("exactly one of --model and --test-model is required")
    if spec_model is not None:
        return NGramFileModel(spec_model)
    kind, _, arg = spec_test.partition(":")
    if kind == "uniform" and arg.isdigit():
        return UniformTestModel(int(arg))
    if kind == "canned" and arg:
        return CannedTestModel.from_file(arg)
    raise ValueError(f"test model must be uniform:K or canned:PATH, got {spec_test!r}")


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s %(message)s")
    parser = argparse.ArgumentParser(prog="stgraph-model-server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int,
                        default=int(os.environ.get("MODEL_SERVER_PORT", "8080")))
    parser.add_argument("--model", default=os.environ.get("MODEL_SERVER_MODEL"),
                        help="path to an n-gram count-table JSON file")
    parser.add_argument("--test-model", default=None,
                        help="uniform:K or canned:PATH (test doubles)")
    args = parser.parse_args(argv)
    try:
        model = load_model(args.model, args.test_model)
    except (OSError, ValueError) as exc:
        logger.error("cannot load model: %s", exc)
        return 1
    httpd = create_server(model, args.host, args.port)
    host, port = httpd.server_address
    logger.info("serving %s on http://%s:%d", model.name, host, port)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
