"""HTTP service exposing one depth model behind the estimate protocol.

Endpoints: GET /descriptor, POST /estimate, POST /estimate_batch.
Requests are handled sequentially (one model instance, one in-flight
inference); the batch endpoint is the sanctioned throughput path.
Malformed requests get 400 with {"error": ...}; inference exceptions get
500.  Inference is deterministic: identical requests produce identical
depth arrays.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np

from .models import load_model


@dataclass
class ServerConfig:
    model: str = "mean-intensity"
    params: dict = field(default_factory=dict)
    host: str = "127.0.0.1"
    port: int = 8750
    # per-channel normalization applied before predict; identity when None
    mean: list[float] | None = None
    std: list[float] | None = None
    output_mode: str = "depth"  # or "disparity": whatever scalar the model emits

    def __post_init__(self):
        if self.output_mode not in ("depth", "disparity"):
            raise ValueError("output_mode must be 'depth' or 'disparity'")


class _BadRequest(Exception):
    pass


def _parse_image(obj: dict, dims: tuple[int, int, int]) -> np.ndarray:
    try:
        width = int(obj["width"])
        height = int(obj["height"])
        channels = int(obj["channels"])
        pixels = obj["pixels"]
    except (KeyError, TypeError, ValueError) as exc:
        raise _BadRequest(f"image object missing fields: {exc}") from exc
    if (width, height, channels) != dims:
        raise _BadRequest(f"model expects {dims}, request is {(width, height, channels)}")
    if not isinstance(pixels, list) or len(pixels) != width * height * channels:
        raise _BadRequest(
            f"pixel array must hold {width * height * channels} values, got "
            f"{len(pixels) if isinstance(pixels, list) else type(pixels).__name__}"
        )
    arr = np.asarray(pixels, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise _BadRequest("pixels must be finite values in [0, 1]")
    return arr.reshape(height, width, channels)


def make_handler(config: ServerConfig, model):
    info = model.info
    mean = np.asarray(config.mean, dtype=np.float64) if config.mean else None
    std = np.asarray(config.std, dtype=np.float64) if config.std else None

    def infer(pixels: np.ndarray) -> dict:
        if mean is not None:
            pixels = pixels - mean
        if std is not None:
            pixels = pixels / std
        depth = np.asarray(model.predict(pixels), dtype=np.float64)
        out_w, out_h = info.output_dims
        if depth.shape != (out_h, out_w):
            raise RuntimeError(f"model produced {depth.shape}, declared {(out_h, out_w)}")
        return {"width": out_w, "height": out_h, "depth": depth.ravel().tolist()}

    class Handler(BaseHTTPRequestHandler):
        server_version = "DepthModelServer/0.1"

        def log_message(self, *args):
            pass

        def _send(self, code: int, obj: dict) -> None:
            body = json.dumps(obj).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise _BadRequest(f"body is not JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise _BadRequest("body must be a JSON object")
            return obj

        def do_GET(self):
            if self.path == "/descriptor":
                self._send(
                    200,
                    {
                        "name": info.name,
                        "input_dims": list(info.input_dims),
                        "output_dims": list(info.output_dims),
                        "output_mode": config.output_mode,
                    },
                )
            else:
                self._send(404, {"error": f"no such endpoint {self.path}"})

        def do_POST(self):
            try:
                obj = self._read_json()
                if self.path == "/estimate":
                    pixels = _parse_image(obj, info.input_dims)
                    self._send(200, infer(pixels))
                elif self.path == "/estimate_batch":
                    images = obj.get("images")
                    if not isinstance(images, list):
                        raise _BadRequest("batch body needs an 'images' list")
                    parsed = [_parse_image(item, info.input_dims) for item in images]
                    self._send(200, {"depths": [infer(p) for p in parsed]})
                else:
                    self._send(404, {"error": f"no such endpoint {self.path}"})
            except _BadRequest as exc:
                self._send(400, {"error": str(exc)})
            except Exception as exc:  # inference fault
                self._send(500, {"error": f"{type(exc).__name__}: {exc}"})

    return Handler


def build_server(config: ServerConfig) -> HTTPServer:
    """Sequential (single-flight) HTTP server bound to the configured port."""
    model = load_model(config.model, config.params)
    return HTTPServer((config.host, config.port), make_handler(config, model))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="depth-model-server",
        description="Serve one depth model over the estimate protocol.",
    )
    parser.add_argument("--model", default="mean-intensity",
                        help="builtin name or module:factory plugin path")
    parser.add_argument("--params", default="{}", help="model parameters as JSON")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8750)
    parser.add_argument("--mean", default=None, help="per-channel mean, comma separated")
    parser.add_argument("--std", default=None, help="per-channel std, comma separated")
    parser.add_argument("--output-mode", default="depth", choices=["depth", "disparity"])
    args = parser.parse_args(argv)

    config = ServerConfig(
        model=args.model,
        params=json.loads(args.params),
        host=args.host,
        port=args.port,
        mean=[float(v) for v in args.mean.split(",")] if args.mean else None,
        std=[float(v) for v in args.std.split(",")] if args.std else None,
        output_mode=args.output_mode,
    )
    server = build_server(config)
    host, port = server.server_address[:2]
    print(f"serving {config.model} on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
