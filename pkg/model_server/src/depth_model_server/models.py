"""Depth models the server can expose.

A model is anything with a name, declared raster dimensions and a
deterministic ``predict`` mapping an (h, w, c) float image in [0, 1] to a
nonnegative (h_out, w_out) depth array.  Builtin scripted models cover
protocol testing and loopback verification; real pretrained networks plug
in through a ``module:factory`` path so their checkpoints and
preprocessing stay in their own repositories.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelInfo:
    name: str
    input_dims: tuple[int, int, int]  # width, height, channels
    output_dims: tuple[int, int]  # width, height


class ScriptedModel:
    """Deterministic function model used for tests and loopbacks."""

    def __init__(self, info: ModelInfo, fn):
        self.info = info
        self._fn = fn

    def predict(self, pixels: np.ndarray) -> np.ndarray:
        return self._fn(pixels)


def _load_region(params: dict, width: int, height: int) -> np.ndarray:
    """Boolean (h, w) region from either a rect [x, y, w, h] or a mask PNG."""
    if "region" in params:
        x, y, w, h = (int(v) for v in params["region"])
        flags = np.zeros((height, width), dtype=bool)
        flags[y : y + h, x : x + w] = True
        return flags
    if "mask" in params:
        from PIL import Image

        with Image.open(params["mask"]) as img:
            arr = np.asarray(img.convert("L"))
        if arr.shape != (height, width):
            raise ValueError(f"mask {arr.shape} does not match {height}x{width}")
        return arr > 0
    raise ValueError("mean-intensity model needs 'region' [x,y,w,h] or 'mask' path")


def mean_intensity_model(params: dict) -> ScriptedModel:
    """depth everywhere = constant - mean intensity over a fixed region."""
    width = int(params.get("width", 64))
    height = int(params.get("height", 64))
    channels = int(params.get("channels", 1))
    constant = float(params.get("constant", 2.0))
    flags = _load_region(params, width, height)

    def predict(pixels: np.ndarray) -> np.ndarray:
        intensity = pixels.mean(axis=2)
        mean = float(intensity[flags].mean())
        value = max(constant - mean, 0.0)
        return np.full((height, width), value)

    return ScriptedModel(
        ModelInfo("mean-intensity", (width, height, channels), (width, height)), predict
    )


def plane_model(params: dict) -> ScriptedModel:
    width = int(params.get("width", 64))
    height = int(params.get("height", 64))
    channels = int(params.get("channels", 1))
    depth = float(params.get("depth", 1.0))

    def predict(pixels: np.ndarray) -> np.ndarray:
        return np.full((height, width), depth)

    return ScriptedModel(ModelInfo("plane", (width, height, channels), (width, height)), predict)


def _block_average(intensity: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Average-pool an intensity raster onto the output grid."""
    h, w = intensity.shape
    ys = (np.arange(out_h + 1) * h) // out_h
    xs = (np.arange(out_w + 1) * w) // out_w
    out = np.empty((out_h, out_w))
    for j in range(out_h):
        rows = intensity[ys[j] : max(ys[j + 1], ys[j] + 1)]
        for i in range(out_w):
            out[j, i] = rows[:, xs[i] : max(xs[i + 1], xs[i] + 1)].mean()
    return out


def indoor_stub_model(params: dict) -> ScriptedModel:
    """Stand-in with the indoor model's raster contract: 304x228x3 in,
    160x124 out, depth mode.  Inference is a scripted brightness-to-depth
    ramp, deterministic by construction."""

    def predict(pixels: np.ndarray) -> np.ndarray:
        intensity = pixels.mean(axis=2)
        pooled = _block_average(intensity, 160, 124)
        return 10.0 - 9.5 * pooled

    return ScriptedModel(ModelInfo("indoor", (304, 228, 3), (160, 124)), predict)


def outdoor_stub_model(params: dict) -> ScriptedModel:
    """Stand-in with the outdoor model's raster contract: 640x192x3 in and
    out, disparity mode (larger value = nearer)."""

    def predict(pixels: np.ndarray) -> np.ndarray:
        return pixels.mean(axis=2) * 0.3

    return ScriptedModel(ModelInfo("outdoor", (640, 192, 3), (640, 192)), predict)


BUILTIN_MODELS = {
    "mean-intensity": mean_intensity_model,
    "plane": plane_model,
    "indoor-stub": indoor_stub_model,
    "outdoor-stub": outdoor_stub_model,
}


def load_model(spec: str, params: dict):
    """Resolve a builtin name or a ``package.module:factory`` plugin path."""
    if spec in BUILTIN_MODELS:
        return BUILTIN_MODELS[spec](params)
    if ":" in spec:
        module_name, attr = spec.split(":", 1)
        factory = getattr(importlib.import_module(module_name), attr)
        return factory(params)
    raise ValueError(
        f"unknown model {spec!r}; builtins: {sorted(BUILTIN_MODELS)} or use module:factory"
    )
