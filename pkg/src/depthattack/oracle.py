"""The black-box depth-estimator boundary.

Every oracle exposes the same contract: a descriptor with its raster
dimensions and an ``estimate`` call mapping an image to a depth map while
a ledger counts queries.  Bundled synthetic oracles have known analytic
exploits so attacks can be verified at desk scale; the remote client
speaks the HTTP wire protocol to real model servers.
"""

from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    MalformedResponseError,
    OracleConnectionError,
    OracleError,
    RemoteModelError,
)
from .imaging import DepthMap, Image, RegionMask


@dataclass(frozen=True)
class OracleDescriptor:
    """Name plus input (width, height, channels) and output (width, height)."""

    name: str
    input_dims: tuple[int, int, int]
    output_dims: tuple[int, int]

    def __post_init__(self):
        if any(d <= 0 for d in self.input_dims) or any(d <= 0 for d in self.output_dims):
            raise ValueError("descriptor dimensions must be positive")


class QueryLedger:
    """Thread-safe count of oracle queries and the wall time they took.

    Incremented for every request the model actually saw (successes and
    server-side failures alike), never for local precondition errors.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.total_queries = 0
        self.wall_time = 0.0

    def record(self, elapsed: float, n: int = 1) -> None:
        with self._lock:
            self.total_queries += n
            self.wall_time += elapsed


class Oracle:
    """Contract implemented by every depth estimator in this package."""

    def __init__(self, descriptor: OracleDescriptor):
        self.descriptor = descriptor
        self.ledger = QueryLedger()

    def _check_input(self, img: Image) -> None:
        expected = self.descriptor.input_dims
        got = (img.width, img.height, img.channels)
        if got != expected:
            raise DimensionMismatchError(f"oracle expects {expected}, got {got}")

    def _check_output(self, depth: DepthMap) -> DepthMap:
        w, h = self.descriptor.output_dims
        if (depth.width, depth.height) != (w, h):
            raise OracleError(
                f"oracle produced {depth.width}x{depth.height}, descriptor says {w}x{h}"
            )
        return depth

    def estimate(self, img: Image) -> DepthMap:
        self._check_input(img)
        start = time.perf_counter()
        try:
            depth = self._estimate(img)
        except OracleError as exc:
            # 5xx and malformed answers still consumed a model query
            if getattr(exc, "counts_as_query", False):
                self.ledger.record(time.perf_counter() - start)
            raise
        self.ledger.record(time.perf_counter() - start)
        return self._check_output(depth)

    def estimate_batch(self, imgs: list[Image]) -> list[DepthMap]:
        return [self.estimate(img) for img in imgs]

    def _estimate(self, img: Image) -> DepthMap:
        raise NotImplementedError


class PlaneOracle(Oracle):
    """Constant-depth oracle: every image maps to the same flat plane."""

    def __init__(self, depth: float, width: int, height: int, channels: int = 1):
        super().__init__(OracleDescriptor("plane", (width, height, channels), (width, height)))
        self._plane = DepthMap(np.full((height, width), float(depth)))

    def _estimate(self, img: Image) -> DepthMap:
        return self._plane


class BoxSceneOracle(Oracle):
    """Synthetic scene with an intensity-sensitive object in front of a background.

    Outside the object region the depth equals the background.  Inside it,
    depth = object_depth + sensitivity * (mean region intensity - 0.5)
    * (background - object_depth): at mean intensity 0.5 the object sits
    at its own depth, and brightening the region linearly pushes it toward
    the background, so the known-optimal attack is "brighten the object".
    Depths are floored at zero to stay valid model units.
    """

    def __init__(
        self,
        background: DepthMap,
        region: RegionMask,
        object_depth: float,
        sensitivity: float,
        channels: int = 1,
    ):
        if background.values.shape != region.flags.shape:
            raise DimensionMismatchError("background and region rasters differ")
        if sensitivity < 0.0:
            raise ValueError("sensitivity must be >= 0")
        super().__init__(
            OracleDescriptor(
                "box-scene",
                (background.width, background.height, channels),
                (background.width, background.height),
            )
        )
        self.background = background
        self.region = region
        self.object_depth = float(object_depth)
        self.sensitivity = float(sensitivity)

    def _estimate(self, img: Image) -> DepthMap:
        intensity = img.pixels.mean(axis=2)
        mean = float(intensity[self.region.flags].mean())
        lever = self.object_depth + self.sensitivity * (mean - 0.5) * (
            self.background.values - self.object_depth
        )
        depth = np.where(self.region.flags, lever, self.background.values)
        return DepthMap(np.maximum(depth, 0.0))


class MeanIntensityOracle(Oracle):
    """Scripted model: depth everywhere = constant - mean intensity over a region."""

    def __init__(self, constant: float, region: RegionMask, channels: int = 1):
        super().__init__(
            OracleDescriptor(
                "mean-intensity",
                (region.width, region.height, channels),
                (region.width, region.height),
            )
        )
        self.constant = float(constant)
        self.region = region

    def _estimate(self, img: Image) -> DepthMap:
        intensity = img.pixels.mean(axis=2)
        mean = float(intensity[self.region.flags].mean())
        value = max(self.constant - mean, 0.0)
        return DepthMap(np.full((self.region.height, self.region.width), value))


def _image_payload(img: Image) -> dict:
    return {
        "width": img.width,
        "height": img.height,
        "channels": img.channels,
        "pixels": img.pixels.ravel().tolist(),
    }


def _parse_depth(obj: dict, expected: tuple[int, int]) -> DepthMap:
    try:
        w, h, depth = int(obj["width"]), int(obj["height"]), obj["depth"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponseError(f"depth response missing fields: {exc}") from exc
    if (w, h) != expected:
        raise MalformedResponseError(f"server reported {w}x{h}, descriptor says {expected}")
    arr = np.asarray(depth, dtype=np.float64)
    if arr.shape != (w * h,):
        raise MalformedResponseError(
            f"depth array has {arr.size} values, expected {w * h}"
        )
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0:
        raise MalformedResponseError("depth values must be finite and >= 0")
    return DepthMap(arr.reshape(h, w))


class RemoteOracle(Oracle):
    """HTTP client for the model-server wire protocol.

    One POST /estimate per query; POST /estimate_batch is used when the
    server offers it and silently degraded to sequential singles when it
    does not.  Connection failures are retried ``retries`` times before
    aborting; 5xx responses count as queries (the model ran and failed).
    """

    def __init__(self, endpoint: str, retries: int = 2, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.retries = int(retries)
        self.timeout = float(timeout)
        self._batch_supported: bool | None = None
        descriptor = self._fetch_descriptor()
        super().__init__(descriptor)

    def _request(self, path: str, body: dict | None = None) -> dict:
        url = self.endpoint + path
        data = None if body is None else json.dumps(body).encode()
        headers = {"Content-Type": "application/json"} if body is not None else {}
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            req = urllib.request.Request(url, data=data, headers=headers)
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode())
            except urllib.error.HTTPError as exc:
                detail = ""
                try:
                    detail = json.loads(exc.read().decode()).get("error", "")
                except Exception:
                    pass
                if exc.code >= 500:
                    raise RemoteModelError(f"model fault {exc.code}: {detail}") from exc
                raise OracleError(f"request rejected {exc.code}: {detail}") from exc
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last_exc = exc
        raise OracleConnectionError(
            f"{url} unreachable after {self.retries + 1} attempts: {last_exc}"
        ) from last_exc

    def _fetch_descriptor(self) -> OracleDescriptor:
        obj = self._request("/descriptor")
        try:
            return OracleDescriptor(
                str(obj["name"]),
                tuple(int(v) for v in obj["input_dims"]),
                tuple(int(v) for v in obj["output_dims"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponseError(f"bad descriptor: {obj!r}") from exc

    def _estimate(self, img: Image) -> DepthMap:
        obj = self._request("/estimate", _image_payload(img))
        return _parse_depth(obj, self.descriptor.output_dims)

    def estimate_batch(self, imgs: list[Image]) -> list[DepthMap]:
        if self._batch_supported is False or not imgs:
            return [self.estimate(img) for img in imgs]
        for img in imgs:
            self._check_input(img)
        start = time.perf_counter()
        try:
            obj = self._request("/estimate_batch", {"images": [_image_payload(i) for i in imgs]})
        except (OracleConnectionError, RemoteModelError) as exc:
            if isinstance(exc, RemoteModelError):
                self.ledger.record(time.perf_counter() - start, n=len(imgs))
            raise
        except OracleError:
            # 4xx from a server without the batch endpoint: fall back for good
            self._batch_supported = False
            return [self.estimate(img) for img in imgs]
        self._batch_supported = True
        self.ledger.record(time.perf_counter() - start, n=len(imgs))
        depths = obj.get("depths")
        if not isinstance(depths, list) or len(depths) != len(imgs):
            raise MalformedResponseError("batch response is not an aligned depth list")
        return [
            self._check_output(_parse_depth(d, self.descriptor.output_dims)) for d in depths
        ]


BUILTIN_ORACLES = {
    "plane": PlaneOracle,
    "box-scene": BoxSceneOracle,
    "mean-intensity": MeanIntensityOracle,
}
