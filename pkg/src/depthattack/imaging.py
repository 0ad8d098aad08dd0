"""Raster containers, region masks, block decomposition and homography warps.

All pixel math happens on float arrays in [0, 1]; quantization to 8-bit
occurs only when a PNG is written.  Arrays inside the value types are
frozen (non-writeable) so instances can be shared freely across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import (
    DimensionMismatchError,
    EmptyRegionError,
    ImageFormatError,
    SingularHomographyError,
    UnsupportedBitDepthError,
)

DMAP_MAGIC = b"DMAP"


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Image:
    """Float raster in [0, 1], shape (height, width, channels), channels 1 or 3."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"image must be (h, w, 1|3), got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image pixels must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("image pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class DepthMap:
    """Nonnegative scalar raster in model units, shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("depth values must be finite")
        if v.min() < 0.0:
            raise ValueError("depth values must be >= 0")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RegionMask:
    """Boolean raster selecting the pixels of a region, shape (height, width)."""

    flags: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.flags)
        if f.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {f.shape}")
        object.__setattr__(self, "flags", _frozen(f.astype(bool)))

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def bounding_box(self) -> tuple[int, int, int, int]:
        """(x0, y0, x1, y1) inclusive bounds of the set pixels."""
        if self.count == 0:
            raise EmptyRegionError("mask has no set pixels")
        ys, xs = np.nonzero(self.flags)
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


@dataclass(frozen=True)
class PerturbationField:
    """Per-pixel additive intensity delta, shape (height, width)."""

    deltas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError(f"field must be 2-D, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("field deltas must be finite")
        object.__setattr__(self, "deltas", _frozen(d))

    @property
    def height(self) -> int:
        return self.deltas.shape[0]

    @property
    def width(self) -> int:
        return self.deltas.shape[1]


@dataclass(frozen=True)
class Homography:
    """3x3 projective map from source (texture) to target (image) pixel coords."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("homography must be a 3x3 matrix")
        if abs(np.linalg.det(m)) <= 1e-9:
            raise SingularHomographyError("homography matrix is not invertible")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.matrix, np.eye(3)))


@dataclass(frozen=True)
class BlockGrid:
    """Square-block decomposition of a masked region.

    Blocks are anchored at the top-left of the mask's bounding box; blocks
    crossing the image edge are clipped, never dropped.  ``covered_blocks``
    lists (u, v) block coordinates whose clipped footprint contains at
    least one set mask pixel.
    """

    block_size: int
    origin: tuple[int, int]
    cols: int
    rows: int
    image_width: int
    image_height: int
    covered_blocks: tuple[tuple[int, int], ...] = field(default=())

    def footprint(self, u: int, v: int) -> tuple[int, int, int, int]:
        """Pixel slice bounds (x0, y0, x1, y1), half-open, clipped to the image."""
        x0 = self.origin[0] + u * self.block_size
        y0 = self.origin[1] + v * self.block_size
        x1 = min(x0 + self.block_size, self.image_width)
        y1 = min(y0 + self.block_size, self.image_height)
        return x0, y0, x1, y1

    @property
    def n_blocks(self) -> int:
        return len(self.covered_blocks)


def load_image(path: str | Path) -> Image:
    """Load a PNG into an Image, mapping 8-bit samples to [0, 1] by v / 255.

    Alpha channels are dropped; palette images are expanded to RGB.
    Raises ImageFormatError for unreadable files and
    UnsupportedBitDepthError for non-8-bit sample depths.
    """
    try:
        with PILImage.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise UnsupportedBitDepthError(
                    f"{path}: sample depth of mode {mode!r} is not 8 bits"
                )
            if mode == "P":
                img = img.convert("RGBA" if "transparency" in img.info else "RGB")
                mode = img.mode
            if mode == "RGBA":
                img = img.convert("RGB")
            elif mode == "LA":
                img = img.convert("L")
            elif mode not in ("L", "RGB"):
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except UnsupportedBitDepthError:
        raise
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"cannot read image {path}: {exc}") from exc
    return Image(arr)


def save_image(img: Image, path: str | Path) -> None:
    """Write an Image as an 8-bit PNG (round(v * 255) per sample)."""
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        pil = PILImage.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(arr, mode="RGB")
    pil.save(path, format="PNG")


def load_mask(path: str | Path) -> RegionMask:
    """Load a PNG as a RegionMask: any nonzero sample marks the pixel as set."""
    img = load_image(path)
    return RegionMask(img.pixels.max(axis=2) > 0.0)


def save_mask(mask: RegionMask, path: str | Path) -> None:
    save_image(Image(mask.flags.astype(np.float64)[:, :, None]), path)


def block_grid(mask: RegionMask, block_size: int) -> BlockGrid:
    """Decompose a masked region into block_size x block_size blocks.

    The grid is anchored at the mask's bounding-box top-left; a block is
    covered when its clipped pixel footprint intersects the mask.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    if mask.count == 0:
        raise EmptyRegionError("cannot grid an empty mask")
    x0, y0, x1, y1 = mask.bounding_box()
    cols = -(-(x1 - x0 + 1) // block_size)
    rows = -(-(y1 - y0 + 1) // block_size)
    grid = BlockGrid(
        block_size=block_size,
        origin=(x0, y0),
        cols=cols,
        rows=rows,
        image_width=mask.width,
        image_height=mask.height,
    )
    covered = []
    for v in range(rows):
        for u in range(cols):
            bx0, by0, bx1, by1 = grid.footprint(u, v)
            if mask.flags[by0:by1, bx0:bx1].any():
                covered.append((u, v))
    return BlockGrid(
        block_size=block_size,
        origin=(x0, y0),
        cols=cols,
        rows=rows,
        image_width=mask.width,
        image_height=mask.height,
        covered_blocks=tuple(covered),
    )


def warp_delta(
    delta: PerturbationField, h: Homography, target_shape: tuple[int, int]
) -> PerturbationField:
    """Warp a texture-space delta field into image space.

    Inverse-mapped bilinear sampling: for each target pixel the source
    location is h^-1 applied to its coordinates; samples outside the
    source raster contribute zero.  ``target_shape`` is (width, height).
    The identity homography reproduces the input bit-exactly.
    """
    tw, th = target_shape
    if h.is_identity() and (delta.width, delta.height) == (tw, th):
        return delta
    inv = np.linalg.inv(h.matrix)
    xs, ys = np.meshgrid(np.arange(tw, dtype=np.float64), np.arange(th, dtype=np.float64))
    ones = np.ones_like(xs)
    denom = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2] * ones
    # Inverse of an invertible matrix can still send points to infinity.
    safe = np.abs(denom) > 1e-12
    denom = np.where(safe, denom, 1.0)
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / denom
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / denom

    src = delta.deltas
    sh, sw = src.shape
    # Clip before the int conversion so far-outside projective points cannot
    # overflow int64; anything clipped is outside [0, s*) and contributes 0.
    sx = np.clip(sx, -2.0, sw + 2.0)
    sy = np.clip(sy, -2.0, sh + 2.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0

    out = np.zeros((th, tw), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            w = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            inside = safe & (xi >= 0) & (xi < sw) & (yi >= 0) & (yi < sh)
            vals = np.where(inside, src[np.clip(yi, 0, sh - 1), np.clip(xi, 0, sw - 1)], 0.0)
            out += np.where(inside, w * vals, 0.0)
    return PerturbationField(out)


def resize_mask_nearest(mask: RegionMask, width: int, height: int) -> RegionMask:
    """Nearest-neighbor rescale of a mask, e.g. into oracle-output coordinates."""
    if (mask.width, mask.height) == (width, height):
        return mask
    ys = np.minimum((np.arange(height) * mask.height) // height, mask.height - 1)
    xs = np.minimum((np.arange(width) * mask.width) // width, mask.width - 1)
    return RegionMask(mask.flags[np.ix_(ys, xs)])


def save_dmap(values: np.ndarray | DepthMap | PerturbationField, path: str | Path) -> None:
    """Write a scalar raster in the DMAP format.

    Layout: 16-byte header (magic "DMAP", u32 LE width, u32 LE height,
    u32 LE reserved = 0) followed by width * height little-endian float32
    values, row-major.
    """
    if isinstance(values, DepthMap):
        arr = values.values
    elif isinstance(values, PerturbationField):
        arr = values.deltas
    else:
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("DMAP rasters must be 2-D")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(DMAP_MAGIC)
        fh.write(struct.pack("<III", w, h, 0))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def load_dmap(path: str | Path) -> np.ndarray:
    """Read a DMAP raster back as a float64 (height, width) array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != DMAP_MAGIC:
        raise ImageFormatError(f"{path}: not a DMAP file")
    w, h, reserved = struct.unpack("<III", blob[4:16])
    if reserved != 0:
        raise ImageFormatError(f"{path}: reserved header word is {reserved}, not 0")
    need = 16 + 4 * w * h
    if len(blob) != need:
        raise ImageFormatError(f"{path}: expected {need} bytes, found {len(blob)}")
    return np.frombuffer(blob[16:], dtype="<f4").reshape(h, w).astype(np.float64)


def load_depth_map(path: str | Path) -> DepthMap:
    return DepthMap(load_dmap(path))


# Anchors of the fixed false-color ramp used for depth PNGs: positions in
# [0, 1] of normalized depth against RGB values.  Near is warm, far is cold.
_COLOR_ANCHORS = np.array(
    [
        [0.00, 0.85, 0.15, 0.10],
        [0.25, 0.95, 0.65, 0.10],
        [0.50, 0.60, 0.85, 0.35],
        [0.75, 0.15, 0.55, 0.85],
        [1.00, 0.10, 0.15, 0.45],
    ]
)


def depth_to_false_color(depth: DepthMap, lo: float | None = None, hi: float | None = None) -> Image:
    """Render a depth map through the fixed documented colormap.

    Depths are normalized by (d - lo) / (hi - lo) with lo/hi defaulting to
    the map's min/max; a constant map renders as the mid color.
    """
    d = depth.values
    lo = float(d.min()) if lo is None else lo
    hi = float(d.max()) if hi is None else hi
    t = np.full_like(d, 0.5) if hi <= lo else np.clip((d - lo) / (hi - lo), 0.0, 1.0)
    rgb = np.empty(d.shape + (3,), dtype=np.float64)
    pos = _COLOR_ANCHORS[:, 0]
    for c in range(3):
        rgb[:, :, c] = np.interp(t, pos, _COLOR_ANCHORS[:, c + 1])
    return Image(rgb)
