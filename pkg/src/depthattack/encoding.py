"""Genotype for block-wise texture perturbations and its rendering.

A candidate carries one assignment gene per covered block plus a shared
set of small square patterns.  Assignment genes are relaxed to reals in
[0, n_patterns] and decoded by round-half-up at render time, so the same
real-valued variation operators apply to the whole genome; pattern genes
are per-pixel intensity deltas in [-max_delta, +max_delta].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .imaging import (
    BlockGrid,
    Homography,
    Image,
    PerturbationField,
    RegionMask,
    _frozen,
    warp_delta,
)


@dataclass(frozen=True)
class Bounds:
    """Box bounds of the genotype.

    n_patterns: how many shared block patterns exist (assignment 0 means
    "leave the block untouched"), pattern_size: pattern edge length in
    pixels, max_delta: per-pixel intensity bound in [0, 1] units.
    """

    n_patterns: int = 10
    pattern_size: int = 8
    max_delta: float = 0.1

    def __post_init__(self):
        if self.n_patterns < 1:
            raise ValueError("n_patterns must be >= 1")
        if self.pattern_size < 1:
            raise ValueError("pattern_size must be >= 1")
        if not (0.0 < self.max_delta <= 1.0):
            raise ValueError("max_delta must lie in (0, 1]")

    @property
    def genes_per_pattern(self) -> int:
        return self.pattern_size * self.pattern_size


@dataclass(frozen=True)
class Surface:
    """One perturbable surface: a block grid in texture space plus the map
    projecting that texture onto the image.  ``homography`` None means the
    surface is designed directly in image space."""

    grid: BlockGrid
    homography: Homography | None = None


@dataclass(frozen=True)
class Solution:
    """One genotype: per-block assignment genes and the shared patterns.

    ``pattern_genes`` has shape (n_patterns, pattern_size**2), row-major
    per pattern; ``map_genes`` follows the covered-block order of the
    encoder's surfaces.
    """

    map_genes: np.ndarray
    pattern_genes: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.map_genes, dtype=np.float64)
        p = np.asarray(self.pattern_genes, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("pattern_genes must be (n_patterns, pattern_size**2)")
        object.__setattr__(self, "map_genes", _frozen(m))
        object.__setattr__(self, "pattern_genes", _frozen(p))

    @property
    def genes(self) -> np.ndarray:
        """Flat genome: all map genes, then patterns r = 1.. in order."""
        return np.concatenate([self.map_genes, self.pattern_genes.ravel()])

    def to_json(self) -> dict:
        return {
            "map": self.map_genes.tolist(),
            "patterns": self.pattern_genes.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Solution":
        return cls(np.asarray(obj["map"]), np.asarray(obj["patterns"]))


def decode_assignment(gene: float, n_patterns: int) -> int:
    """Decode a relaxed assignment gene: round-half-up of clamp(gene, 0, n)."""
    clamped = min(max(float(gene), 0.0), float(n_patterns))
    return int(math.floor(clamped + 0.5))


def apply_to_image(img: Image, field: PerturbationField) -> Image:
    """Add a scalar delta field to every channel, clamping to [0, 1]."""
    if (field.height, field.width) != (img.height, img.width):
        raise DimensionMismatchError(
            f"field {field.width}x{field.height} does not match "
            f"image {img.width}x{img.height}"
        )
    return Image(np.clip(img.pixels + field.deltas[:, :, None], 0.0, 1.0))


class PerturbationEncoder:
    """Fixes the gene ordering and renders genotypes into delta fields.

    Gene order is stable: surface 0 map genes (covered blocks row-major),
    surface 1 map genes, ..., then pattern 1 row-major, pattern 2, ...
    """

    def __init__(self, bounds: Bounds, mask: RegionMask, surfaces: list[Surface] | None = None):
        from .imaging import block_grid  # deferred: avoids import noise at module top

        self.bounds = bounds
        self.mask = mask
        if surfaces is None:
            surfaces = [Surface(block_grid(mask, bounds.pattern_size))]
        self.surfaces = list(surfaces)
        self.n_map = sum(s.grid.n_blocks for s in self.surfaces)
        self.n_pattern_genes = bounds.n_patterns * bounds.genes_per_pattern
        self.n_genes = self.n_map + self.n_pattern_genes

        lower = np.empty(self.n_genes)
        upper = np.empty(self.n_genes)
        lower[: self.n_map] = 0.0
        upper[: self.n_map] = float(bounds.n_patterns)
        lower[self.n_map :] = -bounds.max_delta
        upper[self.n_map :] = bounds.max_delta
        lower.flags.writeable = False
        upper.flags.writeable = False
        self.lower = lower
        self.upper = upper

    def random_solution(self, rng: np.random.Generator) -> Solution:
        """Sample uniformly from the feasible box; deterministic per rng state."""
        map_genes = rng.uniform(0.0, self.bounds.n_patterns, size=self.n_map)
        pattern_genes = rng.uniform(
            -self.bounds.max_delta,
            self.bounds.max_delta,
            size=(self.bounds.n_patterns, self.bounds.genes_per_pattern),
        )
        return Solution(map_genes, pattern_genes)

    def split(self, genes: np.ndarray) -> Solution:
        genes = np.asarray(genes, dtype=np.float64)
        if genes.shape != (self.n_genes,):
            raise ValueError(f"expected {self.n_genes} genes, got shape {genes.shape}")
        return Solution(
            genes[: self.n_map],
            genes[self.n_map :].reshape(self.bounds.n_patterns, -1),
        )

    def violation(self, genes: np.ndarray) -> float:
        """Summed distance outside the box bounds; 0 iff feasible."""
        genes = np.asarray(genes, dtype=np.float64)
        below = np.maximum(self.lower - genes, 0.0)
        above = np.maximum(genes - self.upper, 0.0)
        return float(np.sum(below + above))

    def render(self, sol: Solution | np.ndarray) -> PerturbationField:
        """Render a genotype into an image-space delta field.

        Blocks with decoded assignment r > 0 receive pattern r clipped to
        their footprint; surfaces with a homography are warped into image
        space by inverse-mapped bilinear sampling; the result is zeroed
        outside the region mask.
        """
        if not isinstance(sol, Solution):
            sol = self.split(sol)
        size = self.bounds.pattern_size
        patterns = sol.pattern_genes.reshape(self.bounds.n_patterns, size, size)
        target = np.zeros((self.mask.height, self.mask.width), dtype=np.float64)

        offset = 0
        for surface in self.surfaces:
            grid = surface.grid
            tex = np.zeros((grid.image_height, grid.image_width), dtype=np.float64)
            for bi, (u, v) in enumerate(grid.covered_blocks):
                assignment = decode_assignment(sol.map_genes[offset + bi], self.bounds.n_patterns)
                if assignment == 0:
                    continue
                x0, y0, x1, y1 = grid.footprint(u, v)
                tex[y0:y1, x0:x1] = patterns[assignment - 1][: y1 - y0, : x1 - x0]
            offset += grid.n_blocks
            if surface.homography is None:
                if tex.shape != target.shape:
                    raise DimensionMismatchError(
                        "image-space surface grid does not match the mask raster"
                    )
                target += tex
            else:
                warped = warp_delta(
                    PerturbationField(tex), surface.homography, (self.mask.width, self.mask.height)
                )
                target += warped.deltas
        target[~self.mask.flags] = 0.0
        return PerturbationField(target)
