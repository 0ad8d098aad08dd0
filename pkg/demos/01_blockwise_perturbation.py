"""Rendering block-wise texture perturbations.
====================================================

A candidate perturbation is a tiny genome: one assignment gene per block
of the object region plus a handful of shared square patterns.  This
script builds a region, samples a random candidate, renders it into a
per-pixel delta field and applies it to an image.
"""

from pathlib import Path

import numpy as np

from depthattack.encoding import Bounds, PerturbationEncoder, apply_to_image
from depthattack.imaging import Image, RegionMask, save_dmap, save_image

out = Path(__file__).parent / "out" / "01_blockwise"
out.mkdir(parents=True, exist_ok=True)

# a 96x96 gray scene with a 40x40 "object" in the middle
pixels = np.full((96, 96, 1), 0.35)
flags = np.zeros((96, 96), dtype=bool)
flags[28:68, 28:68] = True
pixels[flags] = 0.75
scene = Image(pixels)
mask = RegionMask(flags)

# 6 shared 8x8 patterns, deltas capped at +-0.08 per pixel
bounds = Bounds(n_patterns=6, pattern_size=8, max_delta=0.08)
encoder = PerturbationEncoder(bounds, mask)
print(f"region of {mask.count} px -> {encoder.n_map} blocks, {encoder.n_genes} genes total")

rng = np.random.default_rng(7)
sol = encoder.random_solution(rng)
field = encoder.render(sol)

print(f"rendered field: sup-norm {np.abs(field.deltas).max():.4f} (cap {bounds.max_delta})")
print(f"zero outside the region: {bool((field.deltas[~flags] == 0).all())}")

save_image(scene, out / "scene.png")
save_dmap(field, out / "perturbation.dmap")
save_image(apply_to_image(scene, field), out / "perturbed.png")

# make the deltas visible: re-center them on mid gray
visual = Image(np.clip(0.5 + field.deltas[:, :, None] * 6.0, 0, 1))
save_image(visual, out / "perturbation_x6.png")
print(f"wrote scene/perturbed/perturbation PNGs to {out}")
