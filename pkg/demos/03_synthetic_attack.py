"""End-to-end attack on a synthetic depth estimator.
====================================================

The bundled box-scene oracle puts an intensity-sensitive object in front
of a flat background: brightening the object's texture pushes its
estimated depth toward the background, so "make the object vanish" has a
known optimal attack.  This script builds the scene on disk, lets the
engine attack it through the same path the CLI uses, and reads back the
artifacts.

The equivalent CLI invocation is:

    depthattack attack config.json --out out
"""

import json
from pathlib import Path

import numpy as np

from depthattack.attack import AttackConfig, evaluate_solution, run_attack
from depthattack.imaging import Image, RegionMask, save_image, save_mask

root = Path(__file__).parent / "out" / "03_attack"
root.mkdir(parents=True, exist_ok=True)

# scene: 64x64 frame, 16x16 bright object, flat background at depth 5
pixels = np.full((64, 64, 1), 0.3)
flags = np.zeros((64, 64), dtype=bool)
flags[24:40, 24:40] = True
pixels[flags] = 0.95
save_image(Image(pixels), root / "scene.png")
save_mask(RegionMask(flags), root / "mask.png")

config_obj = {
    "scene": "demo",
    "image": "scene.png",
    "mask": "mask.png",
    "target": {"rule": "background-fill"},
    "oracle": {
        "builtin": "box-scene",
        "params": {"background": 5.0, "object_depth": 2.0, "sensitivity": 2.0},
    },
    "bounds": {"n_patterns": 4, "pattern_size": 8, "max_delta": 0.1},
    "search": {
        "population_size": 100,
        "neighborhood_size": 10,
        "generations": 150,
        "seed": 11,
    },
    "out": "out",
}
(root / "config.json").write_text(json.dumps(config_obj, indent=2))

config = AttackConfig.from_file(root / "config.json")
report = run_attack(config)

row = report.rows[0]
print(f"queries spent: {report.queries}")
print(f"archive: {len(report.pareto)} trade-off points")
print(f"knee solution: f1={row.f1:.3f} f2={row.f2:.3f} reduction={row.reduction_pct:.1f}%")

best = evaluate_solution(config, root / "out" / "best_solution.json")
print(f"best attack:   f1={best.f1:.3f} f2={best.f2:.3f} reduction={best.reduction_pct:.1f}%")
print(f"artifacts (PNGs, DMAPs, pareto.csv, trace.jsonl, report.csv) in {root / 'out'}")
