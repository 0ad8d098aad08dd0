import json

import numpy as np
import pytest

from depthattack.imaging import Image, RegionMask, save_image, save_mask


def build_scene_files(
    root,
    frame=64,
    object_size=16,
    base_intensity=0.3,
    object_intensity=0.95,
    background_depth=5.0,
    object_depth=2.0,
    sensitivity=2.0,
    **search_overrides,
):
    """Write a synthetic gray scene, its object mask and an attack config.

    The intensity-sensitive oracle makes "brighten the object" the known
    optimal attack, so desk-scale runs have an analytic target.
    """
    root.mkdir(parents=True, exist_ok=True)
    y0 = (frame - object_size) // 2
    pixels = np.full((frame, frame, 1), base_intensity)
    flags = np.zeros((frame, frame), dtype=bool)
    flags[y0 : y0 + object_size, y0 : y0 + object_size] = True
    pixels[flags] = object_intensity
    save_image(Image(pixels), root / "scene.png")
    save_mask(RegionMask(flags), root / "mask.png")

    search = {
        "population_size": 20,
        "neighborhood_size": 5,
        "generations": 10,
        "seed": 123,
    }
    search.update(search_overrides)
    config = {
        "scene": "synthetic",
        "image": "scene.png",
        "mask": "mask.png",
        "target": {"rule": "background-fill"},
        "oracle": {
            "builtin": "box-scene",
            "params": {
                "background": background_depth,
                "object_depth": object_depth,
                "sensitivity": sensitivity,
            },
        },
        "bounds": {"n_patterns": 4, "pattern_size": 8, "max_delta": 0.1},
        "search": search,
        "out": "out",
    }
    (root / "config.json").write_text(json.dumps(config, indent=2))
    return {
        "dir": root,
        "config_path": root / "config.json",
        "config": config,
        "mask_flags": flags,
        "frame": frame,
        "object_size": object_size,
    }


@pytest.fixture
def scene_factory(tmp_path):
    def factory(name="scene", **kwargs):
        return build_scene_files(tmp_path / name, **kwargs)

    return factory
