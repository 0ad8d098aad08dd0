"""Loopback conformance: the attack engine talking to this server over HTTP
must behave exactly like its in-process oracle twin.

The server runs the scripted model "depth = constant minus mean intensity
over the object region"; the engine runs the same attack once against the
in-process oracle with the same formula and once against the loopback
endpoint; both searches must produce bit-identical archives.
"""

import json
import threading

import numpy as np
import pytest

from depth_model_server.server import ServerConfig, build_server

from depthattack.attack import AttackConfig, run_attack
from depthattack.imaging import Image, RegionMask, save_dmap, save_image, save_mask
from depthattack.oracle import RemoteOracle

FRAME = 24
OBJECT = 8
CONSTANT = 2.0


@pytest.fixture
def scene(tmp_path):
    y0 = (FRAME - OBJECT) // 2
    pixels = np.full((FRAME, FRAME, 1), 0.4)
    flags = np.zeros((FRAME, FRAME), dtype=bool)
    flags[y0 : y0 + OBJECT, y0 : y0 + OBJECT] = True
    pixels[flags] = 0.8
    save_image(Image(pixels), tmp_path / "scene.png")
    save_mask(RegionMask(flags), tmp_path / "mask.png")
    # steer the constant-output model toward zero depth: the attack then
    # has to brighten the region, and the original volume is nonzero
    save_dmap(np.zeros((FRAME, FRAME)), tmp_path / "target.dmap")
    return {"dir": tmp_path, "rect": [y0, y0, OBJECT, OBJECT]}


@pytest.fixture
def loopback_server(scene):
    config = ServerConfig(
        model="mean-intensity",
        params={
            "width": FRAME,
            "height": FRAME,
            "channels": 1,
            "constant": CONSTANT,
            "region": scene["rect"],
        },
        port=0,
    )
    server = build_server(config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join()
    server.server_close()


def attack_config(scene, oracle_spec, out_name):
    obj = {
        "scene": "loopback",
        "image": "scene.png",
        "mask": "mask.png",
        "target": {"path": "target.dmap"},
        "oracle": oracle_spec,
        "bounds": {"n_patterns": 2, "pattern_size": 4, "max_delta": 0.1},
        "search": {
            "population_size": 12,
            "neighborhood_size": 4,
            "generations": 6,
            "seed": 321,
        },
        "out": out_name,
    }
    path = scene["dir"] / f"{out_name}.json"
    path.write_text(json.dumps(obj))
    return AttackConfig.from_file(path)


def test_engine_archive_is_bit_identical_over_the_wire(scene, loopback_server):
    local = run_attack(
        attack_config(scene, {"builtin": "mean-intensity", "params": {"constant": CONSTANT}}, "local")
    )
    remote = run_attack(attack_config(scene, {"url": loopback_server}, "remote"))

    assert np.array_equal(local.pareto, remote.pareto)
    local_out = scene["dir"] / "local"
    remote_out = scene["dir"] / "remote"
    assert (local_out / "pareto.csv").read_bytes() == (remote_out / "pareto.csv").read_bytes()
    assert (local_out / "trace.jsonl").read_bytes() == (remote_out / "trace.jsonl").read_bytes()
    assert (
        json.loads((local_out / "knee_solution.json").read_text())
        == json.loads((remote_out / "knee_solution.json").read_text())
    )


def test_remote_client_sees_served_descriptor(loopback_server):
    oracle = RemoteOracle(loopback_server)
    assert oracle.descriptor.name == "mean-intensity"
    assert oracle.descriptor.input_dims == (FRAME, FRAME, 1)
    assert oracle.descriptor.output_dims == (FRAME, FRAME)


def test_indoor_descriptor_reports_published_dims():
    """The indoor model's contract: 228x304 in, 160x124 out (width-major
    (304, 228, 3) and (160, 124) on the wire)."""
    config = ServerConfig(model="indoor-stub", port=0)
    server = build_server(config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        oracle_url = f"http://127.0.0.1:{server.server_address[1]}"
        oracle = RemoteOracle(oracle_url)
        assert oracle.descriptor.input_dims == (304, 228, 3)
        assert oracle.descriptor.output_dims == (160, 124)
        assert {oracle.descriptor.input_dims[0], oracle.descriptor.input_dims[1]} == {228, 304}
        print("[PASS] protocol conformance: indoor descriptor dims 304x228x3 -> 160x124")
    finally:
        server.shutdown()
        thread.join()
        server.server_close()
