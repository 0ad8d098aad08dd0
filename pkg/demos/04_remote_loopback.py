"""Attacking a model behind the HTTP protocol.
====================================================

The engine never needs the model in-process: any server implementing
GET /descriptor, POST /estimate and (optionally) POST /estimate_batch is
attackable.  This script starts the reference model server on a loopback
port with a scripted model, attacks it remotely, and shows the archive is
bit-identical to the in-process run with the same seed.

Requires the sibling package:  pip install -e ./model_server
"""

import json
import threading
from pathlib import Path

import numpy as np

from depthattack.attack import AttackConfig, run_attack
from depthattack.imaging import Image, RegionMask, save_dmap, save_image, save_mask
from depthattack.oracle import RemoteOracle

try:
    from depth_model_server.server import ServerConfig, build_server
except ImportError:
    raise SystemExit("install the model server first: pip install -e ./model_server")

root = Path(__file__).parent / "out" / "04_loopback"
root.mkdir(parents=True, exist_ok=True)

pixels = np.full((24, 24, 1), 0.4)
flags = np.zeros((24, 24), dtype=bool)
flags[8:16, 8:16] = True
pixels[flags] = 0.8
save_image(Image(pixels), root / "scene.png")
save_mask(RegionMask(flags), root / "mask.png")
save_dmap(np.zeros((24, 24)), root / "target.dmap")

server = build_server(
    ServerConfig(
        model="mean-intensity",
        params={"width": 24, "height": 24, "channels": 1, "constant": 2.0, "region": [8, 8, 8, 8]},
        port=0,
    )
)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}"

probe = RemoteOracle(url)
d = probe.descriptor
print(f"descriptor: {d.name} input {d.input_dims} output {d.output_dims}")


def config_for(oracle_spec, out_name):
    obj = {
        "scene": "loopback",
        "image": "scene.png",
        "mask": "mask.png",
        "target": {"path": "target.dmap"},
        "oracle": oracle_spec,
        "bounds": {"n_patterns": 2, "pattern_size": 4, "max_delta": 0.1},
        "search": {"population_size": 12, "neighborhood_size": 4, "generations": 5, "seed": 3},
        "out": out_name,
    }
    path = root / f"{out_name}.json"
    path.write_text(json.dumps(obj))
    return AttackConfig.from_file(path)


remote = run_attack(config_for({"url": url}, "remote"))
local = run_attack(
    config_for({"builtin": "mean-intensity", "params": {"constant": 2.0}}, "local")
)
server.shutdown()

identical = np.array_equal(remote.pareto, local.pareto)
print(f"remote archive: {len(remote.pareto)} points, {remote.queries} queries over HTTP")
print(f"bit-identical to the in-process run: {identical}")
