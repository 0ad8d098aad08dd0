import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from depth_model_server.models import load_model
from depth_model_server.server import ServerConfig, build_server


@pytest.fixture
def serve():
    handles = []

    def start(**config_kwargs):
        config = ServerConfig(port=0, **config_kwargs)
        server = build_server(config)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        handles.append((server, thread))
        return f"http://127.0.0.1:{server.server_address[1]}"

    yield start
    for server, thread in handles:
        server.shutdown()
        thread.join()
        server.server_close()


def get_json(url):
    with urllib.request.urlopen(url, timeout=10) as resp:
        return json.loads(resp.read())


def post_json(url, obj):
    req = urllib.request.Request(
        url, data=json.dumps(obj).encode(), headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.loads(resp.read())


def image_payload(value, w, h, c):
    return {"width": w, "height": h, "channels": c, "pixels": [value] * (w * h * c)}


MEAN_PARAMS = {"width": 8, "height": 8, "channels": 1, "constant": 2.0, "region": [2, 2, 4, 4]}


class TestDescriptor:
    def test_indoor_model_reports_published_dims(self, serve):
        base = serve(model="indoor-stub")
        desc = get_json(base + "/descriptor")
        assert desc["name"] == "indoor"
        assert desc["input_dims"] == [304, 228, 3]
        assert desc["output_dims"] == [160, 124]

    def test_outdoor_model_reports_published_dims(self, serve):
        base = serve(model="outdoor-stub", output_mode="disparity")
        desc = get_json(base + "/descriptor")
        assert desc["input_dims"] == [640, 192, 3]
        assert desc["output_dims"] == [640, 192]
        assert desc["output_mode"] == "disparity"


class TestEstimate:
    def test_mean_intensity_formula(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        out = post_json(base + "/estimate", image_payload(0.25, 8, 8, 1))
        assert out["width"] == 8 and out["height"] == 8
        assert out["depth"] == [1.75] * 64

    def test_identical_requests_identical_depths(self, serve):
        base = serve(model="indoor-stub")
        rng = np.random.default_rng(0)
        payload = {
            "width": 304,
            "height": 228,
            "channels": 3,
            "pixels": rng.random(304 * 228 * 3).tolist(),
        }
        a = post_json(base + "/estimate", payload)
        b = post_json(base + "/estimate", payload)
        assert a["depth"] == b["depth"]
        assert len(a["depth"]) == 160 * 124

    def test_wrong_pixel_length_is_400(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        bad = image_payload(0.5, 8, 8, 1)
        bad["pixels"] = bad["pixels"][:-3]
        with pytest.raises(urllib.error.HTTPError) as info:
            post_json(base + "/estimate", bad)
        assert info.value.code == 400
        assert "error" in json.loads(info.value.read())

    def test_wrong_dims_is_400(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        with pytest.raises(urllib.error.HTTPError) as info:
            post_json(base + "/estimate", image_payload(0.5, 9, 8, 1))
        assert info.value.code == 400

    def test_out_of_range_pixels_is_400(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        payload = image_payload(0.5, 8, 8, 1)
        payload["pixels"][0] = 1.5
        with pytest.raises(urllib.error.HTTPError) as info:
            post_json(base + "/estimate", payload)
        assert info.value.code == 400

    def test_malformed_json_is_400(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        req = urllib.request.Request(
            base + "/estimate", data=b"{not json", headers={"Content-Type": "application/json"}
        )
        with pytest.raises(urllib.error.HTTPError) as info:
            urllib.request.urlopen(req, timeout=10)
        assert info.value.code == 400

    def test_unknown_endpoint_is_404(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        with pytest.raises(urllib.error.HTTPError) as info:
            post_json(base + "/predict", {})
        assert info.value.code == 404

    def test_inference_exception_is_500(self, serve):
        base = serve(
            model="tests.test_server:broken_model_factory",
            params={"width": 4, "height": 4, "channels": 1},
        )
        with pytest.raises(urllib.error.HTTPError) as info:
            post_json(base + "/estimate", image_payload(0.5, 4, 4, 1))
        assert info.value.code == 500
        assert "error" in json.loads(info.value.read())


class TestBatch:
    def test_batch_matches_sequential(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        rng = np.random.default_rng(1)
        payloads = [
            {
                "width": 8,
                "height": 8,
                "channels": 1,
                "pixels": rng.random(64).tolist(),
            }
            for _ in range(4)
        ]
        sequential = [post_json(base + "/estimate", p)["depth"] for p in payloads]
        batched = post_json(base + "/estimate_batch", {"images": payloads})["depths"]
        assert [d["depth"] for d in batched] == sequential

    def test_batch_preserves_order(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        payloads = [image_payload(v, 8, 8, 1) for v in (0.0, 0.5, 1.0)]
        out = post_json(base + "/estimate_batch", {"images": payloads})["depths"]
        values = [d["depth"][0] for d in out]
        assert values == [2.0, 1.5, 1.0]

    def test_batch_without_list_is_400(self, serve):
        base = serve(model="mean-intensity", params=MEAN_PARAMS)
        with pytest.raises(urllib.error.HTTPError) as info:
            post_json(base + "/estimate_batch", {"images": "nope"})
        assert info.value.code == 400


class TestModelLoading:
    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            load_model("imagined", {})

    def test_plugin_path_loads(self):
        model = load_model("tests.test_server:broken_model_factory", {"width": 4, "height": 4, "channels": 1})
        assert model.info.input_dims == (4, 4, 1)

    def test_response_length_always_matches_descriptor(self, serve):
        base = serve(model="indoor-stub")
        desc = get_json(base + "/descriptor")
        payload = image_payload(0.5, *desc["input_dims"])
        out = post_json(base + "/estimate", payload)
        assert len(out["depth"]) == desc["output_dims"][0] * desc["output_dims"][1]


def broken_model_factory(params):
    from depth_model_server.models import ModelInfo, ScriptedModel

    w, h, c = int(params["width"]), int(params["height"]), int(params["channels"])

    def predict(pixels):
        raise RuntimeError("checkpoint went missing")

    return ScriptedModel(ModelInfo("broken", (w, h, c), (w, h)), predict)
