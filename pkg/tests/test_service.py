"""HTTP service: session lifecycle, error mapping, caching, persistence."""

import http.server
import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from regionstyle import (
    Image,
    Mask,
    MaskPair,
    MaskPairSet,
    create_app,
    identity_model,
    read_png,
    rle_encode,
    stylize,
    toy_model,
    write_png,
)

from conftest import random_image


@pytest.fixture(scope="module")
def model():
    return toy_model(0)


@pytest.fixture
def client(model):
    return TestClient(create_app(model))


def make_session(client):
    resp = client.post("/sessions")
    assert resp.status_code == 200
    return resp.json()["id"]


def upload(client, sid, role, image):
    resp = client.put(
        f"/sessions/{sid}/images/{role}",
        content=write_png(image),
        headers={"Content-Type": "image/png"},
    )
    assert resp.status_code == 200, resp.text
    return resp.json()


def full_rle(h, w):
    return rle_encode(Mask.full(h, w))


class TestSessionLifecycle:
    def test_healthz(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_create_and_inspect(self, client):
        sid = make_session(client)
        resp = client.get(f"/sessions/{sid}")
        body = resp.json()
        assert body["id"] == sid
        assert body["content"] is None
        assert body["style"] is None
        assert body["pairs"] == 0
        assert body["has_result"] is False

    def test_unknown_session_404(self, client):
        resp = client.get("/sessions/nope")
        assert resp.status_code == 404
        assert resp.json()["error"] == "NotFound"

    def test_sessions_are_isolated(self, client):
        rng = np.random.RandomState(50)
        a, b = make_session(client), make_session(client)
        upload(client, a, "content", random_image(rng, 16, 16))
        assert client.get(f"/sessions/{a}").json()["content"] == {"h": 16, "w": 16}
        assert client.get(f"/sessions/{b}").json()["content"] is None


class TestImageUpload:
    def test_upload_reports_dims(self, client):
        rng = np.random.RandomState(51)
        sid = make_session(client)
        body = upload(client, sid, "content", random_image(rng, 20, 24))
        assert body["h"] == 20
        assert body["w"] == 24
        assert body["pairs_cleared"] is False

    def test_bad_png_is_400(self, client):
        sid = make_session(client)
        resp = client.put(
            f"/sessions/{sid}/images/content",
            content=b"this is not a png",
            headers={"Content-Type": "image/png"},
        )
        assert resp.status_code == 400
        assert resp.json()["error"] == "BadImage"

    def test_bad_role_is_400(self, client):
        rng = np.random.RandomState(52)
        sid = make_session(client)
        resp = client.put(
            f"/sessions/{sid}/images/texture",
            content=write_png(random_image(rng, 8, 8)),
        )
        assert resp.status_code == 400
        assert resp.json()["error"] == "BadRequest"

    def test_replacing_image_clears_pairs(self, client):
        rng = np.random.RandomState(53)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 16, 16))
        upload(client, sid, "style", random_image(rng, 16, 16))
        resp = client.post(
            f"/sessions/{sid}/pairs",
            json={"content": full_rle(16, 16), "style": full_rle(16, 16)},
        )
        assert resp.status_code == 200
        assert client.get(f"/sessions/{sid}").json()["pairs"] == 1

        body = upload(client, sid, "content", random_image(rng, 16, 16))
        assert body["pairs_cleared"] is True
        assert client.get(f"/sessions/{sid}").json()["pairs"] == 0

    def test_first_upload_does_not_flag_clearing(self, client):
        rng = np.random.RandomState(54)
        sid = make_session(client)
        body = upload(client, sid, "style", random_image(rng, 8, 8))
        assert body["pairs_cleared"] is False


class TestMaskProposal:
    def test_point_prompt_returns_rle(self, client):
        sid = make_session(client)
        data = np.full((16, 16, 3), 0.2, dtype=np.float32)
        data[:, 8:] = 0.8
        upload(client, sid, "content", Image(data))
        resp = client.post(
            f"/sessions/{sid}/masks/content",
            json={"points": [{"x": 2, "y": 2, "label": 1}], "box": None},
        )
        assert resp.status_code == 200
        rle = resp.json()
        assert rle["h"] == 16 and rle["w"] == 16
        assert sum(rle["runs"][1::2]) == 16 * 8  # exactly the left half

    def test_contour_prompt_served_locally(self, client):
        rng = np.random.RandomState(55)
        sid = make_session(client)
        upload(client, sid, "style", random_image(rng, 12, 12))
        resp = client.post(
            f"/sessions/{sid}/masks/style",
            json={"contour": [[2.0, 2.0], [9.0, 2.0], [9.0, 9.0], [2.0, 9.0]]},
        )
        assert resp.status_code == 200
        assert sum(resp.json()["runs"][1::2]) == 49

    def test_mask_before_image_is_404(self, client):
        sid = make_session(client)
        resp = client.post(
            f"/sessions/{sid}/masks/content",
            json={"points": [{"x": 0, "y": 0, "label": 1}]},
        )
        assert resp.status_code == 404

    def test_out_of_bounds_click_named_in_error(self, client):
        rng = np.random.RandomState(56)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        resp = client.post(
            f"/sessions/{sid}/masks/content",
            json={"points": [{"x": 99, "y": 0, "label": 1}]},
        )
        assert resp.status_code == 422
        assert resp.json()["error"] == "OutOfBounds"

    def test_malformed_prompts_400(self, client):
        rng = np.random.RandomState(57)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        resp = client.post(f"/sessions/{sid}/masks/content", json={"points": "zap"})
        assert resp.status_code == 400


class TestPairs:
    def test_commit_returns_running_index(self, client):
        rng = np.random.RandomState(58)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        upload(client, sid, "style", random_image(rng, 8, 8))
        body = {"content": full_rle(8, 8), "style": full_rle(8, 8)}
        assert client.post(f"/sessions/{sid}/pairs", json=body).json()["index"] == 0
        assert client.post(f"/sessions/{sid}/pairs", json=body).json()["index"] == 1

    def test_dim_mismatch_rejected(self, client):
        rng = np.random.RandomState(59)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        upload(client, sid, "style", random_image(rng, 8, 8))
        resp = client.post(
            f"/sessions/{sid}/pairs",
            json={"content": full_rle(4, 4), "style": full_rle(8, 8)},
        )
        assert resp.status_code == 422
        assert resp.json()["error"] == "DimMismatch"

    def test_pair_before_images_is_400(self, client):
        sid = make_session(client)
        resp = client.post(
            f"/sessions/{sid}/pairs",
            json={"content": full_rle(8, 8), "style": full_rle(8, 8)},
        )
        assert resp.status_code == 400

    def test_missing_mask_is_400(self, client):
        rng = np.random.RandomState(60)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        upload(client, sid, "style", random_image(rng, 8, 8))
        resp = client.post(f"/sessions/{sid}/pairs", json={"content": full_rle(8, 8)})
        assert resp.status_code == 400

    def test_delete_pair(self, client):
        rng = np.random.RandomState(61)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        upload(client, sid, "style", random_image(rng, 8, 8))
        body = {"content": full_rle(8, 8), "style": full_rle(8, 8)}
        client.post(f"/sessions/{sid}/pairs", json=body)
        resp = client.delete(f"/sessions/{sid}/pairs/0")
        assert resp.status_code == 200
        assert client.get(f"/sessions/{sid}").json()["pairs"] == 0

    def test_delete_bad_index_is_400(self, client):
        sid = make_session(client)
        resp = client.delete(f"/sessions/{sid}/pairs/5")
        assert resp.status_code == 400
        assert resp.json()["error"] == "BadIndex"


class TestStylize:
    def test_full_flow_matches_in_process_call(self, client, model):
        rng = np.random.RandomState(62)
        content = random_image(rng, 32, 32)
        style = random_image(rng, 32, 32)
        sid = make_session(client)
        upload(client, sid, "content", content)
        upload(client, sid, "style", style)
        resp = client.post(f"/sessions/{sid}/stylize")
        assert resp.status_code == 200
        body = resp.json()
        assert body["cached"] is False
        png = client.get(body["result"]).content

        # the wire result is byte-identical to calling the library directly
        # on the decoded uploads
        direct = stylize(
            read_png(write_png(content)),
            read_png(write_png(style)),
            MaskPairSet(()),
            model,
        )
        assert png == write_png(direct)

    def test_stylize_without_images_is_400(self, client):
        rng = np.random.RandomState(63)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        resp = client.post(f"/sessions/{sid}/stylize")
        assert resp.status_code == 400

    def test_result_before_stylize_is_404(self, client):
        sid = make_session(client)
        resp = client.get(f"/sessions/{sid}/result")
        assert resp.status_code == 404

    def test_repeat_is_served_from_cache(self, client):
        rng = np.random.RandomState(64)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 16, 16))
        upload(client, sid, "style", random_image(rng, 16, 16))
        assert client.post(f"/sessions/{sid}/stylize").json()["cached"] is False
        assert client.post(f"/sessions/{sid}/stylize").json()["cached"] is True

    def test_pair_edit_invalidates_cache(self, client):
        rng = np.random.RandomState(65)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 16, 16))
        upload(client, sid, "style", random_image(rng, 16, 16))
        client.post(f"/sessions/{sid}/stylize")
        client.post(
            f"/sessions/{sid}/pairs",
            json={"content": full_rle(16, 16), "style": full_rle(16, 16)},
        )
        assert client.post(f"/sessions/{sid}/stylize").json()["cached"] is False

    def test_pair_order_changes_state(self, client):
        rng = np.random.RandomState(66)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 16, 16))
        upload(client, sid, "style", random_image(rng, 16, 16))
        half = np.zeros((16, 16), dtype=bool)
        half[:, :8] = True
        a = rle_encode(Mask(half))
        b = rle_encode(Mask(~half))
        client.post(f"/sessions/{sid}/pairs", json={"content": a, "style": b})
        client.post(f"/sessions/{sid}/pairs", json={"content": a, "style": a})
        first = client.post(f"/sessions/{sid}/stylize").json()
        png_1 = client.get(f"/sessions/{sid}/result").content
        # removing and re-adding in swapped order is a different state
        client.delete(f"/sessions/{sid}/pairs/0")
        client.post(f"/sessions/{sid}/pairs", json={"content": a, "style": b})
        second = client.post(f"/sessions/{sid}/stylize").json()
        assert second["cached"] is False
        png_2 = client.get(f"/sessions/{sid}/result").content
        assert png_1 != png_2

    def test_mask_too_small_maps_to_422_with_pair(self, client):
        rng = np.random.RandomState(67)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 32, 32))
        upload(client, sid, "style", random_image(rng, 32, 32))
        thin = np.zeros((32, 32), dtype=bool)
        thin[0, 0] = True
        client.post(
            f"/sessions/{sid}/pairs",
            json={"content": full_rle(32, 32), "style": rle_encode(Mask(thin))},
        )
        resp = client.post(f"/sessions/{sid}/stylize")
        assert resp.status_code == 422
        body = resp.json()
        assert body["error"] == "MaskTooSmall"
        assert body["pair"] == 0


class TestPersistence:
    def test_sessions_survive_restart(self, tmp_path, model):
        rng = np.random.RandomState(68)
        content = random_image(rng, 16, 16)
        style = random_image(rng, 16, 16)

        first = TestClient(create_app(model, data_dir=tmp_path))
        sid = make_session(first)
        upload(first, sid, "content", content)
        upload(first, sid, "style", style)
        first.post(
            f"/sessions/{sid}/pairs",
            json={"content": full_rle(16, 16), "style": full_rle(16, 16)},
        )
        first.post(f"/sessions/{sid}/stylize")
        png = first.get(f"/sessions/{sid}/result").content

        second = TestClient(create_app(model, data_dir=tmp_path))
        summary = second.get(f"/sessions/{sid}").json()
        assert summary["content"] == {"h": 16, "w": 16}
        assert summary["pairs"] == 1
        assert summary["has_result"] is True
        assert second.get(f"/sessions/{sid}/result").content == png
        # and the rehydrated state still hits the cache
        assert second.post(f"/sessions/{sid}/stylize").json()["cached"] is True

    def test_fresh_dir_starts_empty(self, tmp_path, model):
        client = TestClient(create_app(model, data_dir=tmp_path / "empty"))
        assert client.get("/sessions/whatever").status_code == 404


class _SegmentHandler(http.server.BaseHTTPRequestHandler):
    behavior = "left_half"
    calls = []

    def do_POST(self):
        size = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(size))
        type(self).calls.append(payload)
        if self.behavior == "http_500":
            self.send_response(500)
            self.end_headers()
            return
        import base64
        import io

        from PIL import Image as PILImage

        png = base64.b64decode(payload["image"])
        w, h = PILImage.open(io.BytesIO(png)).size
        bits = np.zeros((h, w), dtype=bool)
        bits[:, : w // 2] = True
        body = json.dumps(rle_encode(Mask(bits))).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def segment_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _SegmentHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _SegmentHandler.behavior = "left_half"
    _SegmentHandler.calls = []
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


class TestRemoteRouting:
    def test_point_prompts_proxied(self, segment_server, model):
        client = TestClient(create_app(model, segment_url=segment_server))
        rng = np.random.RandomState(69)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        resp = client.post(
            f"/sessions/{sid}/masks/content",
            json={"points": [{"x": 1, "y": 1, "label": 1}]},
        )
        assert resp.status_code == 200, resp.text
        assert len(_SegmentHandler.calls) == 1
        assert sum(resp.json()["runs"][1::2]) == 8 * 4

    def test_contour_stays_local(self, segment_server, model):
        client = TestClient(create_app(model, segment_url=segment_server))
        rng = np.random.RandomState(70)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        resp = client.post(
            f"/sessions/{sid}/masks/content",
            json={"contour": [[1.0, 1.0], [5.0, 1.0], [5.0, 5.0], [1.0, 5.0]]},
        )
        assert resp.status_code == 200
        assert len(_SegmentHandler.calls) == 0

    def test_upstream_http_error_is_502(self, segment_server, model):
        _SegmentHandler.behavior = "http_500"
        client = TestClient(create_app(model, segment_url=segment_server))
        rng = np.random.RandomState(71)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        resp = client.post(
            f"/sessions/{sid}/masks/content",
            json={"points": [{"x": 1, "y": 1, "label": 1}]},
        )
        assert resp.status_code == 502
        assert resp.json()["error"] == "ProtocolError"

    def test_unreachable_upstream_is_502(self, model):
        client = TestClient(create_app(model, segment_url="http://127.0.0.1:9"))
        rng = np.random.RandomState(72)
        sid = make_session(client)
        upload(client, sid, "content", random_image(rng, 8, 8))
        resp = client.post(
            f"/sessions/{sid}/masks/content",
            json={"points": [{"x": 1, "y": 1, "label": 1}]},
        )
        assert resp.status_code == 502
        assert resp.json()["error"] == "TransportError"
