"""HTTP session service: revisions, replay, undo, content negotiation."""

import base64
import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from clickseg import network, service
from clickseg.data import SyntheticShapeParams, generate_synthetic
from clickseg.guidance import Click, ClickSet, ClickSizePolicy, Polarity, compute_click_size
from clickseg.harness import infer_mask
from clickseg.network import NetworkSpec
from clickseg.service import Settings, create_app, mask_digest


def png_bytes(arr_u8: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr_u8, mode="L").save(buf, "PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data)))


@pytest.fixture(scope="module")
def checkpoint_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("ckpts")
    spec = NetworkSpec(in_channels=3, base_channels=4)
    model = network.build_network(spec, seed=0)
    network.save_checkpoint(root / "demo.npz", model, {"note": "test model"})
    return root


@pytest.fixture()
def client(checkpoint_dir):
    app = create_app(Settings(checkpoint_dir=str(checkpoint_dir)))
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def sample():
    s = generate_synthetic(SyntheticShapeParams(seed=7), 1)[0]
    img_u8 = np.round(s.image * 255).astype(np.uint8)
    gt_u8 = s.gt_mask * 255
    return img_u8, gt_u8


def create_session(client, img_u8, gt_u8=None, policy=None, checkpoint=None):
    files = {"image": ("img.png", png_bytes(img_u8), "image/png")}
    if gt_u8 is not None:
        files["gt"] = ("gt.png", png_bytes(gt_u8), "image/png")
    data = {}
    if policy is not None:
        data["policy"] = policy
    if checkpoint is not None:
        data["checkpoint"] = checkpoint
    return client.post("/sessions", files=files, data=data)


class TestSessionLifecycle:
    def test_create_session(self, client, sample):
        img, _ = sample
        r = create_session(client, img)
        assert r.status_code == 200
        body = r.json()
        assert body["revision"] == 0
        assert body["n_clicks"] == 0
        assert body["clicks"] == []
        assert (body["height"], body["width"]) == img.shape
        assert body["checkpoint"] == "demo"
        assert "dsc" not in body
        mask = decode_png(base64.b64decode(body["mask_png_b64"]))
        assert mask.shape == img.shape
        assert set(np.unique(mask)) <= {0, 255}
        assert mask_digest(mask > 0) == body["mask_digest"]

    def test_gt_enables_dsc(self, client, sample):
        img, gt = sample
        r = create_session(client, img, gt_u8=gt)
        assert r.status_code == 200
        body = r.json()
        assert 0.0 <= body["dsc"] <= 100.0

    def test_click_appends_revision(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        r = client.post(f"/sessions/{sid}/clicks",
                        json={"row": 30, "col": 30, "polarity": "foreground"})
        assert r.status_code == 200
        body = r.json()
        assert body["revision"] == 1
        assert body["n_clicks"] == 1
        assert body["applied_click_size"] == 5  # fixed default
        click = body["clicks"][0]
        assert click == {"row": 30, "col": 30, "polarity": "foreground",
                         "size_px": 5}

    def test_clicks_accumulate(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        for i, (row, pol) in enumerate(
                [(20, "foreground"), (40, "background"), (25, "foreground")]):
            body = client.post(f"/sessions/{sid}/clicks",
                               json={"row": row, "col": 32,
                                     "polarity": pol}).json()
            assert body["revision"] == i + 1
            assert body["n_clicks"] == i + 1
        # earlier clicks kept verbatim (append-only)
        assert [c["row"] for c in body["clicks"]] == [20, 40, 25]

    def test_session_isolation(self, client, sample):
        img, _ = sample
        a = create_session(client, img).json()["session_id"]
        b = create_session(client, img).json()["session_id"]
        client.post(f"/sessions/{a}/clicks",
                    json={"row": 10, "col": 10, "polarity": "foreground"})
        rb = client.get(f"/sessions/{b}/mask").json()
        assert rb["revision"] == 0
        assert rb["n_clicks"] == 0

    def test_non_stride_sized_image(self, client):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 255, size=(100, 60), dtype=np.uint8)
        r = create_session(client, img)
        assert r.status_code == 200
        body = r.json()
        assert (body["height"], body["width"]) == (100, 60)
        mask = decode_png(base64.b64decode(body["mask_png_b64"]))
        assert mask.shape == (100, 60)


class TestReplayInvariant:
    def test_stored_masks_equal_offline_recompute(self, client, sample,
                                                  checkpoint_dir):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        clicks = [(22, 30, "foreground"), (50, 8, "background"),
                  (28, 36, "foreground")]
        for row, col, pol in clicks:
            client.post(f"/sessions/{sid}/clicks",
                        json={"row": row, "col": col, "polarity": pol})

        model, _ = network.load_checkpoint(checkpoint_dir / "demo.npz")
        image = img.astype(np.float32) / 255.0
        for rev in range(4):
            body = client.get(f"/sessions/{sid}/mask",
                              params={"revision": rev}).json()
            cs = ClickSet([Click(c["row"], c["col"], Polarity(c["polarity"]),
                                 c["size_px"]) for c in body["clicks"]],
                          interaction_count=len(body["clicks"]))
            _, mask = infer_mask(model, model.spec, image, cs)
            assert mask_digest(mask) == body["mask_digest"], f"revision {rev}"

    def test_history_immutable_after_new_clicks(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        d0 = client.get(f"/sessions/{sid}/mask").json()["mask_digest"]
        client.post(f"/sessions/{sid}/clicks",
                    json={"row": 30, "col": 30, "polarity": "foreground"})
        again = client.get(f"/sessions/{sid}/mask",
                           params={"revision": 0}).json()
        assert again["mask_digest"] == d0
        assert again["n_clicks"] == 0


class TestUndo:
    def test_undo_recomputes_previous_state(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        digests = [client.get(f"/sessions/{sid}/mask").json()["mask_digest"]]
        for row in (20, 40):
            body = client.post(f"/sessions/{sid}/clicks",
                               json={"row": row, "col": 32,
                                     "polarity": "foreground"}).json()
            digests.append(body["mask_digest"])

        undo1 = client.post(f"/sessions/{sid}/undo").json()
        assert undo1["revision"] == 3  # undo appends, never rewrites
        assert undo1["n_clicks"] == 1
        assert undo1["mask_digest"] == digests[1]

        undo2 = client.post(f"/sessions/{sid}/undo").json()
        assert undo2["revision"] == 4
        assert undo2["n_clicks"] == 0
        assert undo2["mask_digest"] == digests[0]

    def test_undo_on_empty_session(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        r = client.post(f"/sessions/{sid}/undo")
        assert r.status_code == 422
        assert r.json()["code"] == "InvalidParams"


class TestDynamicPolicy:
    def test_dynamic_click_size_follows_mask(self, client, sample):
        img, _ = sample
        policy = ('{"mode": "dynamic", "alpha": 0.002, "fixed_size_px": 5, '
                  '"min_size_px": 1, "max_size_px": 128}')
        created = create_session(client, img, policy=policy).json()
        assert created["policy"]["mode"] == "dynamic"
        sid = created["session_id"]
        mask0 = decode_png(base64.b64decode(created["mask_png_b64"])) > 0
        count = int(mask0.sum())
        pol = ClickSizePolicy.from_dict(created["policy"])
        want = (compute_click_size(0.002, count, pol) if count else 5)
        body = client.post(f"/sessions/{sid}/clicks",
                           json={"row": 30, "col": 30,
                                 "polarity": "foreground"}).json()
        assert body["applied_click_size"] == want
        assert body["clicks"][0]["size_px"] == want

    def test_bad_policy_json(self, client, sample):
        img, _ = sample
        r = create_session(client, img, policy="{not json")
        assert r.status_code == 422
        assert r.json()["code"] == "InvalidParams"


class TestContentNegotiation:
    def test_png_response(self, client, sample):
        img, _ = sample
        created = create_session(client, img).json()
        sid = created["session_id"]
        r = client.get(f"/sessions/{sid}/mask",
                       headers={"Accept": "image/png"})
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:4] == b"\x89PNG"
        mask = decode_png(r.content)
        assert mask_digest(mask > 0) == created["mask_digest"]

    def test_json_default(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        r = client.get(f"/sessions/{sid}/mask")
        assert r.headers["content-type"].startswith("application/json")


class TestErrors:
    def test_unknown_session(self, client):
        r = client.get("/sessions/deadbeef/mask")
        assert r.status_code == 404
        assert r.json()["code"] == "UnknownSession"

    def test_unknown_revision(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        r = client.get(f"/sessions/{sid}/mask", params={"revision": 5})
        assert r.status_code == 404
        assert r.json()["code"] == "UnknownRevision"

    def test_click_out_of_bounds(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        r = client.post(f"/sessions/{sid}/clicks",
                        json={"row": 64, "col": 0, "polarity": "foreground"})
        assert r.status_code == 422
        assert r.json()["code"] == "OutOfBounds"

    def test_click_missing_field(self, client, sample):
        img, _ = sample
        sid = create_session(client, img).json()["session_id"]
        r = client.post(f"/sessions/{sid}/clicks", json={"row": 3})
        assert r.status_code == 422
        assert r.json()["code"] == "InvalidParams"

    def test_bad_image(self, client):
        files = {"image": ("img.png", b"this is not a png", "image/png")}
        r = client.post("/sessions", files=files)
        assert r.status_code == 400
        assert r.json()["code"] == "BadImage"

    def test_tiny_image_rejected(self, client):
        img = np.zeros((8, 8), dtype=np.uint8)
        r = create_session(client, img)
        assert r.status_code == 400

    def test_gt_shape_mismatch(self, client, sample):
        img, _ = sample
        bad_gt = np.zeros((32, 32), dtype=np.uint8)
        r = create_session(client, img, gt_u8=bad_gt)
        assert r.status_code == 400

    def test_unknown_checkpoint(self, client, sample):
        img, _ = sample
        r = create_session(client, img, checkpoint="nope")
        assert r.status_code == 404
        assert r.json()["code"] == "UnknownCheckpoint"


class TestCheckpoints:
    def test_listing(self, client, checkpoint_dir):
        r = client.get("/checkpoints")
        assert r.status_code == 200
        entries = r.json()["checkpoints"]
        assert [e["id"] for e in entries] == ["demo"]
        assert entries[0]["digest"] == network.checkpoint_digest(
            checkpoint_dir / "demo.npz")
        assert entries[0]["meta"]["note"] == "test model"

    def test_no_checkpoints_dir(self, tmp_path, sample):
        img, _ = sample
        app = create_app(Settings(checkpoint_dir=str(tmp_path / "empty")))
        with TestClient(app) as c:
            assert c.get("/checkpoints").json()["checkpoints"] == []
            r = create_session(c, img)
            assert r.status_code == 404


class TestExpiry:
    def test_session_ttl(self, checkpoint_dir, sample):
        img, _ = sample
        app = create_app(Settings(checkpoint_dir=str(checkpoint_dir),
                                  session_ttl_s=0.0))
        with TestClient(app) as c:
            sid = create_session(c, img).json()["session_id"]
            time.sleep(0.02)
            r = c.get(f"/sessions/{sid}/mask")
            assert r.status_code == 404


class TestSettings:
    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv("CLICKSEG_CHECKPOINT_DIR", "/tmp/ck")
        monkeypatch.setenv("CLICKSEG_SESSION_TTL", "120.5")
        monkeypatch.setenv("CLICKSEG_PORT", "9001")
        s = Settings.from_sources({"checkpoint_dir": "ignored", "port": 1})
        assert s.checkpoint_dir == "/tmp/ck"
        assert s.session_ttl_s == 120.5
        assert s.port == 9001

    def test_file_values_without_env(self, monkeypatch):
        for var in ("CLICKSEG_CHECKPOINT_DIR", "CLICKSEG_SESSION_TTL",
                    "CLICKSEG_HOST", "CLICKSEG_PORT", "CLICKSEG_STATIC_DIR"):
            monkeypatch.delenv(var, raising=False)
        s = Settings.from_sources({"checkpoint_dir": "/data/ck", "port": 7777,
                                   "host": None})
        assert s.checkpoint_dir == "/data/ck"
        assert s.port == 7777
        assert s.host == "127.0.0.1"  # None in file -> default


class TestStaticBundle:
    def test_built_ui_served_under_ui_prefix(self, checkpoint_dir):
        from pathlib import Path

        dist = Path(__file__).resolve().parents[1] / "frontend" / "dist"
        if not (dist / "index.html").is_file():
            pytest.skip("frontend bundle not built")
        app = create_app(Settings(checkpoint_dir=str(checkpoint_dir),
                                  static_dir=str(dist)))
        with TestClient(app) as c:
            resp = c.get("/ui/")
            assert resp.status_code == 200
            assert b"clickseg" in resp.content
