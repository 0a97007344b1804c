import json
import math

import pytest

import damagepipe as dp


def test_geometry():
    ring = dp.parse_wkt_polygon("POLYGON ((0 0, 10 0, 10 10, 0 10, 0 0))")
    assert ring == [(0, 0), (10, 0), (10, 10), (0, 10)]
    assert dp.polygon_to_bbox(ring) == (0, 0, 10, 10)
    assert dp.pad_bbox((100, 100, 200, 200), 0.30, 4096, 4096) == pytest.approx((85, 85, 215, 215))
    assert dp.scale_bbox((10, 20, 30, 40), 4) == (40, 80, 120, 160)
    assert dp.iou((0, 0, 10, 10), (5, 0, 15, 10)) == pytest.approx(50 / 150)
    assert dp.match_detections([((0, 0, 10, 10), 0.9)], [(0, 0, 10, 10)]) == [(0, 0)]
    with pytest.raises(dp.GeometryError):
        dp.pad_bbox((0, 0, 1, 1), -0.1, 10, 10)


def test_clip():
    assert [len(c) for c in dp.chunk_tokens(list(range(154)))] == [77, 77]
    assert dp.clip_score([1.0, 0.0], [1.0, 0.0]) == 250.0
    assert dp.clip_score([1.0, 0.0], [0.25, math.sqrt(1 - 0.0625)]) == pytest.approx(62.5)
    assert dp.clip_score([1.0, 0.0], [-1.0, 0.0]) == 0.0


def test_metrics_and_jury():
    assert dp.f1_from(0.8198, 0.9342) == pytest.approx(0.8733, abs=1e-4)
    r = dp.classification_metrics(["minor", "minor"], ["minor", "minor"])
    assert r["accuracy"] == 1.0 and r["precision"] is None and r["f1"] is None
    terms = dp.word_frequencies({3: ["roof roof damage"]}, stopwords=[], top_k=1)
    assert terms[3] == [("roof", 2)]
    assert dp.band_of(49.5) == "critical-failure"
    assert dp.aggregate_rankings([("a", 80), ("a", 90), ("b", 70)]) == [("a", 85.0), ("b", 70.0)]


def test_cli_end_to_end(tmp_path):
    dp.write_synthetic_dataset(tmp_path / "data", pairs=2, buildings=2, size=128)
    config = {
        "dataset_root": "data",
        "run_dir": "out",
        "endpoints": {"default": {"base_url": "mock://py-smoke", "model_name": "m", "backoff_s": 0}},
        "candidate_models": ["qwen3-vl:8b"],
        "jury_models": ["Gemma3:12b"],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    snap = json.loads(dp.load_config_snapshot(str(path)))
    assert snap["crop"]["pad_fraction"] == 0.3
    for stage in ["assess", "eval-clip", "eval-jury", "metrics"]:
        code, out, err = dp.run_command([stage, "--config", str(path)])
        assert code == 0, err
    code, report, _ = dp.run_command(["report", "--config", str(path)])
    assert code == 0 and "F1-Score" in report
    code, _, err = dp.run_command(["assess", "--config", str(path), "--set", "crop.paddin=1"])
    assert code == 2 and "crop.paddin" in err
    with pytest.raises(dp.ConfigError):
        dp.load_config_snapshot(str(path), ["crop.pad_fraction=-1"])


def test_mock_server_round_trip():
    import urllib.request

    server = dp.MockServer()
    port = server.start()
    try:
        req = urllib.request.Request(
            f"http://127.0.0.1:{port}/api/tokenize",
            data=json.dumps({"model": "clip", "text": "a photo of a cat"}).encode(),
            headers={"Content-Type": "application/json"},
        )
        with urllib.request.urlopen(req) as resp:
            assert len(json.load(resp)["tokens"]) == 5
        assert server.calls == 1
    finally:
        server.stop()
