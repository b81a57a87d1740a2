import json
import os
import subprocess

import numpy as np
import pytest

CLI = os.environ.get("KINVERIFY_CLI")

pytestmark = pytest.mark.skipif(CLI is None, reason="KINVERIFY_CLI not set")


def run(*args, expect=0):
    proc = subprocess.run([CLI, *args], capture_output=True, text=True)
    assert proc.returncode == expect, proc.stderr + proc.stdout
    return proc


def write_pgm(path, pixels):
    with open(path, "wb") as f:
        f.write(b"P5\n64 64\n255\n")
        f.write(pixels.astype(np.uint8).tobytes())


def test_synth_eval_determinism(tmp_path):
    data = tmp_path / "data"
    run("synth", "--output-dir", str(data), "--mode", "sbm", "--d", "8",
        "--n-pos", "60", "--rank", "2", "--seed", "5")
    assert (data / "manifest.jsonl").exists()
    assert (data / "features.kinf").exists()
    assert (data / "truth.json").exists()

    common = [
        "eval", "--manifest", str(data / "manifest.jsonl"),
        "--cache", str(data / "features.kinf"),
        "--model", "sbm", "--lambda", "0.1",
        "--solver-iterations", "80", "--seed", "3",
    ]
    run(*common, "--output", str(tmp_path / "r1"))
    run(*common, "--output", str(tmp_path / "r2"))
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
    assert (tmp_path / "r1.txt").read_bytes() == (tmp_path / "r2.txt").read_bytes()

    report = json.loads((tmp_path / "r1.json").read_text())
    assert report["method"] == "sbm"
    assert {rel["label"] for rel in report["relations"]} == {"FM-S", "FM-D"}
    for rel in report["relations"]:
        assert len(rel["folds"]) == 5
        accs = [fold["accuracy"] for fold in rel["folds"]]
        assert min(accs) <= rel["mean_accuracy"] <= max(accs)

    run(*common, "--output", str(tmp_path / "r3"), "--roc", str(tmp_path / "roc.csv"))
    roc_fms = tmp_path / "roc-FM-S.csv"
    assert roc_fms.exists()
    assert roc_fms.read_text().splitlines()[0] == "fpr,tpr"


def test_train_and_predict_with_cache(tmp_path):
    data = tmp_path / "data"
    run("synth", "--output-dir", str(data), "--mode", "sbm", "--d", "8",
        "--n-pos", "40", "--rank", "2", "--seed", "11")
    model = tmp_path / "model.kinm"
    run("train", "--manifest", str(data / "manifest.jsonl"),
        "--cache", str(data / "features.kinf"),
        "--model", "rsbm", "--lambda", "0.1", "--iterations", "2",
        "--solver-iterations", "80", "--form", "FM-S",
        "--output", str(model))
    assert model.exists()
    sidecar = json.loads((model.parent / "model.kinm.json").read_text())
    assert sidecar["kind"] == "rsbm"

    manifest = [json.loads(line) for line in
                (data / "manifest.jsonl").read_text().splitlines()]
    fam = next(rec for rec in manifest if rec["relation"] == "FM-S")
    out = run("predict", "--model", str(model),
              "--cache", str(data / "features.kinf"),
              "--father", fam["father"], "--mother", fam["mother"],
              "--child", fam["child"]).stdout
    result = json.loads(out)
    assert 0.0 <= result["probability"] <= 1.0
    assert isinstance(result["decision"], bool)

    # pair:mother ignores the father input entirely
    other = next(rec for rec in manifest
                 if rec["relation"] == "FM-S" and rec != fam)
    out1 = run("predict", "--model", str(model), "--mode", "pair:mother",
               "--cache", str(data / "features.kinf"),
               "--father", fam["father"], "--mother", fam["mother"],
               "--child", fam["child"]).stdout
    out2 = run("predict", "--model", str(model), "--mode", "pair:mother",
               "--cache", str(data / "features.kinf"),
               "--father", other["father"], "--mother", fam["mother"],
               "--child", fam["child"]).stdout
    assert json.loads(out1)["probability"] == json.loads(out2)["probability"]


def test_extract_and_image_predict(tmp_path):
    rng = np.random.default_rng(7)
    images = tmp_path / "images"
    images.mkdir()
    manifest_path = tmp_path / "manifest.jsonl"
    with open(manifest_path, "w") as manifest:
        for i in range(8):
            rec = {"family_id": f"fam{i}", "relation": "FM-S"}
            for role in ("father", "mother", "child"):
                path = images / f"{i}_{role}.pgm"
                write_pgm(path, rng.integers(0, 255, size=(64, 64)))
                rec[role] = str(path)
            manifest.write(json.dumps(rec) + "\n")

    cache = tmp_path / "features.kinf"
    out = run("extract", "--manifest", str(manifest_path), "--cache", str(cache))
    assert "24 new feature records" in out.stdout
    first_bytes = cache.read_bytes()

    # warm rerun recomputes nothing and leaves the cache bytes unchanged
    out = run("extract", "--manifest", str(manifest_path), "--cache", str(cache))
    assert "0 new feature records" in out.stdout
    assert cache.read_bytes() == first_bytes

    model = tmp_path / "model.kinm"
    run("train", "--manifest", str(manifest_path), "--cache", str(cache),
        "--model", "concat-baseline", "--solver-iterations", "60",
        "--form", "FM-S", "--output", str(model))
    rec = json.loads(manifest_path.read_text().splitlines()[0])
    out = run("predict", "--model", str(model), "--father", rec["father"],
              "--mother", rec["mother"], "--child", rec["child"]).stdout
    assert 0.0 <= json.loads(out)["probability"] <= 1.0


def test_error_paths(tmp_path):
    missing = tmp_path / "nope.jsonl"
    proc = subprocess.run(
        [CLI, "extract", "--manifest", str(missing), "--cache", str(tmp_path / "c")],
        capture_output=True, text=True)
    assert proc.returncode != 0
    assert "error" in proc.stderr.lower()

    # alpha outside (0, 1) is a usage error
    proc = subprocess.run(
        [CLI, "train", "--manifest", str(missing), "--cache", str(tmp_path / "c"),
         "--model", "rsbm", "--alpha", "1.5", "--output", str(tmp_path / "m")],
        capture_output=True, text=True)
    assert proc.returncode != 0
    assert "alpha" in (proc.stderr + proc.stdout).lower()

    # missing image path is reported by name
    manifest_path = tmp_path / "manifest.jsonl"
    manifest_path.write_text(json.dumps({
        "family_id": "f", "relation": "FM-S",
        "father": str(tmp_path / "gone.pgm"),
        "mother": str(tmp_path / "gone2.pgm"),
        "child": str(tmp_path / "gone3.pgm")}) + "\n")
    proc = subprocess.run(
        [CLI, "extract", "--manifest", str(manifest_path),
         "--cache", str(tmp_path / "c")],
        capture_output=True, text=True)
    assert proc.returncode != 0
    assert "gone.pgm" in proc.stderr
