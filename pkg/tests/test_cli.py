import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fershape.cli import main
from fershape.pipeline import read_feature_csv, read_manifest
from fershape.synth import synth_landmarks


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "syn"
    assert main(["synth", "--out", str(out), "--per-class", "4", "--noise", "0.2", "--seed", "9"]) == 0
    return out


def _ten_sample_manifest(synth_dir):
    lines = (synth_dir / "manifest.csv").read_text().splitlines()
    path = synth_dir / "ten.csv"
    path.write_text("\n".join(lines[:11]) + "\n")
    return path


def test_extract_ten_rows(synth_dir, tmp_path):
    manifest = _ten_sample_manifest(synth_dir)
    assert main(["extract", "--manifest", str(manifest), "--out", str(tmp_path / "f.csv")]) == 0
    fm = read_feature_csv(tmp_path / "f.csv")
    assert fm.X.shape == (10, 390)


def test_extract_missing_manifest(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["extract", "--manifest", str(missing), "--out", str(tmp_path / "f.csv")]) == 2
    assert "nope.csv" in capsys.readouterr().err


def test_extract_strict_bad_file(synth_dir, tmp_path):
    (synth_dir / "landmarks" / "HA_001.txt").write_text("1 2\n3 4\n")
    args = ["extract", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(tmp_path / "f.csv")]
    assert main(args + ["--strict"]) == 3


def test_extract_lenient_lists_failures(synth_dir, tmp_path, capsys):
    (synth_dir / "landmarks" / "HA_001.txt").write_text("1 2\n3 4\n")
    args = ["extract", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(tmp_path / "f.csv")]
    assert main(args) == 3
    assert "HA_001" in capsys.readouterr().err
    assert len(read_feature_csv(tmp_path / "f.csv")) == 27


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["extract", "--manifest", "m.csv", "--out", "f.csv", "--unknown-flag"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out", str(tmp_path), "--per-class", "0"])
    assert exc.value.code == 1
    assert main(["synth", "--out", str(tmp_path), "--noise", "-1"]) == 1


def test_train_predict_round_trip(synth_dir, tmp_path, capsys):
    manifest = str(synth_dir / "manifest.csv")
    feats, model, preds = tmp_path / "f.csv", tmp_path / "m.json", tmp_path / "p.csv"
    assert main(["extract", "--manifest", manifest, "--out", str(feats)]) == 0
    assert main(["train", "--features", str(feats), "--out", str(model)]) == 0
    out = capsys.readouterr().out
    assert "training accuracy 100.0%" in out
    assert main(["predict", "--model", str(model), "--features", str(feats), "--out", str(preds)]) == 0
    with preds.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sample_id", "predicted"] + [f"decision_{c}" for c in
                                                      ("AN", "NE", "DI", "FE", "HA", "SA", "SU")]
    truth = {e.sample_id: e.label for e in read_manifest(manifest)}
    assert all(truth[r[0]] == r[1] for r in rows[1:])


def test_train_on_manifest_then_predict_manifest(synth_dir, tmp_path):
    manifest = str(synth_dir / "manifest.csv")
    model, preds = tmp_path / "m.json", tmp_path / "p.csv"
    assert main(["train", "--manifest", manifest, "--out", str(model), "--harmonics", "6"]) == 0
    # the extraction settings travel with the model
    assert main(["predict", "--model", str(model), "--manifest", manifest, "--out", str(preds)]) == 0
    assert json.loads(model.read_text())["extraction"]["config"]["n_harmonics"] == 6


def test_predict_layout_mismatch(synth_dir, tmp_path):
    manifest = str(synth_dir / "manifest.csv")
    assert main(["extract", "--manifest", manifest, "--out", str(tmp_path / "a.csv")]) == 0
    assert main(["extract", "--manifest", manifest, "--out", str(tmp_path / "b.csv"), "--harmonics", "4"]) == 0
    assert main(["train", "--features", str(tmp_path / "a.csv"), "--out", str(tmp_path / "m.json")]) == 0
    code = main(["predict", "--model", str(tmp_path / "m.json"), "--features", str(tmp_path / "b.csv"),
                 "--out", str(tmp_path / "p.csv")])
    assert code == 4


def test_evaluate_twice_identical(synth_dir, tmp_path):
    base = ["evaluate", "--manifest", str(synth_dir / "manifest.csv"), "--seed", "3",
            "--C-grid", "1,8", "--gamma-grid", "0.002,0.008"]
    assert main(base + ["--out", str(tmp_path / "r1")]) == 0
    assert main(base + ["--out", str(tmp_path / "r2")]) == 0
    for name in ("report.txt", "confusion.csv", "grid.csv", "metrics.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    assert json.loads((tmp_path / "r1" / "metrics.json").read_text())["seed"] == 3


def test_dump_masks_and_region_map(synth_dir, tmp_path):
    from fershape.regions import default_region_map

    default_region_map().save(tmp_path / "map.json")
    masks = tmp_path / "masks"
    masks.mkdir()
    args = ["extract", "--manifest", str(_ten_sample_manifest(synth_dir)), "--out", str(tmp_path / "f.csv"),
            "--region-map", str(tmp_path / "map.json"), "--dump-masks", str(masks)]
    assert main(args) == 0
    assert len(list(masks.glob("*.pgm"))) == 100


def test_synth_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--out", str(out), "--per-class", "30", "--noise", "0", "--seed", "1"]) == 0
    files = sorted(p.name for p in (a / "landmarks").iterdir())
    assert len(files) == 210
    for name in files:
        assert (a / "landmarks" / name).read_bytes() == (b / "landmarks" / name).read_bytes()
    assert (a / "manifest.csv").read_bytes() == (b / "manifest.csv").read_bytes()
    assert json.loads((a / "synth.json").read_text())["seed"] == 1


def test_zero_noise_classes_identical():
    samples = synth_landmarks(per_class=5, noise=0.0)
    by_class = {}
    for _, _, label, pts in samples:
        by_class.setdefault(label, []).append(pts)
    for pts in by_class.values():
        assert all(np.array_equal(p, pts[0]) for p in pts)


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fershape.cli", "synth", "--out", str(tmp_path / "s"),
                           "--classes", "2", "--per-class", "2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "seed 42" in proc.stdout
