import csv

import numpy as np
import pytest

from gensemcom.cli import main
from gensemcom.data import save_image
from conftest import tiny_config

SMALL = {"image.height": 16, "image.width": 16, "extractor.patch_size": 2, "training.epochs": 1}


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "rec.cfg"
    cfg_path.write_text(tiny_config("RECONSTRUCT", **SMALL).to_text())
    assert main(["train", "--config", str(cfg_path), "--out-dir", str(root / "run")]) == 0
    return root, cfg_path


def test_train_writes_artifacts(trained):
    root, _ = trained
    run = root / "run"
    assert (run / "model.ckpt").stat().st_size > 0
    rows = list(csv.DictReader(open(run / "train_log.csv")))
    assert list(rows[0]) == ["epoch", "loss", "lr", "wall_time"] and len(rows) == 1
    assert (run / "config.cfg").exists()


def test_train_missing_task_key(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("training.epochs = 1\n")
    assert main(["train", "--config", str(path)]) == 2
    assert "training.task" in capsys.readouterr().err


def test_train_bad_line_is_numbered(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("training.task = SEGMENT\nimage.height = tall\n")
    assert main(["train", "--config", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_config_file_is_config_error(tmp_path):
    assert main(["train", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_evaluate_sweep_csv(trained, capsys):
    root, _ = trained
    out = root / "eval"
    code = main(["evaluate", "--checkpoint", str(root / "run" / "model.ckpt"), "--snr", "0,6,12,18",
                 "--out-dir", str(out), "--visualize"])
    assert code == 0
    rows = list(csv.DictReader(open(out / "eval_reconstruct.csv")))
    assert [float(r["snr_db"]) for r in rows] == [0, 6, 12, 18]
    for r in rows:
        assert int(r["symbol_count"]) > 0 and float(r["bandwidth_bits"]) > 0
        assert r["bound_compliant"] == "true"
        assert np.isfinite(float(r["psnr_db"]))
    assert (out / "eval_reconstruct.png").stat().st_size > 0
    assert (out / "visual_reconstruct_snr18.png").exists()


def test_evaluate_is_reproducible(trained):
    root, _ = trained
    ck = str(root / "run" / "model.ckpt")
    for name in ("a", "b"):
        assert main(["evaluate", "--checkpoint", ck, "--snr", "0,18", "--seed", "3", "--out-dir", str(root / name)]) == 0
    assert (root / "a" / "eval_reconstruct.csv").read_bytes() == (root / "b" / "eval_reconstruct.csv").read_bytes()


def test_evaluate_task_mismatch(trained):
    root, _ = trained
    assert main(["evaluate", "--checkpoint", str(root / "run" / "model.ckpt"), "--task", "SEGMENT",
                 "--out-dir", str(root / "x")]) == 2


def test_evaluate_hash_mismatch_needs_force(trained, tmp_path):
    root, _ = trained
    other = tmp_path / "other.cfg"
    other.write_text(tiny_config("RECONSTRUCT", **SMALL, **{"encoder.out_channels": 2}).to_text())
    ck = str(root / "run" / "model.ckpt")
    assert main(["evaluate", "--checkpoint", ck, "--config", str(other), "--out-dir", str(tmp_path)]) == 2


def test_evaluate_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    assert main(["evaluate", "--checkpoint", str(bad), "--out-dir", str(tmp_path)]) == 2


def test_infer_routes_and_writes(trained, tmp_path, capsys):
    root, _ = trained
    img = tmp_path / "photo.png"
    save_image(img, np.random.default_rng(0).random((16, 16, 3)))
    ck = str(root / "run" / "model.ckpt")
    code = main(["infer", "--checkpoint", ck, "--image", str(img), "--requirement", "reconstruct this photo",
                 "--snr", "12", "--out-dir", str(tmp_path / "o")])
    assert code == 0
    assert "RECONSTRUCT" in capsys.readouterr().out
    assert (tmp_path / "o" / "photo_reconstruction.png").exists()
    # a segmentation request cannot be served by a reconstruction-only checkpoint
    assert main(["infer", "--checkpoint", ck, "--image", str(img), "--requirement", "segment the objects",
                 "--out-dir", str(tmp_path / "o")]) == 2
    assert main(["infer", "--checkpoint", ck, "--image", str(img), "--requirement", "",
                 "--out-dir", str(tmp_path / "o")]) == 2
    assert main(["infer", "--checkpoint", ck, "--image", str(tmp_path / "missing.png"),
                 "--requirement", "restore it", "--out-dir", str(tmp_path / "o")]) == 3


def test_infer_segment_mask(tmp_path, capsys):
    cfg_path = tmp_path / "seg.cfg"
    cfg_path.write_text(tiny_config("SEGMENT", **SMALL).to_text())
    assert main(["train", "--config", str(cfg_path), "--out-dir", str(tmp_path / "run")]) == 0
    img = tmp_path / "scene.png"
    save_image(img, np.random.default_rng(1).random((16, 16, 3)))
    assert main(["infer", "--checkpoint", str(tmp_path / "run" / "model.ckpt"), "--image", str(img),
                 "--requirement", "segment the objects", "--out-dir", str(tmp_path)]) == 0
    assert "SEGMENT" in capsys.readouterr().out
    assert (tmp_path / "scene_mask.png").exists()
    assert main(["evaluate", "--checkpoint", str(tmp_path / "run" / "model.ckpt"), "--snr", "0,6,12,18",
                 "--out-dir", str(tmp_path / "ev")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "ev" / "eval_segment.csv")))
    assert len(rows) == 4 and all(0 <= float(r["mean_iou"]) <= 1 for r in rows)


def test_kb_match_ranks(capsys):
    from gensemcom.task_kb import DEFAULT_MEMORY

    assert main(["kb-match", dict(DEFAULT_MEMORY)["SEGMENT"]]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    ids = [line.split("\t")[0] for line in lines]
    scores = [float(line.split("\t")[1]) for line in lines]
    assert ids[0] == "SEGMENT" and scores[0] == pytest.approx(1.0)
    assert scores == sorted(scores, reverse=True) and all(-1 <= s <= 1 for s in scores)
    assert main(["kb-match", dict(DEFAULT_MEMORY)["SEGMENT"]]) == 0
    assert capsys.readouterr().out.strip().splitlines() == lines


def test_env_override_reaches_train(tmp_path, monkeypatch):
    path = tmp_path / "rec.cfg"
    path.write_text(tiny_config("RECONSTRUCT", **SMALL).to_text())
    monkeypatch.setenv("SEMCOM_TRAINING__EPOCHS", "2")
    assert main(["train", "--config", str(path), "--out-dir", str(tmp_path / "r")]) == 0
    assert len(list(csv.DictReader(open(tmp_path / "r" / "train_log.csv")))) == 2
