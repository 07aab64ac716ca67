import hashlib
import json
import os

import numpy as np
import pytest

from bridgepan.cli import main
from bridgepan.raster import read_raster, write_raster
from bridgepan.synth import synthetic_scene


def _digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def _write_scene(tmp_path, name="scene", bands=4, pan_size=64, seed=0):
    ms, pan = synthetic_scene(bands=bands, pan_size=pan_size, ratio=4, seed=seed)
    ms_path = str(tmp_path / f"{name}_ms.bpr")
    pan_path = str(tmp_path / f"{name}_pan.bpr")
    write_raster(ms_path, ms)
    write_raster(pan_path, pan)
    return ms_path, pan_path


def test_degrade_writes_triple_and_is_deterministic(tmp_path):
    ms_path, pan_path = _write_scene(tmp_path)
    out = str(tmp_path / "pair")
    assert main(["degrade", "--ms", ms_path, "--pan", pan_path,
                 "--ratio", "4", "--out", out]) == 0
    names = ["ms_reduced.bpr", "pan_reduced.bpr", "reference.bpr", "manifest.json"]
    for n in names:
        assert os.path.exists(os.path.join(out, n))
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["ms_reduced"]["height"] == 4  # 16 / 4
    assert manifest["pan_reduced"]["height"] == 16
    first = {n: _digest(os.path.join(out, n)) for n in names}
    assert main(["degrade", "--ms", ms_path, "--pan", pan_path,
                 "--ratio", "4", "--out", out]) == 0
    assert first == {n: _digest(os.path.join(out, n)) for n in names}


def test_degrade_indivisible_ratio_exits_2(tmp_path, capsys):
    ms_path, pan_path = _write_scene(tmp_path, pan_size=64)
    rc = main(["degrade", "--ms", ms_path, "--pan", pan_path,
               "--ratio", "3", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "3" in capsys.readouterr().err


def _make_dataset(tmp_path, count=2, pan_size=128):
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    for i in range(count):
        ms_path, pan_path = _write_scene(tmp_path, name=f"s{i}",
                                         pan_size=pan_size, seed=i)
        assert main(["degrade", "--ms", ms_path, "--pan", pan_path,
                     "--ratio", "4", "--out", str(data_dir / f"pair{i}")]) == 0
    return str(data_dir)


def test_train_zero_steps_writes_initialized_checkpoint(tmp_path):
    data_dir = _make_dataset(tmp_path)
    out = str(tmp_path / "run0")
    assert main(["train", "--data-dir", data_dir, "--steps", "0",
                 "--seed", "5", "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "checkpoint.ckpt"))
    assert not os.path.exists(os.path.join(out, "train_log.csv"))


def test_train_same_seed_same_checkpoint_digest(tmp_path):
    data_dir = _make_dataset(tmp_path)
    digests = []
    for run in range(2):
        out = str(tmp_path / f"run{run}")
        assert main(["train", "--data-dir", data_dir, "--steps", "3",
                     "--batch", "2", "--seed", "9", "--out", out]) == 0
        digests.append(_digest(os.path.join(out, "checkpoint.ckpt")))
        log = open(os.path.join(out, "train_log.csv")).read().splitlines()
        assert log[0] == "step,loss_ref,loss_aux,loss_total,wall_ms"
        assert len(log) == 4
    assert digests[0] == digests[1]


def test_train_empty_dataset_exits_2(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["train", "--data-dir", str(empty), "--steps", "1",
                 "--out", str(tmp_path / "o")]) == 2


def test_sharpen_oracle_reproduces_reference(tmp_path):
    data_dir = _make_dataset(tmp_path, count=1)
    run = str(tmp_path / "run")
    assert main(["train", "--data-dir", data_dir, "--steps", "0",
                 "--seed", "1", "--out", run]) == 0
    pair_dir = os.path.join(data_dir, "pair0")
    fused_path = str(tmp_path / "fused.bpr")
    assert main(["sharpen",
                 "--ms", os.path.join(pair_dir, "ms_reduced.bpr"),
                 "--pan", os.path.join(pair_dir, "pan_reduced.bpr"),
                 "--ckpt", os.path.join(run, "checkpoint.ckpt"),
                 "--nfe", "3",
                 "--oracle", os.path.join(pair_dir, "reference.bpr"),
                 "--out", fused_path]) == 0
    fused = read_raster(fused_path)
    ref = read_raster(os.path.join(pair_dir, "reference.bpr"))
    assert np.max(np.abs(fused.data - ref.data)) < 1e-5


def test_sharpen_eta_zero_bitwise_equal_to_default(tmp_path):
    import warnings

    data_dir = _make_dataset(tmp_path, count=1)
    run = str(tmp_path / "run")
    assert main(["train", "--data-dir", data_dir, "--steps", "1",
                 "--batch", "1", "--seed", "2", "--out", run]) == 0
    pair_dir = os.path.join(data_dir, "pair0")
    args = ["sharpen",
            "--ms", os.path.join(pair_dir, "ms_reduced.bpr"),
            "--pan", os.path.join(pair_dir, "pan_reduced.bpr"),
            "--ckpt", os.path.join(run, "checkpoint.ckpt")]
    a = str(tmp_path / "a.bpr")
    b = str(tmp_path / "b.bpr")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert main(args + ["--out", a]) == 0
        assert main(args + ["--eta", "0", "--out", b]) == 0
    assert _digest(a) == _digest(b)


def test_eval_reference_identity(tmp_path):
    ms_path, _ = _write_scene(tmp_path)
    out = str(tmp_path / "metrics")
    assert main(["eval", "--fused", ms_path, "--ref", ms_path,
                 "--ratio", "4", "--out", out]) == 0
    rep = json.load(open(os.path.join(out, "scene_ms.metrics.json")))
    assert rep["psnr"] == 99.0
    assert abs(rep["ssim"] - 1.0) < 1e-9
    assert rep["sam"] == 0.0
    assert rep["ergas"] == 0.0
    assert os.path.exists(os.path.join(out, "metrics_aggregate.csv"))


def test_eval_no_reference_on_consistent_scene(tmp_path):
    ms_path, pan_path = _write_scene(tmp_path, pan_size=128, seed=3)
    pair = str(tmp_path / "pair")
    assert main(["degrade", "--ms", ms_path, "--pan", pan_path,
                 "--ratio", "4", "--out", pair]) == 0
    # fused := bicubic upsample of the degraded ms (self-consistent construction)
    from bridgepan.raster import upsample_bicubic

    fused = upsample_bicubic(read_raster(os.path.join(pair, "ms_reduced.bpr")), 4)
    fused_path = str(tmp_path / "fused.bpr")
    write_raster(fused_path, fused)
    out = str(tmp_path / "noref")
    assert main(["eval", "--fused", fused_path,
                 "--ms", os.path.join(pair, "ms_reduced.bpr"),
                 "--pan", os.path.join(pair, "pan_reduced.bpr"),
                 "--ratio", "4", "--out", out]) == 0
    rep = json.load(open(os.path.join(out, "fused.metrics.json")))
    assert abs(rep["qnr"] - (1 - rep["d_lambda"]) * (1 - rep["d_s"])) < 1e-9
    assert rep["qnr"] > 0.9


def test_eval_mixed_modes_usage_error(tmp_path):
    ms_path, pan_path = _write_scene(tmp_path)
    assert main(["eval", "--fused", ms_path, "--ref", ms_path, "--ms", ms_path,
                 "--pan", pan_path, "--ratio", "4",
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["eval", "--fused", ms_path, "--ref", ms_path,
                 "--out", str(tmp_path / "o")]) == 2  # missing --ratio


def test_baseline_all_methods(tmp_path):
    ms_path, pan_path = _write_scene(tmp_path, pan_size=64, seed=4)
    pair = str(tmp_path / "pair")
    assert main(["degrade", "--ms", ms_path, "--pan", pan_path,
                 "--ratio", "4", "--out", pair]) == 0
    out = str(tmp_path / "base")
    assert main(["baseline",
                 "--ms", os.path.join(pair, "ms_reduced.bpr"),
                 "--pan", os.path.join(pair, "pan_reduced.bpr"),
                 "--ref", os.path.join(pair, "reference.bpr"),
                 "--ratio", "4", "--method", "all", "--out", out]) == 0
    for m in ("sfim", "ihs", "gs", "brovey"):
        assert os.path.exists(os.path.join(out, f"{m}.bpr"))
    rows = open(os.path.join(out, "baselines.csv")).read().splitlines()
    assert rows[0] == "method,psnr,ssim,ergas,sam"
    assert len(rows) == 5


def test_unknown_method_is_usage_error(tmp_path, capsys):
    ms_path, pan_path = _write_scene(tmp_path)
    rc = main(["baseline", "--ms", ms_path, "--pan", pan_path, "--ratio", "4",
               "--method", "wavelet", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_format_error_exit_3(tmp_path):
    bad = str(tmp_path / "bad.bpr")
    with open(bad, "wb") as fh:
        fh.write(b"not a raster at all\n1234")
    rc = main(["eval", "--fused", bad, "--ref", bad, "--ratio", "4",
               "--out", str(tmp_path / "o")])
    assert rc == 3


def test_verify_kernels_suite(capsys):
    assert main(["verify", "--suite", "kernels"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_resolved_config_written(tmp_path):
    ms_path, pan_path = _write_scene(tmp_path)
    out = str(tmp_path / "pair")
    main(["degrade", "--ms", ms_path, "--pan", pan_path, "--ratio", "4",
          "--out", out])
    cfg = json.load(open(os.path.join(out, "degrade_config.json")))
    assert cfg["command"] == "degrade"
    assert cfg["ratio"] == 4
