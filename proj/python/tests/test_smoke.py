import math

import numpy as np
import pytest

import dfir


def rand_image(seed, h=16, w=16):
    return np.random.default_rng(seed).random((h, w, 3), dtype=np.float32)


def test_psnr_closed_form_and_identity():
    a = np.full((8, 8, 3), 0.2, np.float32)
    b = np.full((8, 8, 3), 0.3, np.float32)
    assert dfir.psnr(a, b) == pytest.approx(20.0, rel=1e-5)
    assert math.isinf(dfir.psnr(a, a))


def test_ssim_identity_and_symmetry():
    a, b = rand_image(0), rand_image(1)
    assert dfir.ssim(a, a) == 1.0
    assert dfir.ssim(a, b) == pytest.approx(dfir.ssim(b, a), abs=1e-9)
    with pytest.raises(ValueError):
        dfir.ssim(np.zeros((4, 4, 3), np.float32), np.zeros((4, 4, 3), np.float32))


def test_degradation_is_deterministic_and_bounded():
    clean = rand_image(2, 32, 32)
    spec = dfir.sample_spec("builtin:web-rain", 3)
    assert spec["kind"] == "rain"
    x = dfir.apply_degradation(clean, spec, 4)
    y = dfir.apply_degradation(clean, spec, 4)
    assert x.shape == clean.shape
    assert np.array_equal(x, y)
    assert x.min() >= 0.0 and x.max() <= 1.0


def test_contrastive_loss_orthogonal_negatives():
    # q = k, K orthogonal negatives: loss = log(1 + K exp(-1/tau)).
    d, K, tau = 8, 4, 0.5
    q = np.eye(d, dtype=np.float32)[:1]
    negatives = np.eye(d, dtype=np.float32)[1 : K + 1]
    expected = math.log(1.0 + K * math.exp(-1.0 / tau))
    assert dfir.contrastive_loss(q, q, negatives, tau) == pytest.approx(expected, rel=1e-5)
    with pytest.raises(ValueError):
        dfir.contrastive_loss(q, q, negatives, 0.0)


def test_kd_loss_is_mse():
    a = np.zeros((2, 3, 4, 4), np.float32)
    b = np.full((2, 3, 4, 4), 0.5, np.float32)
    assert dfir.kd_loss(a, b) == pytest.approx(0.25)
    assert dfir.kd_loss(a, a) == 0.0


def test_schedule_and_forward_diffusion():
    assert dfir.alpha_bar(0) == 1.0
    assert dfir.alpha_bar(1000) < dfir.alpha_bar(500) < 1.0
    path = dfir.denoise_path(70, 0.5)
    assert path[0] <= 500 and path[-1] == 0
    assert path == sorted(path, reverse=True)
    z0 = np.ones((1, 4, 2, 2), np.float32)
    eps = np.zeros_like(z0)
    ab = 0.64
    assert np.allclose(dfir.forward_diffuse(z0, eps, ab), 0.8)


def test_config_validation():
    cfg = dfir.load_config(preset="smoke")
    assert cfg["distill"]["lambda"] == 0.5
    with pytest.raises(ValueError):
        dfir.load_config(preset="smoke", overrides={"distill.lambda": 1.3})
    with pytest.raises(ValueError):
        dfir.load_config(preset="smoke", overrides={"distill.lamda": 0.3})


def test_tiny_pipeline_stages(tmp_path):
    tiny = {
        "image_size": 16,
        "data.n_pretrain": 12,
        "data.pretrain_heldout": 4,
        "data.pretrain_copies": 1,
        "data.n_original": 12,
        "data.n_web": 12,
        "teacher.base_width": 4,
        "teacher.depth": 1,
        "teacher.steps": 3,
        "teacher.batch_size": 4,
    }
    run = tmp_path / "run"
    with pytest.raises(FileNotFoundError):
        dfir.run_stage("pretrain-teacher", run, overrides=tiny)
    first = dfir.run_stage("synth", run, overrides=tiny)
    assert not first["up_to_date"]
    teacher = dfir.run_stage("pretrain-teacher", run, overrides=tiny)
    assert teacher["training_steps"] == 3
    again = dfir.run_stage("pretrain-teacher", run, overrides=tiny)
    assert again["up_to_date"] and again["training_steps"] == 0

    manifest = run / "synth" / "original" / "manifest.jsonl"
    rows = dfir.evaluate([teacher["outputs"][0]], manifest)
    assert rows[0]["method"] == "teacher"
    assert math.isfinite(rows[0]["psnr_db"])
    out = dfir.restore(teacher["outputs"][0], rand_image(5))
    assert out.shape == (16, 16, 3)
