# Copyright 2026 The aedit Authors
# SPDX-License-Identifier: Apache-2.0

import json
import sys
from pathlib import Path

import numpy as np
import pytest

import aedit

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "oracles"))
import reference_values as ref  # noqa: E402


def two_tone():
    n = np.arange(4000)
    return 0.3 * np.sin(2 * np.pi * 440 * n / 16000) + 0.2 * np.sin(2 * np.pi * 2500 * n / 16000 + 0.3)


def test_log_mel_matches_numpy_reference():
    ours = aedit.mel_spectrogram(two_tone())
    theirs = ref.log_mel(two_tone())
    assert ours.shape == theirs.shape == (64, 26)
    np.testing.assert_allclose(ours, theirs, rtol=0, atol=1e-8)
    np.testing.assert_allclose(aedit.mel_filterbank(), ref.filterbank(), rtol=0, atol=1e-12)


def test_schedule_and_timesteps():
    betas = np.linspace(1e-4, 2e-2, 1000)
    abar = np.cumprod(1.0 - betas)
    sched = aedit.NoiseSchedule()
    for t in (1, 10, 200, 1000):
        assert sched.alpha_bar(t) == pytest.approx(abar[t - 1], rel=1e-10)
    assert aedit.ddim_timesteps(200, 7) == [200, 171, 143, 114, 86, 57, 29]


def test_spearman_and_selection():
    assert aedit.spearman([1, 2, 2, 3, 5, 0.5], [2, 1, 4, 4, 9, 3]) == pytest.approx(0.661764705882353, abs=1e-13)
    assert aedit.select_eta([0.4, 0.8], [0.65, 0.65], [0.65, 0.65])[0] == 0.4
    with pytest.raises(aedit.ValidationError):
        aedit.select_eta([], [], [])


def test_archive_interoperates_with_safetensors(tmp_path):
    st = pytest.importorskip("safetensors.numpy")
    rng = np.random.default_rng(0)
    arrays = {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(5)}
    aedit.save_archive(tmp_path / "ours.safetensors", arrays, {"lineage": "abc"})
    loaded = st.load_file(str(tmp_path / "ours.safetensors"))
    for k, v in arrays.items():
        np.testing.assert_array_equal(loaded[k], v)

    st.save_file(arrays, str(tmp_path / "theirs.safetensors"), metadata={"kind": "x"})
    back, meta = aedit.load_archive(tmp_path / "theirs.safetensors")
    assert meta == {"kind": "x"}
    for k, v in arrays.items():
        np.testing.assert_array_equal(back[k], v)


def test_wav_round_trip(tmp_path):
    x = 0.25 * np.sin(np.linspace(0, 200, 8000))
    aedit.save_wav(tmp_path / "a.wav", x)
    y, rate = aedit.load_audio(tmp_path / "a.wav")
    assert rate == 16000
    np.testing.assert_allclose(y, x, atol=1e-7)
    with pytest.raises(aedit.IoError):
        aedit.load_audio(tmp_path / "missing.wav")


def test_embedder_scores():
    e = aedit.ToyClapEmbedder()
    x = 0.3 * np.sin(2 * np.pi * 900 * np.arange(16000) / 16000)
    s = e.score(x, x, "siren")
    assert s["audio"] == pytest.approx(1.0)
    assert s["sum"] == pytest.approx(s["text"] + s["audio"])
    assert e.embed_text("siren").shape == (64,)


def test_config_overrides_and_validation(tmp_path):
    cfg = aedit.resolve_config(eta="0.3", seed=5, timesteps=50)
    assert cfg["edit"]["eta"] == 0.3
    assert cfg["seed"] == 5
    assert cfg["generation"]["num_steps"] == 50
    assert aedit.derive_seed(5, "sampling") == aedit.derive_seed(5, "sampling")
    cfg["edit"].update(input="x.wav", prompt="rain", edit_type="inpainting", out=str(tmp_path / "run"))
    cfg["checkpoint"] = "missing.safetensors"
    with pytest.raises(aedit.ValidationError):
        aedit.edit(cfg)
    json.dumps(cfg)
