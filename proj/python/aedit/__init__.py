# Copyright 2026 The aedit Authors
# SPDX-License-Identifier: Apache-2.0
"""Text-guided audio editing on a toy latent diffusion backend."""

import json as _json

from ._core import (
    IoError,
    MelConfig,
    NoiseSchedule,
    StageError,
    ToyClapEmbedder,
    ValidationError,
    ddim_timesteps,
    default_config,
    derive_seed,
    inspect,
    load_archive,
    load_audio,
    mel_filterbank,
    mel_spectrogram,
    save_archive,
    save_wav,
    select_eta,
    sha256_hex,
    spearman,
)
from . import _core


def edit(config: dict) -> dict:
    """Runs the edit pipeline for a config dict and returns the run manifest."""
    return _json.loads(_core.edit(_json.dumps(config)))


def sweep(config: dict) -> dict:
    """Runs the strength sweep for a config dict and returns the run manifest."""
    return _json.loads(_core.sweep(_json.dumps(config)))


def resolve_config(config: dict | None = None, **overrides: str) -> dict:
    """Applies flag-style overrides (eta, seed, prompt, ...) to a config dict."""
    text = _json.dumps(config) if config is not None else default_config()
    return _json.loads(_core.apply_overrides(text, {k: str(v) for k, v in overrides.items()}))


__all__ = [name for name in dir() if not name.startswith("_")]
