# Copyright 2026 The aedit Authors
# SPDX-License-Identifier: Apache-2.0
"""Independent numpy reference values frozen into the C++ unit tests."""

import hashlib

import numpy as np
from scipy import stats

SR, N_FFT, HOP, N_MELS, FLOOR = 16000, 1024, 160, 64, -11.52


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + hz / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (mel / 2595.0) - 1.0)


def filterbank():
    edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(SR / 2), N_MELS + 2))
    freqs = np.arange(N_FFT // 2 + 1) * SR / N_FFT
    fb = np.zeros((N_MELS, freqs.size))
    for k in range(N_MELS):
        lo, c, hi = edges[k:k + 3]
        fb[k] = np.maximum(0.0, np.minimum((freqs - lo) / (c - lo), (hi - freqs) / (hi - c)))
    return fb


def log_mel(x):
    xp = np.pad(x, N_FFT // 2, mode="reflect")
    n_frames = 1 + (xp.size - N_FFT) // HOP
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(N_FFT) / N_FFT)
    power = np.stack([np.abs(np.fft.rfft(xp[f * HOP:f * HOP + N_FFT] * window)) ** 2 for f in range(n_frames)], 1)
    mel = filterbank() @ power
    return np.maximum(np.log(np.maximum(mel, np.exp(FLOOR))), FLOOR)


def main():
    n = np.arange(4000)
    x = 0.3 * np.sin(2 * np.pi * 440 * n / SR) + 0.2 * np.sin(2 * np.pi * 2500 * n / SR + 0.3)
    m = log_mel(x)
    print("two-tone frames", m.shape[1])
    for band, frame in [(12, 10), (8, 3), (38, 12), (14, 0), (39, 25)]:
        print(f"log_mel[{band},{frame}] = {m[band, frame]:.12f}")
    fb = filterbank()
    for k, b in [(0, 1), (10, 24), (50, 280)]:
        print(f"fb[{k},{b}] = {fb[k, b]:.15f}")

    betas = np.linspace(1e-4, 2e-2, 1000)
    abar = np.cumprod(1.0 - betas)
    for t in [1, 10, 200, 1000]:
        print(f"alpha_bar({t}) = {abar[t - 1]:.15e}")

    for depth, steps in [(200, 7), (1000, 3), (5, 5)]:
        ts = [depth - int(np.floor(k * depth / steps + 0.5)) for k in range(steps)]
        print(f"ddim({depth},{steps}) = {ts}")

    x, y = [1.0, 2.0, 2.0, 3.0, 5.0, 0.5], [2.0, 1.0, 4.0, 4.0, 9.0, 3.0]
    print(f"spearman_ties = {stats.spearmanr(x, y).correlation:.15f}")

    print("sha256(abc) =", hashlib.sha256(b"abc").hexdigest())


if __name__ == "__main__":
    main()
