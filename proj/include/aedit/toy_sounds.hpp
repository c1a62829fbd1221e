// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

// Keyword -> frequency-band dictionary of synthetic sound classes. Drives both the
// toy training corpus and the anchor pairs of the toy audio-text embedder.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aedit/spectral_io.hpp"

namespace aedit {

enum class Texture { tonal_sweep, harmonic_bursts, clicks, noise_bursts, steady_noise, steady_harmonic, chirps, pulsed_tones };

struct SoundClass {
  std::string name;
  std::vector<std::string> words;  // first entry is the canonical keyword
  double lo_hz;
  double hi_hz;
  Texture texture;
};

const std::vector<SoundClass>& sound_classes();
/// Class whose word list contains `word`, if any.
const SoundClass* find_sound_class(std::string_view word);

/// Sum of the requested classes rendered for `duration` seconds, peak-normalised to 0.5.
AudioClip synthesize_scene(const std::vector<const SoundClass*>& classes, double duration, int sample_rate,
                           std::uint64_t seed);

/// Clip duration that yields exactly `n_frames` frames under center padding.
double duration_for_frames(std::size_t n_frames, const MelConfig& cfg);

}  // namespace aedit
