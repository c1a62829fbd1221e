// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aedit/embedding_opt.hpp"
#include "aedit/rng.hpp"
#include "aedit/toy_backend.hpp"
#include "aedit/toy_sounds.hpp"

namespace aedit {

struct PretrainConfig {
  std::size_t corpus_size = 384;
  int steps = 4000;
  int batch = 8;
  double learning_rate = 2e-3;
  /// Fraction of samples trained with the empty-prompt embedding.
  double null_prompt_rate = 0.1;
  std::uint64_t seed = 7;
  ScheduleConfig schedule;
  MelConfig mel;
};

struct CorpusItem {
  std::string prompt;
  std::vector<const SoundClass*> classes;
  MelSpec mel;
};

/// Prompt phrasing used for a scene ("sound of X" / "X with Y in the background").
std::string scene_prompt(const std::vector<const SoundClass*>& classes, Rng& rng);

std::vector<CorpusItem> make_toy_corpus(std::size_t count, std::uint64_t seed, const MelConfig& mel,
                                        std::size_t n_frames);

/// Fits the VAE on the corpus, then trains the denoiser on (latent, prompt) pairs.
ToyBackend pretrain_toy_backend(const PretrainConfig& cfg,
                                const std::function<void(int step, double loss)>& progress = {});

}  // namespace aedit
