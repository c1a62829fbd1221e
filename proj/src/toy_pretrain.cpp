// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/toy_pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "aedit/errors.hpp"
#include "aedit/optim.hpp"
#include "aedit/rng.hpp"
#include "aedit/spectral_io.hpp"

namespace aedit {

std::string scene_prompt(const std::vector<const SoundClass*>& classes, Rng& rng) {
  // One or two aliases per class, e.g. "dog barking".
  auto phrase = [&](const SoundClass* c) {
    const int n = static_cast<int>(c->words.size());
    const int first = rng.uniform_int(0, n - 1);
    std::string out = c->words[static_cast<std::size_t>(first)];
    if (rng.uniform() < 0.5) {
      int second = rng.uniform_int(0, n - 2);
      if (second >= first) ++second;
      out += " " + c->words[static_cast<std::size_t>(second)];
    }
    return out;
  };
  if (classes.empty()) return "";
  std::string prompt = phrase(classes[0]);
  const int style = rng.uniform_int(0, 2);
  if (style == 0) prompt = "sound of " + prompt;
  for (std::size_t i = 1; i < classes.size(); ++i) {
    if (style == 0) {
      prompt += " with " + phrase(classes[i]) + " in the background";
    } else {
      prompt += (style == 1 ? " and " : " with ") + phrase(classes[i]);
    }
  }
  return prompt;
}

std::vector<CorpusItem> make_toy_corpus(std::size_t count, std::uint64_t seed, const MelConfig& mel,
                                        std::size_t n_frames) {
  const auto& classes = sound_classes();
  const int n_classes = static_cast<int>(classes.size());
  Rng rng(seed);
  std::vector<CorpusItem> corpus;
  corpus.reserve(count);
  const double duration = duration_for_frames(n_frames, mel);
  for (std::size_t i = 0; i < count; ++i) {
    CorpusItem item;
    const int first = rng.uniform_int(0, n_classes - 1);
    item.classes.push_back(&classes[static_cast<std::size_t>(first)]);
    if (rng.uniform() < 0.5) {
      int second = rng.uniform_int(0, n_classes - 2);
      if (second >= first) ++second;
      item.classes.push_back(&classes[static_cast<std::size_t>(second)]);
    }
    item.prompt = scene_prompt(item.classes, rng);
    const AudioClip clip = synthesize_scene(item.classes, duration, mel.sample_rate, rng.engine()());
    item.mel = fit_mel_frames(mel_spectrogram(clip, mel), n_frames);
    corpus.push_back(std::move(item));
  }
  return corpus;
}

ToyBackend pretrain_toy_backend(const PretrainConfig& cfg, const std::function<void(int, double)>& progress) {
  if (cfg.corpus_size == 0 || cfg.steps < 0 || cfg.batch < 1) throw ValidationError("pretrain: bad config");
  ToyBackend backend(cfg.seed, cfg.schedule, cfg.mel);
  const auto corpus = make_toy_corpus(cfg.corpus_size, derive_seed(cfg.seed, "corpus"), backend.mel_config(),
                                      backend.mel_geometry().n_frames);
  std::vector<MelSpec> mels;
  for (const auto& item : corpus) mels.push_back(item.mel);
  backend.vae().fit(mels);

  std::vector<Latent> latents;
  std::vector<TextEmbedding> embeddings;
  for (const auto& item : corpus) {
    latents.push_back(backend.encode(item.mel));
    embeddings.push_back(backend.encode_text(item.prompt));
  }
  const TextEmbedding null_e = backend.encode_text("");

  Rng rng(derive_seed(cfg.seed, "pretrain"));
  Adam adam(cfg.learning_rate);
  const int T = backend.schedule().steps();
  for (int step = 0; step < cfg.steps; ++step) {
    NamedTensors grads;
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(corpus.size()) - 1));
      const bool drop = rng.uniform() < cfg.null_prompt_rate;
      const int t = rng.uniform_int(1, T);
      const Tensor eps = rng.normal_tensor(backend.latent_shape());
      LossGrad lg = diffusion_loss_grad(backend, latents[idx], drop ? null_e : embeddings[idx], t, eps, kGradBase);
      loss += lg.loss / cfg.batch;
      for (auto& [name, g] : lg.d_params) {
        g *= 1.0 / cfg.batch;
        auto [it, fresh] = grads.try_emplace(name, std::move(g));
        if (!fresh) it->second += g;
      }
    }
    if (!std::isfinite(loss)) throw NumericError("pretraining: non-finite loss at step " + std::to_string(step + 1));
    adam.set_learning_rate(cfg.learning_rate * (1.0 - 0.9 * static_cast<double>(step) / std::max(cfg.steps, 1)));
    adam.step(backend.parameters(), grads);
    if (progress) progress(step + 1, loss);
  }
  return backend;
}

}  // namespace aedit
