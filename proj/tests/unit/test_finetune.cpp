// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "aedit/errors.hpp"
#include "aedit/finetune.hpp"
#include "aedit/hashing.hpp"
#include "aedit/rng.hpp"
#include "aedit/toy_backend.hpp"
#include "test_support.hpp"

using namespace aedit;

namespace {

struct Probe {
  Tensor z_t;
  Tensor e;
  int t;
};

Probe make_probe(const ToyBackend& backend, std::uint64_t seed) {
  Rng rng(seed);
  return {rng.normal_tensor(backend.latent_shape()), backend.encode_text("rain falling").values, 250};
}

void randomize_b(DiffusionBackend& backend, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [key, value] : backend.adapter()->params)
    if (key.ends_with(".lora_B")) value = rng.normal_tensor(value.shape, 0.05);
}

}  // namespace

TEST_CASE("fresh adapter is a no-op") {
  ToyBackend backend(1);
  const Probe p = make_probe(backend, 2);
  const Tensor before = backend.predict_noise(p.z_t, p.t, p.e);
  attach_lora(backend, 8, 16.0, backend.lora_target_names(), 3);
  CHECK(backend.predict_noise(p.z_t, p.t, p.e) == before);
  CHECK(backend.adapter()->targets == backend.lora_target_names());
}

TEST_CASE("merge matches the adapted forward") {
  ToyBackend backend(1);
  const Probe p = make_probe(backend, 2);
  attach_lora(backend, 8, 16.0, backend.lora_target_names(), 3);
  randomize_b(backend, 4);
  const Tensor adapted = backend.predict_noise(p.z_t, p.t, p.e);
  merge_lora(backend);
  CHECK(!backend.adapter().has_value());
  CHECK(max_abs_diff(backend.predict_noise(p.z_t, p.t, p.e), adapted) < 1e-6);
}

TEST_CASE("merge equals W + (alpha/rank) B A computed by hand") {
  ToyBackend backend(1);
  const std::string target = backend.lora_target_names().front();
  attach_lora(backend, 4, 16.0, {target}, 5);
  randomize_b(backend, 6);
  const Tensor w = backend.parameters().at(target + ".weight");
  const Tensor a = backend.adapter()->params.at(LoRAAdapter::a_key(target));
  const Tensor b = backend.adapter()->params.at(LoRAAdapter::b_key(target));
  const std::size_t d_out = w.shape[0], d_in = w.shape[1], r = 4;
  merge_lora(backend);
  const Tensor& merged = backend.parameters().at(target + ".weight");
  double worst = 0.0;
  for (std::size_t i = 0; i < d_out; ++i)
    for (std::size_t j = 0; j < d_in; ++j) {
      double ba = 0.0;
      for (std::size_t k = 0; k < r; ++k) ba += b[i * r + k] * a[k * d_in + j];
      worst = std::max(worst, std::abs(merged[i * d_in + j] - (w[i * d_in + j] + 4.0 * ba)));
    }
  CHECK(worst < 1e-12);
}

TEST_CASE("rank-8 adapter trains under ten percent of the weights") {
  ToyBackend backend(1);
  const LoRAAdapter adapter = attach_lora(backend, 8, 16.0, backend.lora_target_names(), 0);
  const double fraction =
      static_cast<double>(adapter.trainable_count()) / static_cast<double>(total_numel(backend.parameters()));
  CHECK(fraction > 0.0);
  CHECK(fraction < 0.10);
}

TEST_CASE("full fine-tuning moves the weights and binds the lineage") {
  ToyBackend backend(2);
  Rng rng(7);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const TextEmbedding e = backend.encode_text("engine");
  const std::string before = hash_named(backend.parameters());
  FtConfig cfg;
  cfg.num_steps = 5;
  const LossTrace trace = finetune(backend, z, e, cfg);
  CHECK(trace.size() == 5);
  CHECK(hash_named(backend.parameters()) != before);
  CHECK(backend.lineage() == hash_embedding(e));
  CHECK(!backend.adapter().has_value());
}

TEST_CASE("LoRA fine-tuning keeps the base weights bit-identical") {
  ToyBackend backend(2);
  Rng rng(7);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const TextEmbedding e = backend.encode_text("engine");
  const std::string before = hash_named(backend.parameters());
  FtConfig cfg;
  cfg.mode = FtMode::lora;
  cfg.num_steps = 5;
  finetune(backend, z, e, cfg);
  CHECK(hash_named(backend.parameters()) == before);
  REQUIRE(backend.adapter().has_value());
  bool moved = false;
  for (const auto& [key, value] : backend.adapter()->params)
    if (key.ends_with(".lora_B")) moved = moved || value.norm() > 0.0;
  CHECK(moved);
}

TEST_CASE("fine-tuning is deterministic") {
  Rng rng(9);
  ToyBackend a(3), b(3);
  const Latent z{rng.normal_tensor(a.latent_shape())};
  const TextEmbedding e = a.encode_text("phone ringing");
  FtConfig cfg;
  cfg.num_steps = 4;
  cfg.seed = 11;
  CHECK(finetune(a, z, e, cfg).loss == finetune(b, z, e, cfg).loss);
  CHECK(hash_named(a.parameters()) == hash_named(b.parameters()));
}

TEST_CASE("mode defaults and validation") {
  FtConfig cfg;
  CHECK(cfg.effective_learning_rate() == 1e-6);
  cfg.mode = FtMode::lora;
  CHECK(cfg.effective_learning_rate() == 1e-4);
  cfg.learning_rate = 3e-3;
  CHECK(cfg.effective_learning_rate() == 3e-3);
  cfg.lora_rank = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(ft_mode_from_string("lora") == FtMode::lora);
  CHECK(to_string(FtMode::full) == "full");
  CHECK_THROWS_AS(ft_mode_from_string("partial"), ValidationError);
}

TEST_CASE("adapter persistence and detach") {
  const auto dir = testing::fresh_dir("finetune_adapter");
  ToyBackend backend(4);
  const Probe p = make_probe(backend, 8);
  const Tensor base = backend.predict_noise(p.z_t, p.t, p.e);
  attach_lora(backend, 8, 16.0, backend.lora_target_names(), 1);
  randomize_b(backend, 2);
  const Tensor adapted = backend.predict_noise(p.z_t, p.t, p.e);
  save_adapter(dir / "a.safetensors", *backend.adapter(), "lineage-x");

  const LoRAAdapter detached = detach_lora(backend);
  CHECK(backend.predict_noise(p.z_t, p.t, p.e) == base);
  std::string lineage;
  const LoRAAdapter loaded = load_adapter(dir / "a.safetensors", &lineage);
  CHECK(lineage == "lineage-x");
  CHECK(loaded.rank == detached.rank);
  CHECK(loaded.alpha == detached.alpha);
  CHECK(loaded.params == detached.params);
  backend.set_adapter(loaded);
  CHECK(backend.predict_noise(p.z_t, p.t, p.e) == adapted);
  detach_lora(backend);
  CHECK_THROWS_AS(detach_lora(backend), StateError);
  CHECK_THROWS_AS(merge_lora(backend), StateError);
}

TEST_CASE("unknown LoRA target") {
  ToyBackend backend(4);
  CHECK_THROWS_AS(attach_lora(backend, 8, 16.0, {"no_such_matrix"}, 0), ValidationError);
}
