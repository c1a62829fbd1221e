// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/finetune.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>

#include "aedit/errors.hpp"
#include "aedit/optim.hpp"
#include "aedit/rng.hpp"
#include "aedit/safetensors.hpp"

namespace aedit {

std::string to_string(FtMode mode) { return mode == FtMode::full ? "full" : "lora"; }

FtMode ft_mode_from_string(const std::string& name) {
  if (name == "full") return FtMode::full;
  if (name == "lora") return FtMode::lora;
  throw ValidationError("unknown fine-tune mode '" + name + "'");
}

double FtConfig::effective_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return mode == FtMode::full ? 1e-6 : 1e-4;
}

void FtConfig::validate() const {
  if (!(effective_learning_rate() > 0.0)) throw ValidationError("finetune: learning_rate must be > 0");
  if (num_steps < 0) throw ValidationError("finetune: num_steps must be >= 0");
  if (lora_rank < 1) throw ValidationError("finetune: lora_rank must be >= 1");
  if (!(lora_alpha > 0.0)) throw ValidationError("finetune: lora_alpha must be > 0");
}

LossTrace finetune(DiffusionBackend& backend, const Latent& z, const TextEmbedding& e_opt, const FtConfig& cfg) {
  cfg.validate();
  if (z.values.shape != backend.latent_shape()) throw ValidationError("finetune: latent shape mismatch");
  if (e_opt.values.shape != backend.embedding_shape()) throw ValidationError("finetune: embedding shape mismatch");
  if (cfg.mode == FtMode::lora && !backend.adapter()) {
    const auto targets = cfg.lora_targets.empty() ? backend.lora_target_names() : cfg.lora_targets;
    attach_lora(backend, cfg.lora_rank, cfg.lora_alpha, targets, derive_seed(cfg.seed, "lora-init"));
  }
  const unsigned targets = cfg.mode == FtMode::full ? kGradBase : kGradAdapter;

  Adam adam(cfg.effective_learning_rate());
  Rng rng(cfg.seed);
  LossTrace trace;
  const int steps = backend.schedule().steps();
  for (int step = 0; step < cfg.num_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const int t = rng.uniform_int(1, steps);
    const Tensor eps = rng.normal_tensor(backend.latent_shape());
    LossGrad lg = diffusion_loss_grad(backend, z, e_opt, t, eps, targets);
    if (!std::isfinite(lg.loss))
      throw NumericError("fine-tuning: non-finite loss at step " + std::to_string(step + 1));
    NamedTensors& params = cfg.mode == FtMode::full ? backend.parameters() : backend.adapter()->params;
    adam.step(params, lg.d_params);
    trace.loss.push_back(lg.loss);
    trace.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  backend.set_lineage(hash_embedding(e_opt));
  return trace;
}

LoRAAdapter attach_lora(DiffusionBackend& backend, int rank, double alpha, const std::vector<std::string>& targets,
                        std::uint64_t seed) {
  if (rank < 1) throw ValidationError("LoRA rank must be >= 1");
  if (!(alpha > 0.0)) throw ValidationError("LoRA alpha must be > 0");
  if (targets.empty()) throw ValidationError("LoRA needs at least one target");
  LoRAAdapter adapter;
  adapter.rank = rank;
  adapter.alpha = alpha;
  adapter.targets = targets;
  Rng rng(seed);
  const auto r = static_cast<std::size_t>(rank);
  for (const auto& target : targets) {
    const Shape shape = backend.lora_target_shape(target);  // throws on unknown names
    adapter.params.emplace(LoRAAdapter::a_key(target),
                           rng.normal_tensor({r, shape[1]}, 1.0 / std::sqrt(static_cast<double>(shape[1]))));
    adapter.params.emplace(LoRAAdapter::b_key(target), Tensor({shape[0], r}));
  }
  backend.set_adapter(adapter);
  return adapter;
}

LoRAAdapter detach_lora(DiffusionBackend& backend) {
  if (!backend.adapter()) throw StateError("no LoRA adapter attached");
  LoRAAdapter adapter = std::move(*backend.adapter());
  backend.set_adapter(std::nullopt);
  return adapter;
}

const NamedTensors& merge_lora(DiffusionBackend& backend) {
  if (!backend.adapter()) throw StateError("merge_lora: no adapter attached");
  const LoRAAdapter adapter = detach_lora(backend);
  const auto r = static_cast<std::size_t>(adapter.rank);
  const double s = adapter.scaling();
  for (const auto& target : adapter.targets) {
    Tensor& w = backend.parameters().at(target + ".weight");
    const Tensor& a = adapter.params.at(LoRAAdapter::a_key(target));
    const Tensor& b = adapter.params.at(LoRAAdapter::b_key(target));
    const std::size_t rows = w.shape[0], cols = w.shape[1];
    // Same accumulation order as the adapted forward: W + s * (B A).
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        double ba = 0.0;
        for (std::size_t k = 0; k < r; ++k) ba += b[i * r + k] * a[k * cols + j];
        w[i * cols + j] += s * ba;
      }
  }
  return backend.parameters();
}

void save_adapter(const std::filesystem::path& path, const LoRAAdapter& adapter, const std::string& lineage) {
  ArrayArchive archive{adapter.params, {}};
  nlohmann::json meta = {{"format_version", 1}, {"rank", adapter.rank}, {"alpha", adapter.alpha},
                         {"targets", adapter.targets}, {"lineage", lineage}};
  archive.metadata["lora"] = meta.dump();
  save_archive(path, archive);
}

LoRAAdapter load_adapter(const std::filesystem::path& path, std::string* lineage) {
  ArrayArchive archive = load_archive(path);
  if (!archive.metadata.contains("lora")) throw IoError(path.string() + ": not a LoRA adapter archive");
  const auto meta = nlohmann::json::parse(archive.metadata.at("lora"));
  LoRAAdapter adapter;
  adapter.rank = meta.at("rank").get<int>();
  adapter.alpha = meta.at("alpha").get<double>();
  adapter.targets = meta.at("targets").get<std::vector<std::string>>();
  adapter.params = std::move(archive.arrays);
  if (lineage) *lineage = meta.value("lineage", "");
  return adapter;
}

}  // namespace aedit
