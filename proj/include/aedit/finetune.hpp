// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

// Step 2: fit the denoiser (all weights or a LoRA adapter) to a latent under a
// frozen optimized embedding.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aedit/embedding_opt.hpp"
#include "aedit/ldm_backend.hpp"
#include "aedit/lora.hpp"

namespace aedit {

enum class FtMode { full, lora };

std::string to_string(FtMode mode);
FtMode ft_mode_from_string(const std::string& name);

struct FtConfig {
  FtMode mode = FtMode::full;
  /// Unset means the mode default: 1e-6 for full, 1e-4 for LoRA.
  std::optional<double> learning_rate;
  int num_steps = 1500;
  std::uint64_t seed = 0;
  int lora_rank = 8;
  double lora_alpha = 16.0;
  /// Empty means every LoRA-targetable matrix of the backend.
  std::vector<std::string> lora_targets;

  double effective_learning_rate() const;
  void validate() const;
  friend bool operator==(const FtConfig&, const FtConfig&) = default;
};

/// Adam on θ (full) or on the adapter (lora; attached from cfg when absent).
/// Binds the backend lineage to e_opt.
LossTrace finetune(DiffusionBackend& backend, const Latent& z, const TextEmbedding& e_opt, const FtConfig& cfg);

/// A ~ N(0, 1/d_in) seeded, B = 0. Replaces any adapter already attached.
LoRAAdapter attach_lora(DiffusionBackend& backend, int rank, double alpha, const std::vector<std::string>& targets,
                        std::uint64_t seed = 0);
/// Removes and returns the attached adapter.
LoRAAdapter detach_lora(DiffusionBackend& backend);
/// Folds W += (alpha/rank) B A into the base weights and removes the adapter.
const NamedTensors& merge_lora(DiffusionBackend& backend);

void save_adapter(const std::filesystem::path& path, const LoRAAdapter& adapter, const std::string& lineage);
LoRAAdapter load_adapter(const std::filesystem::path& path, std::string* lineage = nullptr);

}  // namespace aedit
