// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "aedit/tensor.hpp"

namespace aedit {

/// Low-rank pairs for a set of target matrices. For a target W [d_out x d_in] the
/// adapter holds "<target>.lora_A" [rank x d_in] and "<target>.lora_B" [d_out x rank],
/// and the adapted forward is W x + (alpha / rank) B A x.
struct LoRAAdapter {
  int rank = 8;
  double alpha = 16.0;
  std::vector<std::string> targets;
  NamedTensors params;

  double scaling() const { return alpha / rank; }
  std::size_t trainable_count() const { return total_numel(params); }

  static std::string a_key(const std::string& target) { return target + ".lora_A"; }
  static std::string b_key(const std::string& target) { return target + ".lora_B"; }
};

}  // namespace aedit
