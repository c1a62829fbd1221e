// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "aedit/tensor.hpp"

namespace aedit {

/// Incremental SHA-256, hex digest.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::byte> bytes);
  Sha256& update(std::string_view text);
  Sha256& update(const Tensor& tensor);  // shape + raw little-endian values
  std::string hex_digest();

 private:
  struct Impl;
  Impl* impl_;
};

std::string sha256_hex(std::string_view text);
std::string hash_tensor(const Tensor& tensor);
std::string hash_named(const NamedTensors& tensors);
std::string hash_file(const std::filesystem::path& path);

}  // namespace aedit
