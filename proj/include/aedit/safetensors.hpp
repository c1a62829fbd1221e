// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "aedit/tensor.hpp"

namespace aedit {

/// Named arrays plus string metadata, stored in the safetensors layout
/// (u64 header length, JSON header, raw F64 little-endian payload).
struct ArrayArchive {
  NamedTensors arrays;
  std::map<std::string, std::string> metadata;
};

void save_archive(const std::filesystem::path& path, const ArrayArchive& archive);
ArrayArchive load_archive(const std::filesystem::path& path);

}  // namespace aedit
