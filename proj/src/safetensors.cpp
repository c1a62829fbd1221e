// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/safetensors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "aedit/errors.hpp"

namespace aedit {

static_assert(std::endian::native == std::endian::little, "archive payload is little-endian");

using nlohmann::json;

void save_archive(const std::filesystem::path& path, const ArrayArchive& archive) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.arrays) {
    std::uint64_t bytes = t.numel() * sizeof(double);
    header[name] = {{"dtype", "F64"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!archive.metadata.empty()) header["__metadata__"] = archive.metadata;
  std::string text = header.dump();
  // Payload starts 8-byte aligned.
  while ((text.size() % 8) != 0) text += ' ';

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : archive.arrays)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!out) throw IoError("write failed for " + path.string());
}

ArrayArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ULL << 30)) throw IoError(path.string() + ": not an array archive");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad header: " + e.what());
  }
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  ArrayArchive archive;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      archive.metadata = entry.get<std::map<std::string, std::string>>();
      continue;
    }
    if (entry.at("dtype") != "F64") throw IoError(path.string() + ": unsupported dtype for " + name);
    Shape shape = entry.at("shape").get<Shape>();
    auto begin = entry.at("data_offsets")[0].get<std::uint64_t>();
    auto end = entry.at("data_offsets")[1].get<std::uint64_t>();
    if (end > payload.size() || end - begin != shape_numel(shape) * sizeof(double))
      throw IoError(path.string() + ": bad offsets for " + name);
    Tensor t(shape);
    std::memcpy(t.data.data(), payload.data() + begin, end - begin);
    archive.arrays.emplace(name, std::move(t));
  }
  return archive;
}

}  // namespace aedit
