// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

// Step 3: embedding interpolation, edit generation, inpainting composites, sweeps.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aedit/eval_clap.hpp"
#include "aedit/ldm_backend.hpp"
#include "aedit/spectral_io.hpp"

namespace aedit {

enum class EditType { addition, style_transfer, inpainting };

std::string to_string(EditType type);
EditType edit_type_from_string(const std::string& name);

/// Half-open time interval [start, end) in seconds.
struct MaskInterval {
  double start = 0.0;
  double end = 0.0;
  friend bool operator==(const MaskInterval&, const MaskInterval&) = default;
};

/// Parses "start:end[,start:end...]".
std::vector<MaskInterval> parse_mask(const std::string& text);
std::string format_mask(const std::vector<MaskInterval>& mask);

struct EditRequest {
  AudioClip input;
  std::string prompt;
  EditType edit_type = EditType::addition;
  std::vector<MaskInterval> mask;
  std::optional<double> eta;  // unset: sweep and select
  GenConfig gen;

  void validate() const;
};

struct EditResult {
  double eta = 0.0;
  Latent z_prime;
  MelSpec edited_mel;
  AudioClip edited_audio;
  std::optional<ScoreReport> scores;
  std::map<std::string, std::string> provenance;
};

/// eta * e_target + (1 - eta) * e_opt.
TextEmbedding interpolate(const TextEmbedding& e_target, const TextEmbedding& e_opt, double eta);

/// Interpolates, samples from z noised to gen.start_depth, decodes and vocodes.
/// Throws StateError unless the backend lineage matches e_opt.
EditResult generate_edit(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e_target,
                         const TextEmbedding& e_opt, double eta, const GenConfig& gen, std::uint64_t seed,
                         const Vocoder& vocoder);

/// Frame range [first, last) covered by an interval; endpoints round outward.
std::pair<std::size_t, std::size_t> mask_frames(const MaskInterval& interval, const MelConfig& cfg);
/// Per-frame flags; validates intervals against the mel's duration.
std::vector<bool> mask_frame_flags(const std::vector<MaskInterval>& mask, const MelSpec& mel);

/// Masked frames from `generated`, everything else copied from `input`.
MelSpec inpaint_composite(const MelSpec& input, const MelSpec& generated, const std::vector<MaskInterval>& mask);
/// Masked frames set to log_floor.
MelSpec blank_masked(const MelSpec& mel, const std::vector<MaskInterval>& mask);

std::vector<double> default_eta_grid();

/// One edit per eta, sharing seed and gen so only the embedding varies. Runs up to
/// `workers` eta points concurrently; results follow the order of `etas`.
std::vector<EditResult> eta_sweep(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e_target,
                                  const TextEmbedding& e_opt, const std::vector<double>& etas, const GenConfig& gen,
                                  std::uint64_t seed, const Vocoder& vocoder, unsigned workers = 1);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace aedit
