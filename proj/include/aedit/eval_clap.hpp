// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

// Text/audio fidelity scoring in a shared audio-text embedding space and
// best-strength selection.

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aedit/spectral_io.hpp"
#include "aedit/tensor.hpp"

namespace aedit {

enum class Modality { audio, text };

struct JointEmbedding {
  Tensor values;
  Modality modality = Modality::audio;
  std::string source_id;
};

struct ScoreReport {
  double text_clap = 0.0;
  double audio_clap = 0.0;
  double sum = 0.0;
  double eta = 0.0;
  std::string embedder_id;
  std::map<std::string, std::string> provenance;
};

/// sum is always text_clap + audio_clap.
ScoreReport make_score_report(double text_clap, double audio_clap, double eta, std::string embedder_id);

class JointEmbedder {
 public:
  virtual ~JointEmbedder() = default;
  virtual JointEmbedding embed_audio(const AudioClip& clip) const = 0;
  virtual JointEmbedding embed_text(std::string_view prompt) const = 0;
  virtual std::string id() const = 0;
};

/// Training-free proxy. Audio: centred per-band log mean energy and per-band temporal
/// spread over 16 coarse mel bands, through a fixed Gaussian projection. Text: anchor
/// keywords map to band-indicator profiles in the same feature space, plus a small
/// hashed bag-of-words term, through the same projection.
class ToyClapEmbedder final : public JointEmbedder {
 public:
  static constexpr std::size_t kCoarseBands = 16;
  static constexpr std::size_t kDim = 64;

  explicit ToyClapEmbedder(MelConfig mel = {});

  JointEmbedding embed_audio(const AudioClip& clip) const override;
  JointEmbedding embed_text(std::string_view prompt) const override;
  std::string id() const override { return "toy-clap-v1"; }

  /// Feature-space profile of a sound class's frequency range.
  std::vector<double> anchor_profile(double lo_hz, double hi_hz) const;

 private:
  MelConfig mel_;
  Tensor projection_;  // [kDim x 2*kCoarseBands]
  Tensor word_hash_;   // [kDim x kHashBuckets]
};

double cosine_similarity(const Tensor& a, const Tensor& b);
/// Cosine between an edited-audio embedding and the prompt's text embedding.
double text_clap(const JointEmbedding& edited_audio, const JointEmbedding& text);
/// Cosine between an edited-audio embedding and the original-audio embedding.
double audio_clap(const JointEmbedding& edited_audio, const JointEmbedding& original_audio);

/// Scores an edit against its prompt and the original clip.
ScoreReport score_edit(const JointEmbedder& embedder, const AudioClip& edited, const AudioClip& original,
                       std::string_view prompt, double eta);

/// Argmax of sum; ties go to the smaller eta.
std::pair<double, ScoreReport> select_eta(const std::vector<ScoreReport>& reports);

struct ScoreRow {
  std::string edit_type;
  std::string pipeline;
  std::string item;
  ScoreReport report;
};

/// Table layout: edit_type,pipeline,item,sum,text,audio (3 decimals).
void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
/// eta,text,audio,sum with full precision, one row per sweep point.
void write_curve_csv(const std::filesystem::path& path, const std::vector<ScoreReport>& reports);
std::vector<ScoreReport> read_curve_csv(const std::filesystem::path& path);
/// Line plot of text/audio/sum against eta.
void write_curve_svg(const std::filesystem::path& path, const std::vector<ScoreReport>& reports,
                     const std::string& title);

}  // namespace aedit
