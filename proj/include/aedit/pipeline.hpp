// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0
// End-to-end orchestration: configuration, resumable runs of the three editing
// steps, run manifests and batch evaluation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aedit/edit_engine.hpp"
#include "aedit/embedding_opt.hpp"
#include "aedit/eval_clap.hpp"
#include "aedit/finetune.hpp"
#include "aedit/ldm_backend.hpp"
#include "aedit/spectral_io.hpp"
#include "aedit/toy_pretrain.hpp"

namespace aedit {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

struct EditSettings {
  std::string input;
  std::string prompt;
  EditType edit_type = EditType::addition;
  std::vector<MaskInterval> mask;
  std::optional<double> eta;  // unset: sweep the grid and select
  std::string out = "aedit_out";

  friend bool operator==(const EditSettings&, const EditSettings&) = default;
};

/// Everything a run depends on. `opt.seed` and `ft.seed` are not stored; each run
/// derives them (and the sampling seed) from `seed`.
struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  std::string checkpoint;
  MelConfig mel;
  ScheduleConfig schedule;
  OptConfig opt;
  FtConfig ft;
  GenConfig gen;
  std::vector<double> eta_grid = default_eta_grid();
  std::string embedder = "toy-clap-v1";
  EditSettings edit;

  /// Checks everything that can be checked without reading the input audio.
  void validate() const;
  OptConfig stage_opt_config() const;
  FtConfig stage_ft_config() const;
  std::uint64_t sampling_seed() const;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

std::string serialize_config(const PipelineConfig& cfg);
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& cfg);

/// Flat key/value overrides. Keys: input, prompt, edit_type, mask, eta, timesteps,
/// seed, out, lora, lora_rank, checkpoint.
using Overrides = std::map<std::string, std::string>;

void apply_overrides(PipelineConfig& cfg, const Overrides& overrides);
/// AEDIT_<KEY> variables from the process environment.
Overrides env_overrides();
/// Defaults, then the config file, then environment, then flags.
PipelineConfig resolve_config(const std::optional<std::filesystem::path>& config_file, const Overrides& env,
                              const Overrides& flags);

/// Failure inside one pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ArtifactRef {
  std::string path;  // relative to the run directory
  std::string sha256;

  friend bool operator==(const ArtifactRef&, const ArtifactRef&) = default;
};

struct StageRecord {
  std::string name;
  std::string key;  // hash of everything the stage's outputs depend on
  std::map<std::string, ArtifactRef> artifacts;
  bool cache_hit = false;
  double seconds = 0.0;
  double median_step_seconds = 0.0;
};

struct RunManifest {
  int schema_version = kManifestSchemaVersion;
  std::string command;
  std::string config_hash;
  std::map<std::string, std::string> inputs;
  std::vector<StageRecord> stages;
  std::map<std::string, double> results;

  const StageRecord* stage(std::string_view name) const;
  /// Content hash over everything except timings and cache flags.
  std::string hash() const;
  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
};

void save_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& path);
/// Problems found when checking every artifact under `run_dir`; empty when valid.
std::vector<std::string> verify_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir);

/// Hash of the config with paths replaced by the content they point to.
std::string config_hash(const PipelineConfig& cfg);

using LogFn = std::function<void(const std::string&)>;

/// Steps 1 to 3 at the configured eta (or sweep and select when unset). Stages whose
/// key and artifacts match the run directory's previous manifest are reused.
RunManifest cmd_edit(const PipelineConfig& cfg, const LogFn& log = {});
/// Steps 1 and 2, then every grid point scored, plotted and selected.
RunManifest cmd_sweep(const PipelineConfig& cfg, const LogFn& log = {});

/// One row of a batch evaluation. Either `input` and `edited` name audio files, or the
/// scores are given directly (report fixtures).
struct EvalItem {
  std::string edit_type;
  std::string pipeline;
  std::string item;
  std::string prompt;
  std::string input;
  std::string edited;
  std::optional<double> text_clap;
  std::optional<double> audio_clap;
};

std::vector<EvalItem> load_eval_batch(const std::filesystem::path& path);

struct EvalSummary {
  std::vector<ScoreRow> rows;       // items first, then one mean row per (edit type, pipeline)
  std::vector<std::string> skipped;  // diagnostics for unreadable items
};

/// Scores every item, writes `scores.csv` and `report.json` into `out_dir`.
EvalSummary cmd_eval(const std::vector<EvalItem>& items, const JointEmbedder& embedder,
                     const std::filesystem::path& out_dir, const LogFn& log = {});

/// Pretty-printed manifest followed by the verification outcome.
std::string cmd_inspect(const std::filesystem::path& manifest_path, bool* valid = nullptr);

}  // namespace aedit
