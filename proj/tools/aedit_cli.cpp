// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0
// aedit command-line tool: edit, sweep, eval, inspect, pretrain, config.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "aedit/errors.hpp"
#include "aedit/eval_clap.hpp"
#include "aedit/pipeline.hpp"
#include "aedit/toy_pretrain.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct EditFlags {
  std::string config;
  std::string input, prompt, edit_type, mask, eta, out, checkpoint;
  int timesteps = 0;
  std::uint64_t seed = 0;
  bool lora = false;
  int lora_rank = 0;
};

void add_edit_flags(CLI::App* cmd, EditFlags& f) {
  cmd->add_option("--config", f.config, "Pipeline config (JSON)");
  cmd->add_option("--input", f.input, "Input audio (WAV)");
  cmd->add_option("--prompt", f.prompt, "Target prompt");
  cmd->add_option("--edit-type", f.edit_type, "addition, style_transfer or inpainting");
  cmd->add_option("--mask", f.mask, "start:end[,start:end] in seconds (inpainting)");
  cmd->add_option("--eta", f.eta, "Edit strength in [0,1], or auto");
  cmd->add_option("--timesteps", f.timesteps, "Noising depth and sampler steps (default 200)");
  cmd->add_option("--seed", f.seed, "Root seed");
  cmd->add_option("--out", f.out, "Run directory");
  cmd->add_flag("--lora,!--no-lora", f.lora, "Fine-tune a LoRA adapter instead of all weights");
  cmd->add_option("--lora-rank", f.lora_rank, "LoRA rank");
  cmd->add_option("--checkpoint", f.checkpoint, "Pretrained backend checkpoint");
}

aedit::Overrides collect_flags(const CLI::App* cmd, const EditFlags& f) {
  aedit::Overrides out;
  auto set = [&](const char* flag, const char* key, const std::string& value) {
    if (cmd->count(flag) > 0) out[key] = value;
  };
  set("--input", "input", f.input);
  set("--prompt", "prompt", f.prompt);
  set("--edit-type", "edit_type", f.edit_type);
  set("--mask", "mask", f.mask);
  set("--eta", "eta", f.eta);
  set("--timesteps", "timesteps", std::to_string(f.timesteps));
  set("--seed", "seed", std::to_string(f.seed));
  set("--out", "out", f.out);
  set("--lora", "lora", f.lora ? "1" : "0");
  set("--lora-rank", "lora_rank", std::to_string(f.lora_rank));
  set("--checkpoint", "checkpoint", f.checkpoint);
  return out;
}

aedit::PipelineConfig resolve(const CLI::App* cmd, const EditFlags& f) {
  std::optional<std::filesystem::path> file;
  if (!f.config.empty()) {
    file = f.config;
  } else if (const char* env = std::getenv("AEDIT_CONFIG")) {
    file = env;
  }
  return aedit::resolve_config(file, aedit::env_overrides(), collect_flags(cmd, f));
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

void print_manifest(const aedit::RunManifest& m) {
  for (const auto& s : m.stages)
    std::printf("%-14s %s %8.2fs\n", s.name.c_str(), s.cache_hit ? "cached" : "ran   ", s.seconds);
  for (const auto& [k, v] : m.results) std::printf("%s = %.6f\n", k.c_str(), v);
  std::printf("manifest_hash = %s\n", m.hash().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-prompted audio editing"};
  app.require_subcommand(1);

  EditFlags edit_flags, sweep_flags, config_flags;
  auto* edit = app.add_subcommand("edit", "Optimize, fine-tune and generate an edit");
  add_edit_flags(edit, edit_flags);
  auto* sweep = app.add_subcommand("sweep", "Generate and score every eta on the grid");
  add_edit_flags(sweep, sweep_flags);
  auto* config = app.add_subcommand("config", "Print the resolved pipeline config");
  add_edit_flags(config, config_flags);

  std::string batch, eval_out = "aedit_eval";
  auto* eval = app.add_subcommand("eval", "Score a batch of (input, edited, prompt) items");
  eval->add_option("--batch", batch, "Batch description (JSON)")->required();
  eval->add_option("--out", eval_out, "Report directory");

  std::string manifest_path;
  auto* inspect = app.add_subcommand("inspect", "Print and verify a run manifest");
  inspect->add_option("manifest", manifest_path, "manifest.json or run directory")->required();

  aedit::PretrainConfig pretrain_cfg;
  std::string pretrain_out, pretrain_config;
  auto* pretrain = app.add_subcommand("pretrain", "Train the toy backend on the synthetic corpus");
  pretrain->add_option("--out", pretrain_out, "Checkpoint path (.safetensors)")->required();
  pretrain->add_option("--steps", pretrain_cfg.steps, "Training steps");
  pretrain->add_option("--seed", pretrain_cfg.seed, "Seed");
  pretrain->add_option("--config", pretrain_config, "Pipeline config supplying mel and schedule settings");

  CLI11_PARSE(app, argc, argv);

  try {
    if (edit->parsed()) {
      print_manifest(aedit::cmd_edit(resolve(edit, edit_flags), log_line));
    } else if (sweep->parsed()) {
      print_manifest(aedit::cmd_sweep(resolve(sweep, sweep_flags), log_line));
    } else if (config->parsed()) {
      std::cout << aedit::serialize_config(resolve(config, config_flags));
    } else if (eval->parsed()) {
      const aedit::ToyClapEmbedder embedder;
      const auto summary = aedit::cmd_eval(aedit::load_eval_batch(batch), embedder, eval_out, log_line);
      std::printf("%-16s %-12s %-10s %6s %6s %6s\n", "edit_type", "pipeline", "item", "sum", "text", "audio");
      for (const auto& r : summary.rows)
        std::printf("%-16s %-12s %-10s %6.3f %6.3f %6.3f\n", r.edit_type.c_str(), r.pipeline.c_str(), r.item.c_str(),
                    r.report.sum, r.report.text_clap, r.report.audio_clap);
      std::printf("scored %zu rows, skipped %zu items\n", summary.rows.size(), summary.skipped.size());
    } else if (inspect->parsed()) {
      std::filesystem::path p = manifest_path;
      if (std::filesystem::is_directory(p)) p /= "manifest.json";
      bool valid = false;
      std::cout << aedit::cmd_inspect(p, &valid);
      return valid ? 0 : kExitFailure;
    } else if (pretrain->parsed()) {
      if (!pretrain_config.empty()) {
        const auto cfg = aedit::load_config(pretrain_config);
        pretrain_cfg.mel = cfg.mel;
        pretrain_cfg.schedule = cfg.schedule;
      }
      const auto backend = aedit::pretrain_toy_backend(pretrain_cfg, [&](int step, double loss) {
        if (step % 200 == 0 || step == pretrain_cfg.steps) std::fprintf(stderr, "step %d loss %.4f\n", step, loss);
      });
      backend.save(pretrain_out);
      std::printf("wrote %s\n", pretrain_out.c_str());
    }
  } catch (const aedit::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const aedit::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
