// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "aedit/errors.hpp"
#include "aedit/hashing.hpp"
#include "aedit/rng.hpp"
#include "aedit/safetensors.hpp"
#include "aedit/toy_backend.hpp"
#include "aedit/toy_sounds.hpp"

namespace aedit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json mel_to_json(const MelConfig& m) {
  return {{"sample_rate", m.sample_rate}, {"n_fft", m.n_fft},   {"hop", m.hop},
          {"n_mels", m.n_mels},           {"fmin", m.fmin},     {"fmax", m.fmax},
          {"log_floor", m.log_floor},     {"center", m.center}};
}

MelConfig mel_from_json(const json& j) {
  MelConfig m;
  m.sample_rate = j.value("sample_rate", m.sample_rate);
  m.n_fft = j.value("n_fft", m.n_fft);
  m.hop = j.value("hop", m.hop);
  m.n_mels = j.value("n_mels", m.n_mels);
  m.fmin = j.value("fmin", m.fmin);
  m.fmax = j.value("fmax", m.fmax);
  m.log_floor = j.value("log_floor", m.log_floor);
  m.center = j.value("center", m.center);
  return m;
}

json config_to_json(const PipelineConfig& c) {
  json mask = json::array();
  for (const auto& m : c.edit.mask) mask.push_back({m.start, m.end});
  return {
      {"schema_version", c.schema_version},
      {"seed", c.seed},
      {"checkpoint", c.checkpoint},
      {"mel", mel_to_json(c.mel)},
      {"schedule", {{"steps", c.schedule.steps}, {"beta_start", c.schedule.beta_start},
                    {"beta_end", c.schedule.beta_end}}},
      {"embedding_opt", {{"learning_rate", c.opt.learning_rate}, {"num_steps", c.opt.num_steps},
                         {"batch_noise_draws", c.opt.batch_noise_draws}}},
      {"finetune", {{"mode", to_string(c.ft.mode)},
                    {"learning_rate", c.ft.learning_rate ? json(*c.ft.learning_rate) : json(nullptr)},
                    {"num_steps", c.ft.num_steps},
                    {"lora_rank", c.ft.lora_rank},
                    {"lora_alpha", c.ft.lora_alpha},
                    {"lora_targets", c.ft.lora_targets}}},
      {"generation", {{"num_steps", c.gen.num_steps}, {"start_depth", c.gen.start_depth},
                      {"guidance_scale", c.gen.guidance_scale}}},
      {"eta_grid", c.eta_grid},
      {"embedder", c.embedder},
      {"edit", {{"input", c.edit.input},
                {"prompt", c.edit.prompt},
                {"edit_type", to_string(c.edit.edit_type)},
                {"mask", mask},
                {"eta", c.edit.eta ? json(*c.edit.eta) : json("auto")},
                {"out", c.edit.out}}},
  };
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  c.schema_version = j.value("schema_version", 0);
  if (c.schema_version != kConfigSchemaVersion)
    throw ValidationError("config: unsupported schema_version " + std::to_string(c.schema_version));
  c.seed = j.value("seed", c.seed);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  if (j.contains("mel")) c.mel = mel_from_json(j.at("mel"));
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    c.schedule.steps = s.value("steps", c.schedule.steps);
    c.schedule.beta_start = s.value("beta_start", c.schedule.beta_start);
    c.schedule.beta_end = s.value("beta_end", c.schedule.beta_end);
  }
  if (j.contains("embedding_opt")) {
    const auto& o = j.at("embedding_opt");
    c.opt.learning_rate = o.value("learning_rate", c.opt.learning_rate);
    c.opt.num_steps = o.value("num_steps", c.opt.num_steps);
    c.opt.batch_noise_draws = o.value("batch_noise_draws", c.opt.batch_noise_draws);
  }
  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    if (f.contains("mode")) c.ft.mode = ft_mode_from_string(f.at("mode").get<std::string>());
    if (f.contains("learning_rate") && !f.at("learning_rate").is_null())
      c.ft.learning_rate = f.at("learning_rate").get<double>();
    c.ft.num_steps = f.value("num_steps", c.ft.num_steps);
    c.ft.lora_rank = f.value("lora_rank", c.ft.lora_rank);
    c.ft.lora_alpha = f.value("lora_alpha", c.ft.lora_alpha);
    c.ft.lora_targets = f.value("lora_targets", c.ft.lora_targets);
  }
  if (j.contains("generation")) {
    const auto& g = j.at("generation");
    c.gen.num_steps = g.value("num_steps", c.gen.num_steps);
    c.gen.start_depth = g.value("start_depth", c.gen.start_depth);
    c.gen.guidance_scale = g.value("guidance_scale", c.gen.guidance_scale);
  }
  c.eta_grid = j.value("eta_grid", c.eta_grid);
  c.embedder = j.value("embedder", c.embedder);
  if (j.contains("edit")) {
    const auto& e = j.at("edit");
    c.edit.input = e.value("input", c.edit.input);
    c.edit.prompt = e.value("prompt", c.edit.prompt);
    if (e.contains("edit_type")) c.edit.edit_type = edit_type_from_string(e.at("edit_type").get<std::string>());
    if (e.contains("mask")) {
      const auto& m = e.at("mask");
      if (m.is_string()) {
        c.edit.mask = parse_mask(m.get<std::string>());
      } else {
        for (const auto& pair : m) c.edit.mask.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
      }
    }
    if (e.contains("eta")) {
      const auto& eta = e.at("eta");
      if (eta.is_string()) {
        if (eta.get<std::string>() != "auto") throw ValidationError("config: eta must be a number or \"auto\"");
        c.edit.eta.reset();
      } else {
        c.edit.eta = eta.get<double>();
      }
    }
    c.edit.out = e.value("out", c.edit.out);
  }
  return c;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("override " + key + ": expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("override " + key + ": expected an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, std::string value) {
  std::transform(value.begin(), value.end(), value.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw ValidationError("override " + key + ": expected a boolean, got '" + value + "'");
}

const std::vector<std::string>& override_keys() {
  static const std::vector<std::string> keys = {"input", "prompt", "edit_type", "mask", "eta", "timesteps",
                                                "seed",  "out",    "lora",      "lora_rank", "checkpoint"};
  return keys;
}

// ---------------------------------------------------------------- run state

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_loss_csv(const fs::path& path, const LossTrace& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < trace.loss.size(); ++i) out << i + 1 << ',' << trace.loss[i] << '\n';
  write_text(path, out.str());
}

void save_mel(const fs::path& path, const MelSpec& mel) {
  ArrayArchive archive;
  archive.arrays.emplace("mel", mel.values);
  archive.metadata["mel_config"] = mel_to_json(mel.config).dump();
  save_archive(path, archive);
}

MelSpec load_mel(const fs::path& path) {
  const ArrayArchive archive = load_archive(path);
  if (!archive.arrays.contains("mel") || !archive.metadata.contains("mel_config"))
    throw IoError(path.string() + ": not a mel archive");
  return {archive.arrays.at("mel"), mel_from_json(json::parse(archive.metadata.at("mel_config")))};
}

std::string eta_label(double eta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", eta);
  return buf;
}

class Run {
 public:
  Run(const PipelineConfig& cfg, std::string command, const LogFn& log)
      : cfg_(cfg), dir_(cfg.edit.out), log_(log) {
    manifest_.command = std::move(command);
    const fs::path previous = dir_ / "manifest.json";
    if (fs::exists(previous)) {
      try {
        previous_ = load_manifest(previous);
      } catch (const std::exception& e) {
        say("ignoring unreadable previous manifest: " + std::string(e.what()));
      }
    }
  }

  const fs::path& dir() const { return dir_; }
  RunManifest& manifest() { return manifest_; }
  const std::optional<RunManifest>& previous() const { return previous_; }

  void say(const std::string& msg) const {
    if (log_) log_(msg);
  }

  /// Returns the previous record when its key matches and every artifact verifies.
  std::optional<StageRecord> reusable(const std::string& name, const std::string& key) const {
    if (!previous_) return std::nullopt;
    const StageRecord* rec = previous_->stage(name);
    if (!rec || rec->key != key) return std::nullopt;
    for (const auto& [label, ref] : rec->artifacts) {
      const fs::path p = dir_ / ref.path;
      if (!fs::exists(p) || hash_file(p) != ref.sha256) return std::nullopt;
    }
    return *rec;
  }

  ArtifactRef artifact(const std::string& relative) const {
    return {relative, hash_file(dir_ / relative)};
  }

  /// Runs `body` with stage-tagged errors; the manifest is flushed after every stage.
  template <class Body>
  void stage(const std::string& name, const std::string& key, Body&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    StageRecord rec;
    try {
      if (auto prev = reusable(name, key)) {
        rec = *prev;
        rec.cache_hit = true;
        body(&rec, true);
      } else {
        rec = StageRecord{name, key, {}, false, 0.0, 0.0};
        body(&rec, false);
      }
    } catch (const StageError&) {
      flush();
      throw;
    } catch (const std::exception& e) {
      flush();
      throw StageError(name, e.what());
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    say(name + (rec.cache_hit ? ": cache hit" : ": done") + " (" + std::to_string(rec.seconds) + " s)");
    manifest_.stages.push_back(std::move(rec));
    flush();
  }

  void flush() const { save_manifest(dir_ / "manifest.json", manifest_); }

 private:
  const PipelineConfig& cfg_;
  fs::path dir_;
  LogFn log_;
  RunManifest manifest_;
  std::optional<RunManifest> previous_;
};

constexpr int kEvalSampleRate = 16000;

std::string json_hash(const json& j) { return sha256_hex(j.dump()); }

RunManifest run_pipeline(const PipelineConfig& cfg, const std::string& command, const LogFn& log) {
  cfg.validate();
  Run run(cfg, command, log);
  const fs::path& dir = run.dir();
  fs::create_directories(dir);
  RunManifest& manifest = run.manifest();

  std::string audio_hash, checkpoint_hash;
  try {
    if (!fs::exists(cfg.edit.input)) throw IoError("input not found: " + cfg.edit.input);
    if (!fs::exists(cfg.checkpoint)) throw IoError("checkpoint not found: " + cfg.checkpoint);
    audio_hash = hash_file(cfg.edit.input);
    checkpoint_hash = hash_file(cfg.checkpoint);
  } catch (const std::exception& e) {
    throw StageError("inputs", e.what());
  }
  manifest.config_hash = config_hash(cfg);
  manifest.inputs = {{"audio", audio_hash}, {"checkpoint", checkpoint_hash}};

  std::optional<ToyBackend> backend;
  try {
    backend = ToyBackend::load(cfg.checkpoint);
    if (!(backend->mel_config() == cfg.mel))
      throw ValidationError("checkpoint mel configuration differs from the pipeline config");
    if (!(backend->schedule().config() == cfg.schedule))
      throw ValidationError("checkpoint noise schedule differs from the pipeline config");
  } catch (const std::exception& e) {
    throw StageError("load", e.what());
  }
  const MelGeometry geometry = backend->mel_geometry();

  // Prepare: crop/pad the input to the backend's clip length, blank the mask for inpainting.
  AudioClip reference;
  MelSpec input_mel;
  Latent z;
  const std::string prepare_key =
      json_hash({{"audio", audio_hash},
                 {"mel", mel_to_json(cfg.mel)},
                 {"frames", geometry.n_frames},
                 {"edit_type", to_string(cfg.edit.edit_type)},
                 {"mask", format_mask(cfg.edit.mask)}});
  run.stage("prepare", prepare_key, [&](StageRecord* rec, bool hit) {
    AudioClip clip = load_audio(cfg.edit.input, cfg.mel.sample_rate);
    const auto n = static_cast<std::size_t>(
        std::llround(duration_for_frames(geometry.n_frames, cfg.mel) * cfg.mel.sample_rate));
    clip.samples.resize(n, 0.0);
    input_mel = fit_mel_frames(mel_spectrogram(clip, cfg.mel), geometry.n_frames);
    const auto flags = mask_frame_flags(cfg.edit.mask, input_mel);  // validates the mask
    if (cfg.edit.edit_type == EditType::inpainting) {
      // Masked audio is zeroed in the reference so it cannot influence scoring.
      const double fps = static_cast<double>(cfg.mel.sample_rate) / cfg.mel.hop;
      for (const auto& m : cfg.edit.mask) {
        const auto [first, last] = mask_frames(m, cfg.mel);
        const auto a = static_cast<std::size_t>(std::llround(first / fps * cfg.mel.sample_rate));
        const auto b = std::min(clip.samples.size(),
                                static_cast<std::size_t>(std::llround(last / fps * cfg.mel.sample_rate)));
        for (std::size_t i = a; i < b; ++i) clip.samples[i] = 0.0;
      }
    }
    (void)flags;
    reference = std::move(clip);
    if (hit) input_mel = load_mel(dir / rec->artifacts.at("input_mel").path);
    const MelSpec source =
        cfg.edit.edit_type == EditType::inpainting ? blank_masked(input_mel, cfg.edit.mask) : input_mel;
    z = backend->encode(source);
    if (!hit) {
      save_mel(dir / "input_mel.safetensors", input_mel);
      rec->artifacts["input_mel"] = run.artifact("input_mel.safetensors");
    }
  });

  // Step 1.
  const TextEmbedding e_target = backend->encode_text(cfg.edit.prompt);
  TextEmbedding e_opt;
  const OptConfig opt = cfg.stage_opt_config();
  const std::string opt_key = json_hash({{"prepare", prepare_key},
                                         {"checkpoint", checkpoint_hash},
                                         {"prompt", cfg.edit.prompt},
                                         {"learning_rate", opt.learning_rate},
                                         {"num_steps", opt.num_steps},
                                         {"batch_noise_draws", opt.batch_noise_draws},
                                         {"seed", opt.seed}});
  run.stage("embedding_opt", opt_key, [&](StageRecord* rec, bool hit) {
    if (hit) {
      const ArrayArchive archive = load_archive(dir / rec->artifacts.at("e_opt").path);
      e_opt = TextEmbedding{archive.arrays.at("e_opt"), EmbeddingRole::optimized};
      return;
    }
    auto [e, trace] = optimize_embedding(*backend, z, e_target, opt);
    e_opt = std::move(e);
    save_archive(dir / "e_opt.safetensors", ArrayArchive{{{"e_opt", e_opt.values}, {"e_target", e_target.values}},
                                                         {{"prompt", cfg.edit.prompt}}});
    write_loss_csv(dir / "embedding_opt_loss.csv", trace);
    rec->artifacts["e_opt"] = run.artifact("e_opt.safetensors");
    rec->artifacts["loss"] = run.artifact("embedding_opt_loss.csv");
    rec->median_step_seconds = median(trace.seconds);
  });

  // Step 2.
  const FtConfig ft = cfg.stage_ft_config();
  const std::string ft_key = json_hash({{"embedding_opt", opt_key},
                                        {"mode", to_string(ft.mode)},
                                        {"learning_rate", ft.effective_learning_rate()},
                                        {"num_steps", ft.num_steps},
                                        {"lora_rank", ft.lora_rank},
                                        {"lora_alpha", ft.lora_alpha},
                                        {"lora_targets", ft.lora_targets},
                                        {"seed", ft.seed}});
  run.stage("finetune", ft_key, [&](StageRecord* rec, bool hit) {
    const std::string lineage = hash_embedding(e_opt);
    if (ft.mode == FtMode::lora) {
      if (hit) {
        std::string stored;
        backend->set_adapter(load_adapter(dir / rec->artifacts.at("adapter").path, &stored));
        if (stored != lineage) throw StateError("stored adapter belongs to a different optimized embedding");
        backend->set_lineage(lineage);
        return;
      }
      const LossTrace trace = finetune(*backend, z, e_opt, ft);
      save_adapter(dir / "lora_adapter.safetensors", *backend->adapter(), lineage);
      write_loss_csv(dir / "finetune_loss.csv", trace);
      rec->artifacts["adapter"] = run.artifact("lora_adapter.safetensors");
      rec->artifacts["loss"] = run.artifact("finetune_loss.csv");
      rec->median_step_seconds = median(trace.seconds);
      return;
    }
    // Full fine-tuning is stored as a delta; both paths apply it the same way so that
    // a resumed run matches an uncached one bit for bit.
    const NamedTensors base = backend->parameters();
    NamedTensors delta;
    if (hit) {
      delta = load_archive(dir / rec->artifacts.at("delta").path).arrays;
    } else {
      const LossTrace trace = finetune(*backend, z, e_opt, ft);
      for (const auto& [name, value] : backend->parameters()) delta.emplace(name, value - base.at(name));
      save_archive(dir / "finetune_delta.safetensors", ArrayArchive{delta, {{"lineage", lineage}}});
      write_loss_csv(dir / "finetune_loss.csv", trace);
      rec->artifacts["delta"] = run.artifact("finetune_delta.safetensors");
      rec->artifacts["loss"] = run.artifact("finetune_loss.csv");
      rec->median_step_seconds = median(trace.seconds);
    }
    for (auto& [name, value] : backend->parameters()) {
      if (!delta.contains(name)) throw IoError("fine-tune delta is missing '" + name + "'");
      value = base.at(name) + delta.at(name);
    }
    backend->set_lineage(lineage);
  });

  // Step 3.
  const bool sweep = command == "sweep" || !cfg.edit.eta;
  const std::vector<double> etas = sweep ? cfg.eta_grid : std::vector<double>{*cfg.edit.eta};
  const std::uint64_t gen_seed = cfg.sampling_seed();
  const std::string gen_key = json_hash({{"finetune", ft_key},
                                         {"command", command},
                                         {"etas", etas},
                                         {"num_steps", cfg.gen.num_steps},
                                         {"start_depth", cfg.gen.start_depth},
                                         {"guidance_scale", cfg.gen.guidance_scale},
                                         {"seed", gen_seed},
                                         {"embedder", cfg.embedder}});
  run.stage("generate", gen_key, [&](StageRecord* rec, bool hit) {
    if (hit) {
      manifest.results = run.previous()->results;
      return;
    }
    const ToyVocoder vocoder(cfg.mel);
    const ToyClapEmbedder embedder(cfg.mel);
    const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                             static_cast<unsigned>(etas.size())));
    std::vector<EditResult> results =
        eta_sweep(*backend, z, e_target, e_opt, etas, cfg.gen, gen_seed, vocoder, workers);
    std::vector<ScoreReport> reports;
    for (auto& r : results) {
      if (cfg.edit.edit_type == EditType::inpainting) {
        r.edited_mel = inpaint_composite(input_mel, r.edited_mel, cfg.edit.mask);
        r.edited_audio = vocode(r.edited_mel, vocoder);
      }
      r.scores = score_edit(embedder, r.edited_audio, reference, cfg.edit.prompt, r.eta);
      reports.push_back(*r.scores);
    }
    const auto [best_eta, best] = select_eta(reports);
    const auto chosen = std::find_if(results.begin(), results.end(), [&](auto& r) { return r.eta == best_eta; });

    save_wav(dir / "edited.wav", chosen->edited_audio, WavEncoding::float32);
    save_mel(dir / "edited_mel.safetensors", chosen->edited_mel);
    const std::string pipeline = ft.mode == FtMode::lora ? "ours-lora" : "ours";
    std::vector<ScoreRow> rows;
    for (const auto& r : reports) rows.push_back({to_string(cfg.edit.edit_type), pipeline, "eta=" + eta_label(r.eta), r});
    write_score_csv(dir / "scores.csv", rows);
    rec->artifacts["edited_audio"] = run.artifact("edited.wav");
    rec->artifacts["edited_mel"] = run.artifact("edited_mel.safetensors");
    rec->artifacts["scores"] = run.artifact("scores.csv");
    if (sweep) {
      write_curve_csv(dir / "curve.csv", reports);
      write_curve_svg(dir / "curve.svg", reports, "scores vs eta: " + cfg.edit.prompt);
      rec->artifacts["curve"] = run.artifact("curve.csv");
      rec->artifacts["plot"] = run.artifact("curve.svg");
    }
    if (command == "sweep") {
      for (const auto& r : results) {
        const std::string rel = "sweep/eta_" + eta_label(r.eta) + ".wav";
        save_wav(dir / rel, r.edited_audio, WavEncoding::float32);
        rec->artifacts["eta_" + eta_label(r.eta)] = run.artifact(rel);
      }
    }
    manifest.results = {{"selected_eta", best_eta},
                        {"text_clap", best.text_clap},
                        {"audio_clap", best.audio_clap},
                        {"sum", best.sum}};
  });
  run.flush();
  return manifest;
}

}  // namespace

// ---------------------------------------------------------------- config

void PipelineConfig::validate() const {
  if (schema_version != kConfigSchemaVersion)
    throw ValidationError("config: unsupported schema_version " + std::to_string(schema_version));
  mel.validate();
  (void)NoiseSchedule(schedule);
  opt.validate();
  ft.validate();
  gen.validate(true, schedule.steps);
  if (eta_grid.empty()) throw ValidationError("config: eta_grid is empty");
  for (std::size_t i = 0; i < eta_grid.size(); ++i) {
    if (!(eta_grid[i] >= 0.0 && eta_grid[i] <= 1.0)) throw ValidationError("config: eta_grid values must lie in [0, 1]");
    if (i > 0 && !(eta_grid[i] > eta_grid[i - 1])) throw ValidationError("config: eta_grid must be increasing");
  }
  if (embedder != "toy-clap-v1") throw ValidationError("config: unknown embedder '" + embedder + "'");
  if (edit.input.empty()) throw ValidationError("edit: --input is required");
  if (edit.prompt.empty()) throw ValidationError("edit: --prompt is required");
  if (checkpoint.empty()) throw ValidationError("config: checkpoint is required (see `aedit pretrain`)");
  if (edit.out.empty()) throw ValidationError("edit: --out is required");
  if (edit.eta && !(*edit.eta >= 0.0 && *edit.eta <= 1.0)) throw ValidationError("edit: eta must lie in [0, 1]");
  if (edit.edit_type == EditType::inpainting && edit.mask.empty())
    throw ValidationError("edit: inpainting requires --mask");
  if (edit.edit_type != EditType::inpainting && !edit.mask.empty())
    throw ValidationError("edit: --mask is only valid with --edit-type inpainting");
}

OptConfig PipelineConfig::stage_opt_config() const {
  OptConfig out = opt;
  out.seed = derive_seed(seed, "embedding-opt");
  return out;
}

FtConfig PipelineConfig::stage_ft_config() const {
  FtConfig out = ft;
  out.seed = derive_seed(seed, "fine-tune");
  return out;
}

std::uint64_t PipelineConfig::sampling_seed() const { return derive_seed(seed, "sampling"); }

std::string serialize_config(const PipelineConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

PipelineConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

PipelineConfig load_config(const fs::path& path) { return parse_config(read_text(path)); }

void save_config(const fs::path& path, const PipelineConfig& cfg) { write_text(path, serialize_config(cfg)); }

void apply_overrides(PipelineConfig& cfg, const Overrides& overrides) {
  for (const auto& [key, value] : overrides) {
    if (key == "input") {
      cfg.edit.input = value;
    } else if (key == "prompt") {
      cfg.edit.prompt = value;
    } else if (key == "edit_type") {
      cfg.edit.edit_type = edit_type_from_string(value);
    } else if (key == "mask") {
      cfg.edit.mask = parse_mask(value);
    } else if (key == "eta") {
      if (value == "auto") {
        cfg.edit.eta.reset();
      } else {
        cfg.edit.eta = parse_double(key, value);
      }
    } else if (key == "timesteps") {
      const auto steps = static_cast<int>(parse_int(key, value));
      cfg.gen.num_steps = steps;
      cfg.gen.start_depth = steps;
    } else if (key == "seed") {
      const long long seed = parse_int(key, value);
      if (seed < 0) throw ValidationError("override seed: must be >= 0");
      cfg.seed = static_cast<std::uint64_t>(seed);
    } else if (key == "out") {
      cfg.edit.out = value;
    } else if (key == "lora") {
      cfg.ft.mode = parse_bool(key, value) ? FtMode::lora : FtMode::full;
    } else if (key == "lora_rank") {
      cfg.ft.lora_rank = static_cast<int>(parse_int(key, value));
    } else if (key == "checkpoint") {
      cfg.checkpoint = value;
    } else {
      throw ValidationError("unknown override key '" + key + "'");
    }
  }
}

Overrides env_overrides() {
  Overrides out;
  for (const auto& key : override_keys()) {
    std::string name = "AEDIT_" + key;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::toupper(ch); });
    if (const char* v = std::getenv(name.c_str())) out[key] = v;
  }
  return out;
}

PipelineConfig resolve_config(const std::optional<fs::path>& config_file, const Overrides& env,
                              const Overrides& flags) {
  PipelineConfig cfg = config_file ? load_config(*config_file) : PipelineConfig{};
  apply_overrides(cfg, env);
  apply_overrides(cfg, flags);
  return cfg;
}

std::string config_hash(const PipelineConfig& cfg) {
  json j = config_to_json(cfg);
  j["edit"].erase("out");
  j["edit"]["input"] = fs::exists(cfg.edit.input) ? hash_file(cfg.edit.input) : cfg.edit.input;
  j["checkpoint"] = fs::exists(cfg.checkpoint) ? hash_file(cfg.checkpoint) : cfg.checkpoint;
  return json_hash(j);
}

// ---------------------------------------------------------------- manifest

StageError::StageError(std::string stage, const std::string& message)
    : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}

const StageRecord* RunManifest::stage(std::string_view name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

namespace {

json manifest_json(const RunManifest& m, bool with_timing) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    json artifacts = json::object();
    for (const auto& [label, ref] : s.artifacts) artifacts[label] = {{"path", ref.path}, {"sha256", ref.sha256}};
    json entry = {{"name", s.name}, {"key", s.key}, {"artifacts", artifacts}};
    if (with_timing) {
      entry["cache_hit"] = s.cache_hit;
      entry["seconds"] = s.seconds;
      entry["median_step_seconds"] = s.median_step_seconds;
    }
    stages.push_back(std::move(entry));
  }
  return {{"schema_version", m.schema_version}, {"command", m.command}, {"config_hash", m.config_hash},
          {"inputs", m.inputs},                 {"stages", stages},     {"results", m.results}};
}

}  // namespace

std::string RunManifest::hash() const { return json_hash(manifest_json(*this, false)); }

std::string RunManifest::to_json() const {
  json j = manifest_json(*this, true);
  j["manifest_hash"] = hash();
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    RunManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchemaVersion)
      throw ValidationError("manifest: unsupported schema_version " + std::to_string(m.schema_version));
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.results = j.at("results").get<std::map<std::string, double>>();
    for (const auto& s : j.at("stages")) {
      StageRecord rec;
      rec.name = s.at("name").get<std::string>();
      rec.key = s.at("key").get<std::string>();
      for (const auto& [label, ref] : s.at("artifacts").items())
        rec.artifacts[label] = {ref.at("path").get<std::string>(), ref.at("sha256").get<std::string>()};
      rec.cache_hit = s.value("cache_hit", false);
      rec.seconds = s.value("seconds", 0.0);
      rec.median_step_seconds = s.value("median_step_seconds", 0.0);
      m.stages.push_back(std::move(rec));
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
}

void save_manifest(const fs::path& path, const RunManifest& manifest) { write_text(path, manifest.to_json()); }

RunManifest load_manifest(const fs::path& path) { return RunManifest::from_json(read_text(path)); }

std::vector<std::string> verify_manifest(const RunManifest& manifest, const fs::path& run_dir) {
  std::vector<std::string> problems;
  for (const auto& s : manifest.stages) {
    for (const auto& [label, ref] : s.artifacts) {
      const fs::path p = run_dir / ref.path;
      if (!fs::exists(p)) {
        problems.push_back(s.name + "/" + label + ": missing " + ref.path);
      } else if (hash_file(p) != ref.sha256) {
        problems.push_back(s.name + "/" + label + ": hash mismatch for " + ref.path);
      }
    }
  }
  return problems;
}

// ---------------------------------------------------------------- commands

RunManifest cmd_edit(const PipelineConfig& cfg, const LogFn& log) { return run_pipeline(cfg, "edit", log); }

RunManifest cmd_sweep(const PipelineConfig& cfg, const LogFn& log) { return run_pipeline(cfg, "sweep", log); }

std::vector<EvalItem> load_eval_batch(const fs::path& path) {
  const json j = [&] {
    try {
      return json::parse(read_text(path));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  }();
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return p.empty() || fs::path(p).is_absolute() ? p : (base / p).string(); };
  std::vector<EvalItem> items;
  for (const auto& e : j.at("items")) {
    EvalItem item;
    item.edit_type = e.value("edit_type", "addition");
    item.pipeline = e.value("pipeline", "ours");
    item.item = e.value("item", std::to_string(items.size()));
    item.prompt = e.value("prompt", "");
    item.input = resolve(e.value("input", ""));
    item.edited = resolve(e.value("edited", ""));
    if (e.contains("text_clap")) item.text_clap = e.at("text_clap").get<double>();
    if (e.contains("audio_clap")) item.audio_clap = e.at("audio_clap").get<double>();
    items.push_back(std::move(item));
  }
  return items;
}

EvalSummary cmd_eval(const std::vector<EvalItem>& items, const JointEmbedder& embedder, const fs::path& out_dir,
                     const LogFn& log) {
  EvalSummary summary;
  std::vector<std::pair<std::string, std::string>> groups;
  std::map<std::pair<std::string, std::string>, std::vector<ScoreReport>> by_group;
  for (const auto& item : items) {
    ScoreReport report;
    try {
      if (item.text_clap && item.audio_clap) {
        report = make_score_report(*item.text_clap, *item.audio_clap, 0.0, embedder.id());
      } else {
        if (item.prompt.empty()) throw ValidationError("missing prompt");
        const AudioClip input = load_audio(item.input, kEvalSampleRate);
        const AudioClip edited = load_audio(item.edited, kEvalSampleRate);
        report = score_edit(embedder, edited, input, item.prompt, 0.0);
      }
    } catch (const std::exception& e) {
      summary.skipped.push_back(item.item + ": " + e.what());
      if (log) log("warning: skipping " + item.item + ": " + e.what());
      continue;
    }
    const auto group = std::make_pair(item.edit_type, item.pipeline);
    if (!by_group.contains(group)) groups.push_back(group);
    by_group[group].push_back(report);
    summary.rows.push_back({item.edit_type, item.pipeline, item.item, report});
  }
  for (const auto& group : groups) {
    const auto& reports = by_group.at(group);
    double text = 0.0, audio = 0.0;
    for (const auto& r : reports) {
      text += r.text_clap;
      audio += r.audio_clap;
    }
    const double n = static_cast<double>(reports.size());
    summary.rows.push_back({group.first, group.second, "mean", make_score_report(text / n, audio / n, 0.0, embedder.id())});
  }
  write_score_csv(out_dir / "scores.csv", summary.rows);
  json rows = json::array();
  for (const auto& r : summary.rows)
    rows.push_back({{"edit_type", r.edit_type},
                    {"pipeline", r.pipeline},
                    {"item", r.item},
                    {"sum", r.report.sum},
                    {"text", r.report.text_clap},
                    {"audio", r.report.audio_clap}});
  write_text(out_dir / "report.json",
             json{{"embedder", embedder.id()}, {"rows", rows}, {"skipped", summary.skipped}}.dump(2) + "\n");
  return summary;
}

std::string cmd_inspect(const fs::path& manifest_path, bool* valid) {
  const RunManifest m = load_manifest(manifest_path);
  const auto problems = verify_manifest(m, manifest_path.parent_path());
  if (valid) *valid = problems.empty();
  std::string out = m.to_json();
  if (problems.empty()) {
    out += "verified: all artifacts present and hash-matching\n";
  } else {
    for (const auto& p : problems) out += "problem: " + p + "\n";
  }
  return out;
}

}  // namespace aedit
