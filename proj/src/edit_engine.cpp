// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/edit_engine.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

#include "aedit/errors.hpp"

namespace aedit {

std::string to_string(EditType type) {
  switch (type) {
    case EditType::addition: return "addition";
    case EditType::style_transfer: return "style_transfer";
    case EditType::inpainting: return "inpainting";
  }
  return "addition";
}

EditType edit_type_from_string(const std::string& name) {
  if (name == "addition") return EditType::addition;
  if (name == "style_transfer") return EditType::style_transfer;
  if (name == "inpainting") return EditType::inpainting;
  throw ValidationError("unknown edit type '" + name + "' (addition, style_transfer, inpainting)");
}

std::vector<MaskInterval> parse_mask(const std::string& text) {
  std::vector<MaskInterval> mask;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ValidationError("mask entry '" + part + "' is not start:end");
    try {
      std::size_t used = 0;
      MaskInterval m;
      m.start = std::stod(part.substr(0, colon), &used);
      m.end = std::stod(part.substr(colon + 1));
      mask.push_back(m);
    } catch (const std::logic_error&) {
      throw ValidationError("mask entry '" + part + "' has non-numeric bounds");
    }
  }
  return mask;
}

std::string format_mask(const std::vector<MaskInterval>& mask) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < mask.size(); ++i) os << (i ? "," : "") << mask[i].start << ':' << mask[i].end;
  return os.str();
}

namespace {

void validate_mask(const std::vector<MaskInterval>& mask, double duration) {
  std::vector<MaskInterval> sorted = mask;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& m = sorted[i];
    if (!(std::isfinite(m.start) && std::isfinite(m.end)) || m.start < 0.0 || m.end <= m.start ||
        m.end > duration + 1e-9)
      throw ValidationError("mask interval " + format_mask({m}) + " outside [0, " + std::to_string(duration) + "]");
    if (i > 0 && m.start < sorted[i - 1].end) throw ValidationError("mask intervals overlap");
  }
}

}  // namespace

void EditRequest::validate() const {
  input.validate();
  if (input.samples.empty()) throw ValidationError("edit: empty input audio");
  if (prompt.empty()) throw ValidationError("edit: empty prompt");
  if (eta && !(*eta >= 0.0 && *eta <= 1.0)) throw ValidationError("edit: eta must lie in [0, 1]");
  if (edit_type == EditType::inpainting && mask.empty()) throw ValidationError("edit: inpainting requires a mask");
  if (edit_type != EditType::inpainting && !mask.empty())
    throw ValidationError("edit: a mask is only meaningful for inpainting");
  validate_mask(mask, input.duration());
}

TextEmbedding interpolate(const TextEmbedding& e_target, const TextEmbedding& e_opt, double eta) {
  require_same_shape(e_target.values, e_opt.values, "interpolate");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("interpolate: eta must lie in [0, 1]");
  TextEmbedding out{Tensor(e_target.values.shape), EmbeddingRole::interpolated};
  for (std::size_t i = 0; i < out.values.numel(); ++i)
    out.values[i] = eta * e_target.values[i] + (1.0 - eta) * e_opt.values[i];
  return out;
}

EditResult generate_edit(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e_target,
                         const TextEmbedding& e_opt, double eta, const GenConfig& gen, std::uint64_t seed,
                         const Vocoder& vocoder) {
  const std::string lineage = hash_embedding(e_opt);
  if (backend.lineage() != lineage)
    throw StateError("generate_edit: backend was not fine-tuned against this optimized embedding");
  const TextEmbedding e_int = interpolate(e_target, e_opt, eta);
  EditResult result;
  result.eta = eta;
  result.z_prime = sample(backend, e_int, gen, InitLatent{z, gen.start_depth}, seed);
  result.edited_mel = backend.decode(result.z_prime);
  result.edited_audio = vocode(result.edited_mel, vocoder);
  result.provenance = {{"backend", backend.id()},
                       {"e_opt", lineage},
                       {"e_target", hash_embedding(e_target)},
                       {"seed", std::to_string(seed)},
                       {"num_steps", std::to_string(gen.num_steps)},
                       {"start_depth", std::to_string(gen.start_depth)},
                       {"vocoder", vocoder.id()}};
  return result;
}

std::pair<std::size_t, std::size_t> mask_frames(const MaskInterval& interval, const MelConfig& cfg) {
  const double fps = static_cast<double>(cfg.sample_rate) / cfg.hop;
  // Snap to an integer when within rounding noise so exact boundaries stay exact.
  auto snap = [](double v) { return std::abs(v - std::round(v)) < 1e-9 ? std::round(v) : v; };
  const auto first = static_cast<std::size_t>(std::floor(snap(interval.start * fps)));
  const auto last = static_cast<std::size_t>(std::ceil(snap(interval.end * fps)));
  return {first, last};
}

std::vector<bool> mask_frame_flags(const std::vector<MaskInterval>& mask, const MelSpec& mel) {
  const double duration = static_cast<double>(mel.n_frames()) * mel.config.hop / mel.config.sample_rate;
  validate_mask(mask, duration);
  std::vector<bool> flags(mel.n_frames(), false);
  for (const auto& m : mask) {
    const auto [first, last] = mask_frames(m, mel.config);
    for (std::size_t f = first; f < std::min(last, mel.n_frames()); ++f) flags[f] = true;
  }
  return flags;
}

MelSpec inpaint_composite(const MelSpec& input, const MelSpec& generated, const std::vector<MaskInterval>& mask) {
  require_same_shape(input.values, generated.values, "inpaint_composite");
  const auto flags = mask_frame_flags(mask, input);
  MelSpec out = input;
  for (std::size_t b = 0; b < input.n_mels(); ++b)
    for (std::size_t f = 0; f < input.n_frames(); ++f)
      if (flags[f]) out.at(b, f) = generated.at(b, f);
  return out;
}

MelSpec blank_masked(const MelSpec& mel, const std::vector<MaskInterval>& mask) {
  const auto flags = mask_frame_flags(mask, mel);
  MelSpec out = mel;
  for (std::size_t b = 0; b < mel.n_mels(); ++b)
    for (std::size_t f = 0; f < mel.n_frames(); ++f)
      if (flags[f]) out.at(b, f) = mel.config.log_floor;
  return out;
}

std::vector<double> default_eta_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

std::vector<EditResult> eta_sweep(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e_target,
                                  const TextEmbedding& e_opt, const std::vector<double>& etas, const GenConfig& gen,
                                  std::uint64_t seed, const Vocoder& vocoder, unsigned workers) {
  if (etas.empty()) throw ValidationError("eta_sweep: empty eta list");
  if (!std::is_sorted(etas.begin(), etas.end())) throw ValidationError("eta_sweep: etas must be sorted");
  for (double eta : etas)
    if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("eta_sweep: eta outside [0, 1]");
  std::vector<EditResult> results(etas.size());
  workers = std::max(1u, workers);
  for (std::size_t begin = 0; begin < etas.size(); begin += workers) {
    const std::size_t end = std::min(etas.size(), begin + workers);
    std::vector<std::future<EditResult>> jobs;
    for (std::size_t i = begin + 1; i < end; ++i)
      jobs.push_back(std::async(std::launch::async, [&, i] {
        return generate_edit(backend, z, e_target, e_opt, etas[i], gen, seed, vocoder);
      }));
    results[begin] = generate_edit(backend, z, e_target, e_opt, etas[begin], gen, seed, vocoder);
    for (std::size_t i = begin + 1; i < end; ++i) results[i] = jobs[i - begin - 1].get();
  }
  return results;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman: need two equal-length series");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace aedit
