// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/eval_clap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "aedit/errors.hpp"
#include "aedit/rng.hpp"
#include "aedit/toy_backend.hpp"
#include "aedit/toy_sounds.hpp"

namespace aedit {

namespace {

constexpr std::size_t kHashBuckets = 256;
constexpr double kSpreadWeight = 0.5;
constexpr double kBagOfWordsWeight = 0.1;

std::size_t bucket(std::string_view word) {
  return static_cast<std::size_t>(derive_seed(0xb0c, word) % kHashBuckets);
}

Tensor project(const Tensor& matrix, const std::vector<double>& x) {
  const std::size_t rows = matrix.shape[0], cols = matrix.shape[1];
  Tensor out({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += matrix[i * cols + j] * x[j];
    out[i] = acc;
  }
  return out;
}

void center(std::vector<double>& v, std::size_t begin, std::size_t end) {
  double mean = 0.0;
  for (std::size_t i = begin; i < end; ++i) mean += v[i];
  mean /= static_cast<double>(end - begin);
  for (std::size_t i = begin; i < end; ++i) v[i] -= mean;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

ScoreReport make_score_report(double text, double audio, double eta, std::string embedder_id) {
  ScoreReport r;
  r.text_clap = text;
  r.audio_clap = audio;
  r.sum = text + audio;
  r.eta = eta;
  r.embedder_id = std::move(embedder_id);
  return r;
}

ToyClapEmbedder::ToyClapEmbedder(MelConfig mel) : mel_(mel) {
  mel_.validate();
  if (static_cast<std::size_t>(mel_.n_mels) % kCoarseBands != 0)
    throw ValidationError("toy CLAP: n_mels must be a multiple of 16");
  Rng rng(derive_seed(0xc1a9, "toy-clap-projection"));
  projection_ = rng.normal_tensor({kDim, 2 * kCoarseBands}, 1.0 / std::sqrt(static_cast<double>(kDim)));
  word_hash_ = rng.normal_tensor({kDim, kHashBuckets}, 1.0 / std::sqrt(static_cast<double>(kDim)));
}

std::vector<double> ToyClapEmbedder::anchor_profile(double lo_hz, double hi_hz) const {
  const int per = mel_.n_mels / static_cast<int>(kCoarseBands);
  std::vector<double> profile(2 * kCoarseBands, 0.0);
  for (std::size_t c = 0; c < kCoarseBands; ++c) {
    const double a = mel_band_center_hz(mel_, static_cast<int>(c) * per);
    const double b = mel_band_center_hz(mel_, static_cast<int>(c + 1) * per - 1);
    const double overlap = std::max(0.0, std::min(b, hi_hz) - std::max(a, lo_hz));
    profile[c] = b > a ? overlap / (b - a) : (a >= lo_hz && a <= hi_hz ? 1.0 : 0.0);
  }
  center(profile, 0, kCoarseBands);
  return profile;
}

JointEmbedding ToyClapEmbedder::embed_audio(const AudioClip& input) const {
  if (input.samples.empty()) throw ValidationError("embed_audio: empty clip");
  const AudioClip clip = input.sample_rate == mel_.sample_rate ? input : resample(input, mel_.sample_rate);
  const MelSpec mel = mel_spectrogram(clip, mel_);
  const std::size_t per = mel.n_mels() / kCoarseBands, frames = mel.n_frames();
  std::vector<double> features(2 * kCoarseBands, 0.0);
  std::vector<double> logs(frames);
  for (std::size_t c = 0; c < kCoarseBands; ++c) {
    // Log of the band's mean energy, which survives time smearing; plus the spread of its per-frame log energy.
    double sum = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < per; ++k) peak = std::max(peak, mel.at(c * per + k, f));
      double e = 0.0;
      for (std::size_t k = 0; k < per; ++k) e += std::exp(mel.at(c * per + k, f) - peak);
      logs[f] = peak + std::log(e / static_cast<double>(per));
      sum += logs[f];
    }
    const double peak = *std::max_element(logs.begin(), logs.end());
    double e = 0.0;
    for (double l : logs) e += std::exp(l - peak);
    const double mean = sum / static_cast<double>(frames);
    double var = 0.0;
    for (double l : logs) var += (l - mean) * (l - mean);
    features[c] = peak + std::log(e / static_cast<double>(frames));
    features[kCoarseBands + c] = kSpreadWeight * std::sqrt(var / static_cast<double>(frames));
  }
  center(features, 0, kCoarseBands);
  // A flat, steady spectrum (silence included) centres to zero up to rounding.
  double largest = 0.0;
  for (double v : features) largest = std::max(largest, std::abs(v));
  if (!(largest > 1e-9)) throw ValidationError("embed_audio: flat clip has no direction");
  return {project(projection_, features), Modality::audio, "audio"};
}

JointEmbedding ToyClapEmbedder::embed_text(std::string_view prompt) const {
  const auto words = ToyTextEncoder::tokenize(prompt);
  if (words.empty()) throw ValidationError("embed_text: prompt has no content words");
  std::vector<double> features(2 * kCoarseBands, 0.0);
  std::vector<double> bow(kHashBuckets, 0.0);
  for (const auto& w : words) {
    bow[bucket(w)] += 1.0;
    if (const SoundClass* c = find_sound_class(w)) {
      auto p = anchor_profile(c->lo_hz, c->hi_hz);
      double n = 0.0;
      for (double v : p) n += v * v;
      n = std::sqrt(n);
      for (std::size_t i = 0; i < p.size(); ++i) features[i] += n > 0 ? p[i] / n : 0.0;
    }
  }
  double bow_norm = 0.0;
  for (double v : bow) bow_norm += v * v;
  bow_norm = std::sqrt(bow_norm);
  for (double& v : bow) v *= kBagOfWordsWeight / bow_norm;
  Tensor values = project(projection_, features) + project(word_hash_, bow);
  return {std::move(values), Modality::text, std::string(prompt)};
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_similarity");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw ValidationError("cosine_similarity: zero-norm vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double text_clap(const JointEmbedding& edited_audio, const JointEmbedding& text) {
  if (edited_audio.modality != Modality::audio || text.modality != Modality::text)
    throw ValidationError("text_clap expects (audio, text) embeddings");
  return cosine_similarity(edited_audio.values, text.values);
}

double audio_clap(const JointEmbedding& edited_audio, const JointEmbedding& original_audio) {
  if (edited_audio.modality != Modality::audio || original_audio.modality != Modality::audio)
    throw ValidationError("audio_clap expects two audio embeddings");
  return cosine_similarity(edited_audio.values, original_audio.values);
}

ScoreReport score_edit(const JointEmbedder& embedder, const AudioClip& edited, const AudioClip& original,
                       std::string_view prompt, double eta) {
  const JointEmbedding h_edit = embedder.embed_audio(edited);
  return make_score_report(text_clap(h_edit, embedder.embed_text(prompt)),
                           audio_clap(h_edit, embedder.embed_audio(original)), eta, embedder.id());
}

std::pair<double, ScoreReport> select_eta(const std::vector<ScoreReport>& reports) {
  if (reports.empty()) throw ValidationError("select_eta: no scored results");
  const ScoreReport* best = &reports.front();
  for (const auto& r : reports) {
    if (r.embedder_id != reports.front().embedder_id)
      throw ValidationError("select_eta: results scored with different embedders");
    if (r.sum > best->sum || (r.sum == best->sum && r.eta < best->eta)) best = &r;
  }
  return {best->eta, *best};
}

void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "edit_type,pipeline,item,sum,text,audio\n";
  for (const auto& row : rows)
    out << row.edit_type << ',' << row.pipeline << ',' << row.item << ',' << fmt3(row.report.sum) << ','
        << fmt3(row.report.text_clap) << ',' << fmt3(row.report.audio_clap) << '\n';
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<ScoreReport>& reports) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "eta,text,audio,sum,embedder\n";
  for (const auto& r : reports)
    out << r.eta << ',' << r.text_clap << ',' << r.audio_clap << ',' << r.sum << ',' << r.embedder_id << '\n';
}

std::vector<ScoreReport> read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ScoreReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5) throw IoError(path.string() + ": malformed row '" + line + "'");
    ScoreReport r = make_score_report(std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[0]), cells[4]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_curve_svg(const std::filesystem::path& path, const std::vector<ScoreReport>& reports,
                     const std::string& title) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const double w = 480, h = 320, left = 50, right = 20, top = 30, bottom = 40;
  double lo = 0.0, hi = 0.0;
  for (const auto& r : reports) {
    lo = std::min({lo, r.text_clap, r.audio_clap, r.sum});
    hi = std::max({hi, r.text_clap, r.audio_clap, r.sum});
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  auto x = [&](double eta) { return left + eta * (w - left - right); };
  auto y = [&](double v) { return top + (hi - v) / (hi - lo) * (h - top - bottom); };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << y(lo) << "\" x2=\"" << w - right << "\" y2=\"" << y(lo)
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << y(lo)
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (w / 2) << "\" y=\"" << h - 8 << "\" font-size=\"12\">eta</text>\n";
  const std::pair<const char*, double ScoreReport::*> series[] = {
      {"#1f77b4", &ScoreReport::text_clap}, {"#d62728", &ScoreReport::audio_clap}, {"#2ca02c", &ScoreReport::sum}};
  const char* names[] = {"text", "audio", "sum"};
  int i = 0;
  for (const auto& [color, field] : series) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : reports) out << x(r.eta) << ',' << y(r.*field) << ' ';
    out << "\"/>\n<text x=\"" << w - right - 60 << "\" y=\"" << top + 14 * (i + 1) << "\" fill=\"" << color
        << "\" font-size=\"12\">" << names[i] << "</text>\n";
    ++i;
  }
  out << "</svg>\n";
}

}  // namespace aedit
