// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>

#include "aedit/errors.hpp"
#include "aedit/rng.hpp"
#include "aedit/spectral_io.hpp"

namespace aedit {

namespace {

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

// numpy-style "reflect" indexing, repeated for signals shorter than the pad.
std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace

void AudioClip::validate() const {
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  for (double s : samples)
    if (!std::isfinite(s)) throw ValidationError("audio contains non-finite samples");
}

void MelConfig::validate() const {
  if (sample_rate <= 0) throw ValidationError("mel: sample_rate must be positive");
  if (n_fft < 2 || hop < 1 || hop > n_fft) throw ValidationError("mel: require 1 <= hop <= n_fft");
  if (n_mels < 1) throw ValidationError("mel: n_mels must be >= 1");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0))
    throw ValidationError("mel: require 0 <= fmin < fmax <= sample_rate/2");
  if (!std::isfinite(log_floor)) throw ValidationError("mel: log_floor must be finite");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double mel_band_center_hz(const MelConfig& cfg, int band) {
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  return mel_to_hz(lo + (hi - lo) * (band + 1) / (cfg.n_mels + 1));
}

Eigen::MatrixXd mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (cfg.n_mels + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
  for (int k = 0; k < cfg.n_mels; ++k) {
    const double left = edges[k], center = edges[k + 1], right = edges[k + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      fb(k, b) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

std::size_t frame_count(std::size_t n_samples, const MelConfig& cfg) {
  const std::size_t pad = cfg.center ? 2 * static_cast<std::size_t>(cfg.n_fft / 2) : 0;
  const std::size_t padded = n_samples + pad;
  if (padded < static_cast<std::size_t>(cfg.n_fft))
    throw ValidationError("clip shorter than n_fft without center padding");
  return 1 + (padded - static_cast<std::size_t>(cfg.n_fft)) / static_cast<std::size_t>(cfg.hop);
}

Tensor mel_energies(const AudioClip& clip, const MelConfig& cfg) {
  cfg.validate();
  clip.validate();
  if (clip.sample_rate != cfg.sample_rate)
    throw ValidationError("mel: clip rate " + std::to_string(clip.sample_rate) +
                          " != config rate " + std::to_string(cfg.sample_rate));
  if (clip.samples.empty()) throw ValidationError("mel: empty clip");

  const std::size_t n_frames = frame_count(clip.samples.size(), cfg);
  const long n = static_cast<long>(clip.samples.size());
  const long pad = cfg.center ? cfg.n_fft / 2 : 0;
  const int n_bins = cfg.n_fft / 2 + 1;
  const auto window = hann_window(cfg.n_fft);
  const Eigen::MatrixXd fb = mel_filterbank(cfg);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<std::size_t>(cfg.n_fft));
  std::vector<std::complex<double>> spectrum;
  Eigen::MatrixXd power(n_bins, static_cast<Eigen::Index>(n_frames));
  for (std::size_t f = 0; f < n_frames; ++f) {
    const long start = static_cast<long>(f) * cfg.hop - pad;
    for (int i = 0; i < cfg.n_fft; ++i)
      frame[static_cast<std::size_t>(i)] =
          clip.samples[reflect_index(start + i, n)] * window[static_cast<std::size_t>(i)];
    fft.fwd(spectrum, frame);
    for (int b = 0; b < n_bins; ++b) power(b, static_cast<Eigen::Index>(f)) = std::norm(spectrum[static_cast<std::size_t>(b)]);
  }
  const Eigen::MatrixXd mel = fb * power;
  Tensor out({static_cast<std::size_t>(cfg.n_mels), n_frames});
  for (int k = 0; k < cfg.n_mels; ++k)
    for (std::size_t f = 0; f < n_frames; ++f)
      out.data[static_cast<std::size_t>(k) * n_frames + f] = mel(k, static_cast<Eigen::Index>(f));
  return out;
}

MelSpec mel_spectrogram(const AudioClip& clip, const MelConfig& cfg) {
  MelSpec spec{mel_energies(clip, cfg), cfg};
  const double floor_energy = std::exp(cfg.log_floor);
  for (double& v : spec.values.data) v = std::max(std::log(std::max(v, floor_energy)), cfg.log_floor);
  return spec;
}

ToyVocoder::ToyVocoder(const MelConfig& cfg) : cfg_(cfg), window_(hann_window(cfg.n_fft)) {
  cfg_.validate();
  fb_ = mel_filterbank(cfg_);
  inverse_fb_ = fb_.completeOrthogonalDecomposition().pseudoInverse();
  gram_ = fb_.transpose() * fb_;

  // Zero-phase overlap-add loses a roughly constant share of the energy; measure it on
  // seeded white noise and compensate.
  AudioClip noise;
  noise.sample_rate = cfg_.sample_rate;
  Rng rng(derive_seed(0x70c0de, "vocoder-calibration"));
  noise.samples.resize(static_cast<std::size_t>(cfg_.n_fft + 40 * cfg_.hop));
  for (double& v : noise.samples) v = 0.1 * rng.normal();
  const MelSpec reference = mel_spectrogram(noise, cfg_);
  const MelSpec round_trip = mel_spectrogram(synthesize(reference), cfg_);
  double target = 0.0, actual = 0.0;
  for (std::size_t k = 0; k < reference.n_mels(); ++k)
    for (std::size_t f = 4; f + 4 < std::min(reference.n_frames(), round_trip.n_frames()); ++f) {
      target += std::exp(reference.at(k, f));
      actual += std::exp(round_trip.at(k, f));
    }
  gain_ = std::sqrt(target / actual);
}

AudioClip ToyVocoder::synthesize(const MelSpec& mel) const {
  if (mel.config.n_mels != cfg_.n_mels || mel.n_mels() != static_cast<std::size_t>(cfg_.n_mels))
    throw ValidationError("vocoder: mel band count does not match vocoder config");
  const std::size_t n_frames = mel.n_frames();
  const int n_bins = cfg_.n_fft / 2 + 1;
  const double floor_energy = std::exp(cfg_.log_floor);

  Eigen::MatrixXd energy(cfg_.n_mels, static_cast<Eigen::Index>(n_frames));
  for (int k = 0; k < cfg_.n_mels; ++k)
    for (std::size_t f = 0; f < n_frames; ++f)
      energy(k, static_cast<Eigen::Index>(f)) = std::max(std::exp(mel.at(static_cast<std::size_t>(k), f)) - floor_energy, 0.0);
  Eigen::MatrixXd power = (inverse_fb_ * energy).cwiseMax(0.0);
  // Multiplicative non-negative least-squares updates starting from the clamped
  // pseudo-inverse; clamping alone leaks energy into neighbouring bands.
  const Eigen::MatrixXd target = fb_.transpose() * energy;
  for (int it = 0; it < kRefineIterations; ++it)
    power = power.cwiseProduct(target.cwiseQuotient((gram_ * power).cwiseMax(1e-300)));

  const long pad = cfg_.n_fft / 2;
  const std::size_t n_out = n_frames * static_cast<std::size_t>(cfg_.hop);
  std::vector<double> out(n_out, 0.0), norm(n_out, 0.0);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(n_bins));
  std::vector<double> frame;
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (int b = 0; b < n_bins; ++b)
      spectrum[static_cast<std::size_t>(b)] = std::sqrt(power(b, static_cast<Eigen::Index>(f)));
    fft.inv(frame, spectrum, static_cast<Eigen::Index>(cfg_.n_fft));
    const long start = static_cast<long>(f) * cfg_.hop - pad;
    for (int i = 0; i < cfg_.n_fft; ++i) {
      const long t = start + i;
      if (t < 0 || t >= static_cast<long>(n_out)) continue;
      // Zero-phase pulse is centred in the frame.
      const double s = frame[static_cast<std::size_t>((i + pad) % cfg_.n_fft)];
      const double w = window_[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(t)] += s * w;
      norm[static_cast<std::size_t>(t)] += w * w;
    }
  }
  AudioClip clip;
  clip.sample_rate = cfg_.sample_rate;
  clip.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) clip.samples[i] = norm[i] > 1e-8 ? gain_ * out[i] / norm[i] : 0.0;
  return clip;
}

AudioClip vocode(const MelSpec& mel, const Vocoder& vocoder) {
  require_finite(mel.values, "vocode");
  return vocoder.synthesize(mel);
}

}  // namespace aedit
