// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

// Audio I/O, log-mel analysis and the vocoder seam.

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "aedit/tensor.hpp"

namespace aedit {

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  /// Throws ValidationError on non-finite samples or a non-positive rate.
  void validate() const;
};

struct MelConfig {
  int sample_rate = 16000;
  int n_fft = 1024;
  int hop = 160;
  int n_mels = 64;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = -11.52;
  /// Reflect-pad n_fft/2 samples on both sides before framing.
  bool center = true;

  void validate() const;
  friend bool operator==(const MelConfig&, const MelConfig&) = default;
};

/// Log-mel energies, values shaped [n_mels x n_frames].
struct MelSpec {
  Tensor values;
  MelConfig config;

  std::size_t n_mels() const { return values.shape.at(0); }
  std::size_t n_frames() const { return values.shape.at(1); }
  double& at(std::size_t band, std::size_t frame) { return values.data[band * n_frames() + frame]; }
  double at(std::size_t band, std::size_t frame) const { return values.data[band * n_frames() + frame]; }
};

enum class WavEncoding { pcm16, float32 };

/// Reads a PCM16 or float32 WAV, mean-downmixes to mono and resamples to `target_rate`.
AudioClip load_audio(const std::filesystem::path& path, int target_rate);
void save_wav(const std::filesystem::path& path, const AudioClip& clip,
              WavEncoding encoding = WavEncoding::pcm16);

/// Windowed-sinc (Hann-windowed, 32 zero crossings) band-limited resampler.
AudioClip resample(const AudioClip& clip, int target_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
/// Center frequency of band `band` (0-based) on the HTK mel scale.
double mel_band_center_hz(const MelConfig& cfg, int band);
/// Triangular HTK filterbank, peak-normalized, shaped [n_mels x (n_fft/2+1)].
Eigen::MatrixXd mel_filterbank(const MelConfig& cfg);

/// Number of STFT frames for `n_samples` under cfg's padding rule.
std::size_t frame_count(std::size_t n_samples, const MelConfig& cfg);

/// Mel energies before log compression, [n_mels x n_frames].
Tensor mel_energies(const AudioClip& clip, const MelConfig& cfg);
MelSpec mel_spectrogram(const AudioClip& clip, const MelConfig& cfg);

class Vocoder {
 public:
  virtual ~Vocoder() = default;
  virtual AudioClip synthesize(const MelSpec& mel) const = 0;
  virtual std::string id() const = 0;
};

/// Filterbank pseudo-inverse (refined to a non-negative fit) followed by zero-phase
/// overlap-add inverse STFT, with a gain calibrated on white noise.
class ToyVocoder final : public Vocoder {
 public:
  explicit ToyVocoder(const MelConfig& cfg);
  AudioClip synthesize(const MelSpec& mel) const override;
  std::string id() const override { return "toy-pinv-zerophase"; }

 private:
  static constexpr int kRefineIterations = 30;

  MelConfig cfg_;
  Eigen::MatrixXd fb_;          // [n_mels x (n_fft/2+1)]
  Eigen::MatrixXd inverse_fb_;  // [(n_fft/2+1) x n_mels]
  Eigen::MatrixXd gram_;        // fb^T fb
  std::vector<double> window_;
  double gain_ = 1.0;
};

/// Validates the mel and runs the vocoder.
AudioClip vocode(const MelSpec& mel, const Vocoder& vocoder);

}  // namespace aedit
