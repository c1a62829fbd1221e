// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

// Small, fully differentiable latent diffusion stack for CPU tests.
//
// VAE: block PCA over 4x2 (band x frame) patches of a 64x32 log-mel, 4 whitened
// components per patch, giving a 4x16x16 latent.
// Text encoder: hashed word vectors, stopwords dropped, 8 tokens x 32 dims.
// Denoiser: three 3x3 convolutions (64 hidden channels) over the latent plus four
// learned positional channels; sinusoidal timestep embedding added after the
// first convolution; the flattened text embedding drives per-channel FiLM scale and
// shift after the first and second convolutions, plus a per-(channel, frequency row)
// shift mixed from a few text-driven frequency profiles. The timestep also modulates
// both FiLM sites.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "aedit/ldm_backend.hpp"

namespace aedit {

struct ToyDims {
  static constexpr std::size_t kLatentChannels = 4;
  static constexpr std::size_t kLatentH = 16;  // frequency blocks
  static constexpr std::size_t kLatentW = 16;  // time blocks
  static constexpr std::size_t kPosChannels = 4;
  static constexpr std::size_t kHidden = 64;
  static constexpr std::size_t kTimeDim = 16;
  static constexpr std::size_t kCondDim = 64;
  static constexpr std::size_t kSeqLen = 8;
  static constexpr std::size_t kEmbedDim = 32;
  static constexpr std::size_t kProfiles = 8;  // text-driven frequency profiles
  static constexpr std::size_t kBlockF = 4;  // mel bands per latent cell
  static constexpr std::size_t kBlockT = 2;  // frames per latent cell
};

class ToyTextEncoder {
 public:
  TextEmbedding encode(std::string_view prompt) const;
  static std::vector<std::string> tokenize(std::string_view prompt);
};

class ToyVae {
 public:
  /// DCT-initialised basis before fitting.
  explicit ToyVae(double log_floor = -11.52);

  /// Fits mean, principal patch directions and whitening scales on a mel corpus.
  void fit(const std::vector<MelSpec>& corpus);

  Latent encode(const MelSpec& mel) const;
  MelSpec decode(const Latent& z, const MelConfig& cfg) const;

  NamedTensors state() const;
  void load_state(const NamedTensors& state);

 private:
  Tensor mean_;   // [8]
  Tensor basis_;  // [4 x 8], orthonormal rows
  Tensor scale_;  // [4]
};

class ToyBackend final : public DiffusionBackend {
 public:
  /// Randomly initialised denoiser, DCT VAE.
  explicit ToyBackend(std::uint64_t seed = 0, ScheduleConfig schedule = {}, MelConfig mel = {});

  static ToyBackend load(const std::filesystem::path& archive_path);
  /// Writes `<stem>.safetensors` plus a `<stem>.json` metadata sidecar.
  void save(const std::filesystem::path& archive_path) const;

  std::unique_ptr<DiffusionBackend> clone() const override;
  std::string id() const override { return "toy-ldm-v1"; }

  Shape latent_shape() const override;
  Shape embedding_shape() const override;
  MelGeometry mel_geometry() const override {
    return {ToyDims::kLatentH * ToyDims::kBlockF, ToyDims::kLatentW * ToyDims::kBlockT};
  }
  const MelConfig& mel_config() const override { return mel_; }
  const NoiseSchedule& schedule() const override { return schedule_; }

  Latent encode(const MelSpec& mel) const override;
  MelSpec decode(const Latent& z) const override;
  TextEmbedding encode_text(std::string_view prompt) const override;

  using DiffusionBackend::predict_noise;
  Tensor predict_noise(const Tensor& z_t, int t, const Tensor& e) const override;
  NoiseVjp predict_noise_vjp(const Tensor& z_t, int t, const Tensor& e, const UpstreamFn& upstream,
                             unsigned targets) const override;

  NamedTensors& parameters() override { return params_; }
  const NamedTensors& parameters() const override { return params_; }

  std::vector<std::string> lora_target_names() const override;
  Shape lora_target_shape(const std::string& target) const override;
  void set_adapter(std::optional<LoRAAdapter> adapter) override;
  const std::optional<LoRAAdapter>& adapter() const override { return adapter_; }
  std::optional<LoRAAdapter>& adapter() override { return adapter_; }

  ToyVae& vae() { return vae_; }
  const ToyVae& vae() const { return vae_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  NoiseSchedule schedule_;
  MelConfig mel_;
  ToyVae vae_;
  ToyTextEncoder text_;
  NamedTensors params_;
  std::optional<LoRAAdapter> adapter_;
};

}  // namespace aedit
