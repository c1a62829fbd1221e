// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

// Generative stack seam: VAE, text encoder, noise predictor and noise schedule.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "aedit/lora.hpp"
#include "aedit/spectral_io.hpp"
#include "aedit/tensor.hpp"

namespace aedit {

enum class LatentRole { z, z_t, z_prime };
enum class EmbeddingRole { target, optimized, interpolated, free };

std::string to_string(EmbeddingRole role);
EmbeddingRole embedding_role_from_string(std::string_view name);

struct Latent {
  Tensor values;
  LatentRole role = LatentRole::z;
};

struct TextEmbedding {
  Tensor values;
  EmbeddingRole role = EmbeddingRole::free;
};

struct ScheduleConfig {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// Linear-beta variance-preserving schedule. Steps are 1-based; alpha_bar(0) == 1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(ScheduleConfig cfg = {});

  int steps() const { return cfg_.steps; }
  const ScheduleConfig& config() const { return cfg_; }
  double beta(int t) const;
  double alpha_bar(int t) const;
  void require_step(int t) const;

 private:
  ScheduleConfig cfg_;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;  // index 0 holds the clean limit
};

struct GenConfig {
  int num_steps = 200;
  int start_depth = 200;
  double guidance_scale = 1.0;

  void validate(bool with_init, int schedule_steps) const;
  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

struct MelGeometry {
  std::size_t n_mels = 64;
  std::size_t n_frames = 32;
};

enum GradTarget : unsigned {
  kGradEmbedding = 1u,
  kGradBase = 2u,
  kGradAdapter = 4u,
};

/// Result of a vector-Jacobian product through the noise predictor.
struct NoiseVjp {
  Tensor prediction;
  Tensor d_embedding;     // filled when kGradEmbedding requested
  NamedTensors d_params;  // base names and/or adapter keys
};

/// Maps the prediction to dLoss/dPrediction.
using UpstreamFn = std::function<Tensor(const Tensor& prediction)>;

class DiffusionBackend {
 public:
  virtual ~DiffusionBackend() = default;

  virtual std::unique_ptr<DiffusionBackend> clone() const = 0;
  virtual std::string id() const = 0;

  virtual Shape latent_shape() const = 0;
  virtual Shape embedding_shape() const = 0;
  virtual MelGeometry mel_geometry() const = 0;
  virtual const MelConfig& mel_config() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;

  /// Posterior mean of the VAE encoder.
  virtual Latent encode(const MelSpec& mel) const = 0;
  virtual MelSpec decode(const Latent& z) const = 0;
  virtual TextEmbedding encode_text(std::string_view prompt) const = 0;

  virtual Tensor predict_noise(const Tensor& z_t, int t, const Tensor& e) const = 0;
  virtual NoiseVjp predict_noise_vjp(const Tensor& z_t, int t, const Tensor& e,
                                     const UpstreamFn& upstream, unsigned targets) const = 0;

  virtual NamedTensors& parameters() = 0;
  virtual const NamedTensors& parameters() const = 0;

  virtual std::vector<std::string> lora_target_names() const = 0;
  /// [d_out, d_in] of a LoRA-targetable matrix.
  virtual Shape lora_target_shape(const std::string& target) const = 0;
  virtual void set_adapter(std::optional<LoRAAdapter> adapter) = 0;
  virtual const std::optional<LoRAAdapter>& adapter() const = 0;
  virtual std::optional<LoRAAdapter>& adapter() = 0;

  /// Hash of the embedding this backend was fine-tuned against; empty when unbound.
  const std::string& lineage() const { return lineage_; }
  void set_lineage(std::string hash) { lineage_ = std::move(hash); }

  Latent predict_noise(const Latent& z_t, int t, const TextEmbedding& e) const;

 protected:
  DiffusionBackend() = default;
  DiffusionBackend(const DiffusionBackend&) = default;
  DiffusionBackend& operator=(const DiffusionBackend&) = default;

 private:
  std::string lineage_;
};

/// z_t = sqrt(abar_t) z + sqrt(1 - abar_t) eps.
Latent add_noise(const NoiseSchedule& schedule, const Latent& z, int t, const Tensor& eps);

/// Starting point for partial-noising generation.
struct InitLatent {
  Latent z;
  int start_depth = 200;
};

/// Deterministic DDIM reverse sampler. With `init` the latent is first noised to its
/// start depth using seeded noise; otherwise sampling starts from pure noise at T.
Latent sample(const DiffusionBackend& backend, const TextEmbedding& e, const GenConfig& gen,
              const std::optional<InitLatent>& init, std::uint64_t seed);

/// Descending timestep sequence used by `sample`.
std::vector<int> ddim_timesteps(int start_depth, int num_steps);

/// Crops or pads (with log_floor) to the frame count a backend expects.
MelSpec fit_mel_frames(const MelSpec& mel, std::size_t n_frames);

std::string hash_embedding(const TextEmbedding& e);

}  // namespace aedit
