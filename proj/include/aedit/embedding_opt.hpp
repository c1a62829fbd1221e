// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

// Step 1: fit the text embedding so the frozen denoiser reconstructs a latent.

#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "aedit/ldm_backend.hpp"

namespace aedit {

struct OptConfig {
  double learning_rate = 2e-3;
  int num_steps = 500;
  int batch_noise_draws = 1;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const OptConfig&, const OptConfig&) = default;
};

struct LossTrace {
  std::vector<double> loss;
  std::vector<double> seconds;

  std::size_t size() const { return loss.size(); }
  void write_csv(const std::filesystem::path& path) const;
};

/// Mean over latent elements of (eps - f(z_t, t, e))^2 with z_t = add_noise(z, t, eps).
double diffusion_loss(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e, int t,
                      const Tensor& eps);

struct LossGrad {
  double loss = 0.0;
  Tensor d_embedding;
  NamedTensors d_params;
};

/// diffusion_loss together with its gradients for the requested GradTarget bits.
LossGrad diffusion_loss_grad(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e, int t,
                             const Tensor& eps, unsigned targets);

/// One (t, eps) draw of the expectation over timesteps and noise.
struct NoiseDraw {
  int t = 1;
  Tensor eps;
};

/// Fixed set of draws used to compare losses across embeddings or weights.
std::vector<NoiseDraw> make_loss_battery(const DiffusionBackend& backend, std::size_t count, std::uint64_t seed);
double battery_loss(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e,
                    const std::vector<NoiseDraw>& battery);

/// Adam on the embedding only, starting from e_target; backend is read-only.
std::pair<TextEmbedding, LossTrace> optimize_embedding(const DiffusionBackend& backend, const Latent& z,
                                                       const TextEmbedding& e_target, const OptConfig& cfg);

/// Moving average with a trailing window.
std::vector<double> smooth_trace(const std::vector<double>& values, std::size_t window);

}  // namespace aedit
