// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/embedding_opt.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "aedit/errors.hpp"
#include "aedit/optim.hpp"
#include "aedit/rng.hpp"

namespace aedit {

void OptConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("opt: learning_rate must be > 0");
  if (num_steps < 0) throw ValidationError("opt: num_steps must be >= 0");
  if (batch_noise_draws < 1) throw ValidationError("opt: batch_noise_draws must be >= 1");
}

void LossTrace::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,loss,seconds\n";
  out.precision(17);
  for (std::size_t i = 0; i < loss.size(); ++i) out << i + 1 << ',' << loss[i] << ',' << seconds[i] << '\n';
}

double diffusion_loss(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e, int t,
                      const Tensor& eps) {
  const Latent z_t = add_noise(backend.schedule(), z, t, eps);
  const Tensor pred = backend.predict_noise(z_t.values, t, e.values);
  require_same_shape(pred, eps, "diffusion_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.numel(); ++i) {
    const double d = eps[i] - pred[i];
    acc += d * d;
  }
  return acc / static_cast<double>(eps.numel());
}

LossGrad diffusion_loss_grad(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e, int t,
                             const Tensor& eps, unsigned targets) {
  const Latent z_t = add_noise(backend.schedule(), z, t, eps);
  LossGrad out;
  NoiseVjp vjp = backend.predict_noise_vjp(
      z_t.values, t, e.values,
      [&](const Tensor& pred) {
        require_same_shape(pred, eps, "diffusion_loss_grad");
        const double n = static_cast<double>(eps.numel());
        Tensor d(pred.shape);
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.numel(); ++i) {
          const double diff = pred[i] - eps[i];
          acc += diff * diff;
          d[i] = 2.0 * diff / n;
        }
        out.loss = acc / n;
        return d;
      },
      targets);
  out.d_embedding = std::move(vjp.d_embedding);
  out.d_params = std::move(vjp.d_params);
  return out;
}

std::vector<NoiseDraw> make_loss_battery(const DiffusionBackend& backend, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<NoiseDraw> battery;
  battery.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    NoiseDraw d;
    d.t = rng.uniform_int(1, backend.schedule().steps());
    d.eps = rng.normal_tensor(backend.latent_shape());
    battery.push_back(std::move(d));
  }
  return battery;
}

double battery_loss(const DiffusionBackend& backend, const Latent& z, const TextEmbedding& e,
                    const std::vector<NoiseDraw>& battery) {
  if (battery.empty()) throw ValidationError("empty loss battery");
  double acc = 0.0;
  for (const auto& d : battery) acc += diffusion_loss(backend, z, e, d.t, d.eps);
  return acc / static_cast<double>(battery.size());
}

std::pair<TextEmbedding, LossTrace> optimize_embedding(const DiffusionBackend& backend, const Latent& z,
                                                       const TextEmbedding& e_target, const OptConfig& cfg) {
  cfg.validate();
  if (e_target.values.shape != backend.embedding_shape())
    throw ValidationError("optimize_embedding: embedding shape mismatch");
  if (z.values.shape != backend.latent_shape()) throw ValidationError("optimize_embedding: latent shape mismatch");

  NamedTensors state{{"embedding", e_target.values}};
  Adam adam(cfg.learning_rate);
  Rng rng(cfg.seed);
  LossTrace trace;
  const int steps = backend.schedule().steps();
  for (int step = 0; step < cfg.num_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const TextEmbedding e{state.at("embedding"), EmbeddingRole::free};
    NamedTensors grads{{"embedding", Tensor(e.values.shape)}};
    double loss = 0.0;
    for (int b = 0; b < cfg.batch_noise_draws; ++b) {
      const int t = rng.uniform_int(1, steps);
      const Tensor eps = rng.normal_tensor(backend.latent_shape());
      LossGrad lg = diffusion_loss_grad(backend, z, e, t, eps, kGradEmbedding);
      loss += lg.loss / cfg.batch_noise_draws;
      grads.at("embedding") += (1.0 / cfg.batch_noise_draws) * std::move(lg.d_embedding);
    }
    if (!std::isfinite(loss))
      throw NumericError("embedding optimization: non-finite loss at step " + std::to_string(step + 1));
    adam.step(state, grads);
    trace.loss.push_back(loss);
    trace.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return {TextEmbedding{std::move(state.at("embedding")), EmbeddingRole::optimized}, std::move(trace)};
}

std::vector<double> smooth_trace(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw ValidationError("smoothing window must be >= 1");
  std::vector<double> out;
  if (values.size() < window) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    if (i + 1 >= window) out.push_back(acc / static_cast<double>(window));
  }
  return out;
}

}  // namespace aedit
