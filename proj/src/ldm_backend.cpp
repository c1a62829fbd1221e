// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/ldm_backend.hpp"

#include <algorithm>
#include <cmath>

#include "aedit/errors.hpp"
#include "aedit/hashing.hpp"
#include "aedit/rng.hpp"

namespace aedit {

std::string to_string(EmbeddingRole role) {
  switch (role) {
    case EmbeddingRole::target: return "target";
    case EmbeddingRole::optimized: return "optimized";
    case EmbeddingRole::interpolated: return "interpolated";
    case EmbeddingRole::free: return "free";
  }
  return "free";
}

EmbeddingRole embedding_role_from_string(std::string_view name) {
  if (name == "target") return EmbeddingRole::target;
  if (name == "optimized") return EmbeddingRole::optimized;
  if (name == "interpolated") return EmbeddingRole::interpolated;
  if (name == "free") return EmbeddingRole::free;
  throw ValidationError("unknown embedding role '" + std::string(name) + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleConfig cfg) : cfg_(cfg) {
  if (cfg_.steps < 2) throw ValidationError("schedule needs at least 2 steps");
  if (!(cfg_.beta_start > 0.0 && cfg_.beta_start <= cfg_.beta_end && cfg_.beta_end < 1.0))
    throw ValidationError("schedule: require 0 < beta_start <= beta_end < 1");
  betas_.resize(static_cast<std::size_t>(cfg_.steps) + 1, 0.0);
  alpha_bars_.resize(betas_.size(), 1.0);
  for (int t = 1; t <= cfg_.steps; ++t) {
    const double frac = static_cast<double>(t - 1) / (cfg_.steps - 1);
    betas_[t] = cfg_.beta_start + frac * (cfg_.beta_end - cfg_.beta_start);
    alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - betas_[t]);
  }
}

void NoiseSchedule::require_step(int t) const {
  if (t < 1 || t > cfg_.steps)
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(cfg_.steps) + "]");
}

double NoiseSchedule::beta(int t) const {
  require_step(t);
  return betas_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  require_step(t);
  return alpha_bars_[static_cast<std::size_t>(t)];
}

void GenConfig::validate(bool with_init, int schedule_steps) const {
  if (num_steps < 1) throw ValidationError("gen: num_steps must be >= 1");
  if (!(guidance_scale >= 1.0)) throw ValidationError("gen: guidance_scale must be >= 1");
  if (with_init) {
    if (start_depth < 1 || start_depth > schedule_steps)
      throw ValidationError("gen: start_depth " + std::to_string(start_depth) + " outside [1, " +
                            std::to_string(schedule_steps) + "]");
    if (num_steps > start_depth) throw ValidationError("gen: num_steps must not exceed start_depth");
  } else if (num_steps > schedule_steps) {
    throw ValidationError("gen: num_steps exceeds schedule length");
  }
}

Latent DiffusionBackend::predict_noise(const Latent& z_t, int t, const TextEmbedding& e) const {
  return {predict_noise(z_t.values, t, e.values), LatentRole::z_t};
}

Latent add_noise(const NoiseSchedule& schedule, const Latent& z, int t, const Tensor& eps) {
  schedule.require_step(t);
  require_same_shape(z.values, eps, "add_noise");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Latent out{Tensor(z.values.shape), LatentRole::z_t};
  for (std::size_t i = 0; i < eps.numel(); ++i) out.values[i] = a * z.values[i] + b * eps[i];
  return out;
}

std::vector<int> ddim_timesteps(int start_depth, int num_steps) {
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(num_steps));
  for (int k = 0; k < num_steps; ++k) {
    const long offset = std::lround(static_cast<double>(k) * start_depth / num_steps);
    ts.push_back(start_depth - static_cast<int>(offset));
  }
  return ts;
}

Latent sample(const DiffusionBackend& backend, const TextEmbedding& e, const GenConfig& gen,
              const std::optional<InitLatent>& init, std::uint64_t seed) {
  const NoiseSchedule& schedule = backend.schedule();
  const int depth = init ? init->start_depth : schedule.steps();
  GenConfig effective = gen;
  effective.start_depth = depth;
  effective.validate(init.has_value(), schedule.steps());
  if (e.values.shape != backend.embedding_shape())
    throw ValidationError("sample: embedding shape " + shape_str(e.values.shape) + " != " +
                          shape_str(backend.embedding_shape()));
  require_finite(e.values, "sample embedding");

  Rng rng(seed);
  Tensor noise = rng.normal_tensor(backend.latent_shape());
  Tensor x;
  if (init) {
    if (init->z.values.shape != backend.latent_shape())
      throw ValidationError("sample: init latent shape mismatch");
    x = add_noise(schedule, init->z, depth, noise).values;
  } else {
    x = std::move(noise);
  }

  const bool guided = gen.guidance_scale != 1.0;
  const Tensor null_e = guided ? backend.encode_text("").values : Tensor();
  const auto ts = ddim_timesteps(depth, gen.num_steps);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    Tensor eps = backend.predict_noise(x, t, e.values);
    if (guided) {
      const Tensor eps_null = backend.predict_noise(x, t, null_e);
      for (std::size_t i = 0; i < eps.numel(); ++i)
        eps[i] = eps_null[i] + gen.guidance_scale * (eps[i] - eps_null[i]);
    }
    const double ab = schedule.alpha_bar(t), ab_prev = schedule.alpha_bar(t_prev);
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    const double sa_prev = std::sqrt(ab_prev), sb_prev = std::sqrt(1.0 - ab_prev);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double x0 = (x[i] - sb * eps[i]) / sa;
      x[i] = sa_prev * x0 + sb_prev * eps[i];
    }
  }
  return {std::move(x), LatentRole::z_prime};
}

MelSpec fit_mel_frames(const MelSpec& mel, std::size_t n_frames) {
  if (mel.n_frames() == n_frames) return mel;
  MelSpec out{Tensor({mel.n_mels(), n_frames}, mel.config.log_floor), mel.config};
  const std::size_t keep = std::min(n_frames, mel.n_frames());
  for (std::size_t b = 0; b < mel.n_mels(); ++b)
    for (std::size_t f = 0; f < keep; ++f) out.at(b, f) = mel.at(b, f);
  return out;
}

std::string hash_embedding(const TextEmbedding& e) { return hash_tensor(e.values); }

}  // namespace aedit
