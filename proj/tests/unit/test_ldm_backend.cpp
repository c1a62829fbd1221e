// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "aedit/embedding_opt.hpp"
#include "aedit/errors.hpp"
#include "aedit/hashing.hpp"
#include "aedit/ldm_backend.hpp"
#include "aedit/rng.hpp"
#include "aedit/toy_backend.hpp"
#include "aedit/toy_pretrain.hpp"
#include "test_support.hpp"

using namespace aedit;

namespace {

double rel_l2(const Tensor& a, const Tensor& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("linear schedule matches the numpy reference") {
  const NoiseSchedule s;
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1) == doctest::Approx(9.999000000000000e-01).epsilon(1e-13));
  CHECK(s.alpha_bar(10) == doctest::Approx(9.981052047858344e-01).epsilon(1e-13));
  CHECK(s.alpha_bar(200) == doctest::Approx(6.590385082317941e-01).epsilon(1e-12));
  CHECK(s.alpha_bar(1000) == doctest::Approx(4.035829765375676e-05).epsilon(1e-10));
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(2e-2));
  CHECK_THROWS_AS(s.require_step(0), ValidationError);
  CHECK_THROWS_AS(s.require_step(1001), ValidationError);
  CHECK_THROWS_AS(NoiseSchedule(ScheduleConfig{1000, 0.3, 0.1}), ValidationError);
}

TEST_CASE("DDIM timesteps") {
  CHECK(ddim_timesteps(200, 7) == std::vector<int>{200, 171, 143, 114, 86, 57, 29});
  CHECK(ddim_timesteps(1000, 3) == std::vector<int>{1000, 667, 333});
  CHECK(ddim_timesteps(5, 5) == std::vector<int>{5, 4, 3, 2, 1});
}

TEST_CASE("closed-form noising equals composed single steps") {
  const NoiseSchedule s;
  Rng rng(3);
  const ToyBackend backend(1);
  for (int trial = 0; trial < 3; ++trial) {
    const Latent z{rng.normal_tensor(backend.latent_shape())};
    for (int t = 1; t <= 20; ++t) {
      // Compose x_k = sqrt(1 - beta_k) x_{k-1} + sqrt(beta_k) n_k and aggregate the noise.
      Tensor x = z.values;
      Tensor eps_acc(z.values.shape);
      double var = 0.0;
      for (int k = 1; k <= t; ++k) {
        const Tensor n = rng.normal_tensor(z.values.shape);
        const double a = std::sqrt(1.0 - s.beta(k)), b = std::sqrt(s.beta(k));
        x = a * x + b * n;
        eps_acc = a * eps_acc + b * n;
        var = (1.0 - s.beta(k)) * var + s.beta(k);
      }
      const Tensor eps = (1.0 / std::sqrt(var)) * eps_acc;
      const Latent closed = add_noise(s, z, t, eps);
      CHECK(max_abs_diff(closed.values, x) < 1e-5);
      CHECK(var == doctest::Approx(1.0 - s.alpha_bar(t)).epsilon(1e-12));
    }
  }
}

TEST_CASE("noising preconditions") {
  const NoiseSchedule s;
  const Latent z{Tensor({4, 16, 16})};
  CHECK_THROWS_AS(add_noise(s, z, 0, Tensor({4, 16, 16})), ValidationError);
  CHECK_THROWS_AS(add_noise(s, z, 5, Tensor({4, 16, 15})), ValidationError);
}

TEST_CASE("sampling from a nearly clean latent stays close to it") {
  const ToyBackend backend(2);
  Rng rng(4);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const TextEmbedding e = backend.encode_text("dog barking");
  GenConfig gen;
  gen.num_steps = 1;
  gen.start_depth = 1;
  const Latent out = sample(backend, e, gen, InitLatent{z, 1}, 9);
  // The gap is 0.01 times the noise/prediction mismatch; measured 0.0403 max, 0.0116 relative.
  CHECK(max_abs_diff(out.values, z.values) < 0.08);
  CHECK(rel_l2(out.values, z.values) < 0.02);
}

TEST_CASE("sampling is deterministic and validates its config") {
  const ToyBackend backend(2);
  Rng rng(4);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const TextEmbedding e = backend.encode_text("rain");
  GenConfig gen;
  gen.num_steps = 10;
  gen.start_depth = 50;
  const Latent a = sample(backend, e, gen, InitLatent{z, 50}, 1);
  const Latent b = sample(backend, e, gen, InitLatent{z, 50}, 1);
  CHECK(a.values == b.values);
  CHECK(!(sample(backend, e, gen, InitLatent{z, 50}, 2).values == a.values));
  gen.num_steps = 60;
  CHECK_THROWS_AS(sample(backend, e, gen, InitLatent{z, 50}, 1), ValidationError);
  gen.num_steps = 10;
  gen.guidance_scale = 0.5;
  CHECK_THROWS_AS(sample(backend, e, gen, InitLatent{z, 50}, 1), ValidationError);
  gen.guidance_scale = 1.0;
  CHECK_THROWS_AS(sample(backend, TextEmbedding{Tensor({3})}, gen, InitLatent{z, 50}, 1), ValidationError);
}

TEST_CASE("toy VAE reconstructs a training sample") {
  const MelConfig mel;
  const auto corpus = make_toy_corpus(64, 17, mel, 32);
  std::vector<MelSpec> mels;
  for (const auto& item : corpus) mels.push_back(item.mel);
  ToyBackend backend(0);
  backend.vae().fit(mels);
  for (std::size_t i : {0u, 13u, 41u}) {
    const MelSpec& m = corpus[i].mel;
    const MelSpec r = backend.decode(backend.encode(m));
    CHECK(rel_l2(r.values, m.values) < 0.2);
  }
}

TEST_CASE("decoder is continuous") {
  const ToyBackend backend(0);
  Rng rng(8);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const Tensor dir = rng.normal_tensor(backend.latent_shape());
  const MelSpec base = backend.decode(z);
  double previous = 1e300;
  for (double scale : {1e-1, 1e-3, 1e-5}) {
    const MelSpec moved = backend.decode(Latent{z.values + scale * dir});
    const double gap = (moved.values - base.values).norm();
    CHECK(gap < previous);
    CHECK(gap < 100.0 * scale * dir.norm());
    previous = gap;
  }
}

TEST_CASE("latent and embedding shapes") {
  const ToyBackend backend(0);
  CHECK(backend.latent_shape() == Shape{4, 16, 16});
  CHECK(backend.embedding_shape() == Shape{8, 32});
  CHECK(backend.mel_geometry().n_mels == 64);
  CHECK(backend.mel_geometry().n_frames == 32);
  CHECK_THROWS_AS(backend.encode(MelSpec{Tensor({32, 32}), MelConfig{}}), ValidationError);
  // Short inputs are padded with the log floor rather than rejected.
  MelSpec short_mel{Tensor({64, 10}, -11.52), MelConfig{}};
  MelSpec padded{Tensor({64, 32}, -11.52), MelConfig{}};
  CHECK(backend.encode(short_mel).values == backend.encode(padded).values);
  padded.values[7] = std::nan("");
  CHECK_THROWS_AS(backend.encode(padded), ValidationError);
  CHECK(backend.decode(Latent{Tensor(backend.latent_shape())}).values.all_finite());
}

TEST_CASE("text encoder drops stopwords and is deterministic") {
  CHECK(ToyTextEncoder::tokenize("The sound of a Dog, barking!") == std::vector<std::string>{"dog", "barking"});
  const ToyBackend backend(0);
  CHECK(backend.encode_text("dog barking").values == backend.encode_text("dog barking").values);
  CHECK(!(backend.encode_text("dog barking").values == backend.encode_text("siren").values));
}

TEST_CASE("save, load and clone preserve predictions") {
  const auto dir = testing::fresh_dir("ldm_save");
  ToyBackend backend(6);
  backend.set_lineage("abc");
  Rng rng(1);
  const Tensor z = rng.normal_tensor(backend.latent_shape());
  const Tensor e = backend.encode_text("engine idling").values;
  backend.save(dir / "b.safetensors");
  const ToyBackend loaded = ToyBackend::load(dir / "b.safetensors");
  CHECK(loaded.predict_noise(z, 300, e) == backend.predict_noise(z, 300, e));
  CHECK(loaded.lineage() == "abc");
  CHECK(hash_named(loaded.parameters()) == hash_named(backend.parameters()));

  auto copy = backend.clone();
  copy->parameters().begin()->second[0] += 1.0;
  CHECK(hash_named(copy->parameters()) != hash_named(backend.parameters()));
}

TEST_CASE("embedding gradient matches finite differences") {
  const ToyBackend backend(11);
  Rng rng(12);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const TextEmbedding e = backend.encode_text("siren wailing");
  for (int probe = 0; probe < 4; ++probe) {
    const int t = rng.uniform_int(1, 1000);
    const Tensor eps = rng.normal_tensor(backend.latent_shape());
    const Tensor dir = rng.normal_tensor(backend.embedding_shape());
    const LossGrad lg = diffusion_loss_grad(backend, z, e, t, eps, kGradEmbedding);
    const double h = 1e-5;
    const double fd = (diffusion_loss(backend, z, TextEmbedding{e.values + h * dir}, t, eps) -
                       diffusion_loss(backend, z, TextEmbedding{e.values - (h * dir)}, t, eps)) /
                      (2 * h);
    const double an = dot(lg.d_embedding, dir);
    CHECK(std::abs(an - fd) <= 1e-3 * std::max(std::abs(fd), 1e-8));
  }
}
