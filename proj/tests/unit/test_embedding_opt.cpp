// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <string>

#include "aedit/embedding_opt.hpp"
#include "aedit/errors.hpp"
#include "aedit/hashing.hpp"
#include "aedit/optim.hpp"
#include "aedit/rng.hpp"
#include "aedit/toy_backend.hpp"
#include "test_support.hpp"

using namespace aedit;

namespace {

// Toy backend whose noise predictor is replaced: it recovers eps exactly from a
// known clean latent, predicts zero, or returns NaN from a given call onwards.
class StubBackend final : public DiffusionBackend {
 public:
  enum class Mode { oracle, zero, nan_after };

  StubBackend(Mode mode, Latent clean, int nan_from_call = 0)
      : inner_(5), mode_(mode), clean_(std::move(clean)), nan_from_(nan_from_call) {}

  std::unique_ptr<DiffusionBackend> clone() const override { return std::make_unique<StubBackend>(*this); }
  std::string id() const override { return "stub"; }
  Shape latent_shape() const override { return inner_.latent_shape(); }
  Shape embedding_shape() const override { return inner_.embedding_shape(); }
  MelGeometry mel_geometry() const override { return inner_.mel_geometry(); }
  const MelConfig& mel_config() const override { return inner_.mel_config(); }
  const NoiseSchedule& schedule() const override { return inner_.schedule(); }
  Latent encode(const MelSpec& mel) const override { return inner_.encode(mel); }
  MelSpec decode(const Latent& z) const override { return inner_.decode(z); }
  TextEmbedding encode_text(std::string_view prompt) const override { return inner_.encode_text(prompt); }

  Tensor predict_noise(const Tensor& z_t, int t, const Tensor&) const override {
    ++calls_;
    switch (mode_) {
      case Mode::oracle: {
        const double ab = schedule().alpha_bar(t);
        return (1.0 / std::sqrt(1.0 - ab)) * (z_t - std::sqrt(ab) * clean_.values);
      }
      case Mode::zero:
        return Tensor(z_t.shape);
      case Mode::nan_after:
        return calls_ > nan_from_ ? Tensor(z_t.shape, std::numeric_limits<double>::quiet_NaN()) : Tensor(z_t.shape);
    }
    return Tensor(z_t.shape);
  }
  NoiseVjp predict_noise_vjp(const Tensor& z_t, int t, const Tensor& e, const UpstreamFn& upstream,
                             unsigned) const override {
    NoiseVjp out;
    out.prediction = predict_noise(z_t, t, e);
    upstream(out.prediction);
    out.d_embedding = Tensor(e.shape);
    return out;
  }

  NamedTensors& parameters() override { return inner_.parameters(); }
  const NamedTensors& parameters() const override { return inner_.parameters(); }
  std::vector<std::string> lora_target_names() const override { return {}; }
  Shape lora_target_shape(const std::string& target) const override { return inner_.lora_target_shape(target); }
  void set_adapter(std::optional<LoRAAdapter> adapter) override { inner_.set_adapter(std::move(adapter)); }
  const std::optional<LoRAAdapter>& adapter() const override { return inner_.adapter(); }
  std::optional<LoRAAdapter>& adapter() override { return inner_.adapter(); }

 private:
  ToyBackend inner_;
  Mode mode_;
  Latent clean_;
  int nan_from_;
  mutable int calls_ = 0;
};

}  // namespace

TEST_CASE("Adam matches the torch reference over two steps") {
  // torch.optim.Adam(lr=0.1), default betas and eps.
  NamedTensors params{{"w", Tensor({2}, {1.0, -3.0})}};
  Adam adam(0.1);
  adam.step(params, {{"w", Tensor({2}, {2.0, 0.5})}});
  CHECK(params.at("w")[0] == doctest::Approx(0.9000000005).epsilon(1e-14));
  CHECK(params.at("w")[1] == doctest::Approx(-3.099999998).epsilon(1e-14));
  adam.step(params, {{"w", Tensor({2}, {-1.0, 0.25})}});
  CHECK(params.at("w")[0] == doctest::Approx(0.8733662967024315).epsilon(1e-14));
  CHECK(params.at("w")[1] == doctest::Approx(-3.1932179595225376).epsilon(1e-14));
  CHECK(adam.steps_taken() == 2);
}

TEST_CASE("Adam leaves parameters without gradients alone") {
  NamedTensors params{{"a", Tensor({1}, {1.0})}, {"b", Tensor({1}, {2.0})}};
  Adam adam(0.5);
  adam.step(params, {{"a", Tensor({1}, {1.0})}});
  CHECK(params.at("b")[0] == 2.0);
  CHECK(params.at("a")[0] != 1.0);
}

TEST_CASE("diffusion loss equals an elementwise recomputation") {
  const ToyBackend backend(3);
  Rng rng(21);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const TextEmbedding e = backend.encode_text("knocking on a door");
  const Tensor eps = rng.normal_tensor(backend.latent_shape());
  const int t = 321;
  const double ab = backend.schedule().alpha_bar(t);
  Tensor z_t(z.values.shape);
  for (std::size_t i = 0; i < z_t.numel(); ++i) z_t[i] = std::sqrt(ab) * z.values[i] + std::sqrt(1 - ab) * eps[i];
  const Tensor pred = backend.predict_noise(z_t, t, e.values);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) acc += (eps[i] - pred[i]) * (eps[i] - pred[i]);
  const double expected = acc / static_cast<double>(pred.numel());
  CHECK(diffusion_loss(backend, z, e, t, eps) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(diffusion_loss_grad(backend, z, e, t, eps, kGradEmbedding).loss ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("parameter gradient matches finite differences") {
  ToyBackend backend(4);
  Rng rng(22);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const TextEmbedding e = backend.encode_text("bird chirping");
  for (int probe = 0; probe < 3; ++probe) {
    const int t = rng.uniform_int(1, 1000);
    const Tensor eps = rng.normal_tensor(backend.latent_shape());
    const LossGrad lg = diffusion_loss_grad(backend, z, e, t, eps, kGradBase);
    NamedTensors dir;
    double analytic = 0.0;
    for (const auto& [name, p] : backend.parameters()) {
      dir.emplace(name, rng.normal_tensor(p.shape));
      analytic += dot(lg.d_params.at(name), dir.at(name));
    }
    const NamedTensors base = backend.parameters();
    const double h = 1e-5;
    auto shifted = [&](double s) {
      for (auto& [name, p] : backend.parameters()) p = base.at(name) + s * dir.at(name);
      return diffusion_loss(backend, z, e, t, eps);
    };
    const double fd = (shifted(h) - shifted(-h)) / (2 * h);
    backend.parameters() = base;
    CHECK(std::abs(analytic - fd) <= 1e-3 * std::abs(fd));
  }
}

TEST_CASE("loss battery is seeded and sized") {
  const ToyBackend backend(0);
  const auto a = make_loss_battery(backend, 64, 5);
  const auto b = make_loss_battery(backend, 64, 5);
  REQUIRE(a.size() == 64);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].t == b[i].t);
    CHECK(a[i].eps == b[i].eps);
    CHECK(a[i].t >= 1);
    CHECK(a[i].t <= 1000);
  }
}

TEST_CASE("embedding optimization is read-only, seeded and traced") {
  const ToyBackend backend(5);
  Rng rng(23);
  const Latent z{rng.normal_tensor(backend.latent_shape())};
  const TextEmbedding e_target = backend.encode_text("siren");
  const std::string before = hash_named(backend.parameters());
  OptConfig cfg;
  cfg.num_steps = 25;
  cfg.seed = 3;
  const auto [e1, trace] = optimize_embedding(backend, z, e_target, cfg);
  const auto [e2, trace2] = optimize_embedding(backend, z, e_target, cfg);
  CHECK(hash_named(backend.parameters()) == before);
  CHECK(e1.values == e2.values);
  CHECK(trace.loss == trace2.loss);
  CHECK(trace.size() == 25);
  CHECK(trace.seconds.size() == 25);
  CHECK(e1.role == EmbeddingRole::optimized);
  CHECK(!(e1.values == e_target.values));

  cfg.num_steps = 0;
  CHECK(optimize_embedding(backend, z, e_target, cfg).first.values == e_target.values);
}

TEST_CASE("embedding optimization lowers the fixed battery loss") {
  const ToyBackend backend(5);
  Rng rng(24);
  const Latent z{rng.normal_tensor(backend.latent_shape(), 0.5)};
  const TextEmbedding e_target = backend.encode_text("dog barking");
  OptConfig cfg;
  cfg.num_steps = 150;
  cfg.learning_rate = 1e-2;
  const auto battery = make_loss_battery(backend, 64, 99);
  const auto [e_opt, trace] = optimize_embedding(backend, z, e_target, cfg);
  CHECK(battery_loss(backend, z, e_opt, battery) < battery_loss(backend, z, e_target, battery));
}

TEST_CASE("optimizer config validation") {
  OptConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = OptConfig{};
  cfg.batch_noise_draws = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = OptConfig{};
  cfg.num_steps = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("trailing moving average") {
  CHECK(smooth_trace({1, 2, 3, 4, 5}, 2) == std::vector<double>{1.5, 2.5, 3.5, 4.5});
  CHECK(smooth_trace({1, 2, 3}, 3) == std::vector<double>{2.0});
  CHECK(smooth_trace({1, 2}, 3).empty());
  CHECK(smooth_trace({4, 5}, 1) == std::vector<double>{4, 5});
  CHECK_THROWS_AS(smooth_trace({1.0}, 0), ValidationError);
}

TEST_CASE("loss trace csv") {
  const auto dir = testing::fresh_dir("opt_trace");
  LossTrace trace{{0.5, 0.25}, {0.1, 0.2}};
  trace.write_csv(dir / "t.csv");
  std::ifstream in(dir / "t.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "step,loss,seconds");
  CHECK(row.rfind("1,0.5,", 0) == 0);
}

TEST_CASE("a perfect noise predictor has zero loss and a zero predictor unit loss") {
  Rng rng(31);
  const Latent z{rng.normal_tensor({4, 16, 16})};
  const StubBackend oracle(StubBackend::Mode::oracle, z);
  const StubBackend zero(StubBackend::Mode::zero, z);
  const TextEmbedding e = oracle.encode_text("rain");
  for (int t : {1, 200, 1000}) {
    Rng draw(static_cast<std::uint64_t>(t));
    Tensor eps(z.values.shape, 1.0);
    if (t == 200) eps = draw.normal_tensor(z.values.shape);
    CHECK(std::abs(diffusion_loss(oracle, z, e, t, eps)) < 1e-18);
    if (t != 200) CHECK(diffusion_loss(zero, z, e, t, eps) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("a non-finite loss stops optimization and names the step") {
  Rng rng(32);
  const Latent z{rng.normal_tensor({4, 16, 16})};
  const StubBackend backend(StubBackend::Mode::nan_after, z, 6);
  OptConfig cfg;
  cfg.num_steps = 20;
  try {
    optimize_embedding(backend, z, backend.encode_text("rain"), cfg);
    FAIL("expected a NumericError");
  } catch (const NumericError& err) {
    CHECK(std::string(err.what()).find("step 7") != std::string::npos);
  }
}
