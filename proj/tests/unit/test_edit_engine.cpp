// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "aedit/edit_engine.hpp"
#include "aedit/errors.hpp"
#include "aedit/rng.hpp"
#include "aedit/toy_backend.hpp"
#include "test_support.hpp"

using namespace aedit;

namespace {

MelSpec random_mel(std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  return MelSpec{rng.normal_tensor({64, frames}), MelConfig{}};
}

struct SweepFixture {
  ToyBackend backend{7};
  Latent z;
  TextEmbedding e_target;
  TextEmbedding e_opt;
  GenConfig gen;
  ToyVocoder vocoder{MelConfig{}};

  SweepFixture() {
    Rng rng(31);
    z = Latent{rng.normal_tensor(backend.latent_shape())};
    e_target = backend.encode_text("dog barking");
    e_opt = TextEmbedding{backend.encode_text("rain").values + rng.normal_tensor(backend.embedding_shape(), 0.1),
                          EmbeddingRole::optimized};
    backend.set_lineage(hash_embedding(e_opt));
    gen.num_steps = 4;
    gen.start_depth = 40;
  }
};

}  // namespace

TEST_CASE("interpolation endpoints and linearity") {
  Rng rng(1);
  const TextEmbedding a{rng.normal_tensor({8, 32})};
  const TextEmbedding b{rng.normal_tensor({8, 32})};
  CHECK(interpolate(a, b, 1.0).values == a.values);
  CHECK(interpolate(a, b, 0.0).values == b.values);
  CHECK(max_abs_diff(interpolate(a, b, 0.5).values, 0.5 * (a.values + b.values)) < 1e-15);
  for (int trial = 0; trial < 50; ++trial) {
    const double eta = rng.uniform();
    const Tensor expected = b.values + eta * (a.values - b.values);
    CHECK(max_abs_diff(interpolate(a, b, eta).values, expected) < 1e-12);
  }
  CHECK_THROWS_AS(interpolate(a, b, 1.5), ValidationError);
  CHECK_THROWS_AS(interpolate(a, TextEmbedding{Tensor({8, 31})}, 0.5), ValidationError);
}

TEST_CASE("mask parsing") {
  CHECK(parse_mask("2:4") == std::vector<MaskInterval>{{2.0, 4.0}});
  CHECK(parse_mask("0.5:1,3:3.25") == std::vector<MaskInterval>{{0.5, 1.0}, {3.0, 3.25}});
  CHECK(parse_mask(format_mask({{0.1, 0.7}, {1.0 / 3.0, 0.9}})) ==
        std::vector<MaskInterval>{{0.1, 0.7}, {1.0 / 3.0, 0.9}});
  CHECK_THROWS_AS(parse_mask("2-4"), ValidationError);
  CHECK_THROWS_AS(parse_mask("a:4"), ValidationError);
  CHECK(edit_type_from_string("style_transfer") == EditType::style_transfer);
  CHECK_THROWS_AS(edit_type_from_string("removal"), ValidationError);
}

TEST_CASE("a 2-4 s mask covers frames 200 to 399") {
  const MelSpec mel = random_mel(1001, 2);
  const auto [first, last] = mask_frames({2.0, 4.0}, mel.config);
  CHECK(first == 200);
  CHECK(last == 400);
  const auto flags = mask_frame_flags({{2.0, 4.0}}, mel);
  for (std::size_t f = 0; f < flags.size(); ++f) CHECK(flags[f] == (f >= 200 && f < 400));
  CHECK_THROWS_AS(mask_frame_flags({{9.0, 11.0}}, mel), ValidationError);
  CHECK_THROWS_AS(mask_frame_flags({{1.0, 3.0}, {2.0, 4.0}}, mel), ValidationError);
  CHECK_THROWS_AS(mask_frame_flags({{3.0, 2.0}}, mel), ValidationError);
}

TEST_CASE("composite with empty and full masks") {
  const MelSpec input = random_mel(100, 3), generated = random_mel(100, 4);
  CHECK(inpaint_composite(input, generated, {}).values == input.values);
  CHECK(inpaint_composite(input, generated, {{0.0, 1.0}}).values == generated.values);
}

TEST_CASE("composite keeps unmasked frames and replaces masked ones") {
  Rng rng(5);
  const MelSpec input = random_mel(300, 6), generated = random_mel(300, 7);
  const double duration = 3.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<MaskInterval> mask;
    double cursor = 0.0;
    const int pieces = rng.uniform_int(1, 3);
    for (int p = 0; p < pieces && cursor < duration - 0.05; ++p) {
      const double start = cursor + rng.uniform() * (duration - cursor) * 0.5;
      const double end = std::min(duration, start + 0.01 + rng.uniform() * 0.8);
      mask.push_back({start, end});
      cursor = end;
    }
    const auto flags = mask_frame_flags(mask, input);
    const MelSpec out = inpaint_composite(input, generated, mask);
    const MelSpec blank = blank_masked(input, mask);
    bool ok = true;
    for (std::size_t b = 0; b < 64; ++b)
      for (std::size_t f = 0; f < 300; ++f) {
        ok = ok && out.at(b, f) == (flags[f] ? generated.at(b, f) : input.at(b, f));
        ok = ok && blank.at(b, f) == (flags[f] ? input.config.log_floor : input.at(b, f));
      }
    CHECK(ok);
  }
}

TEST_CASE("edit request validation") {
  EditRequest req;
  req.input = testing::sine(440.0, 1.0);
  req.prompt = "add rain";
  CHECK_NOTHROW(req.validate());
  req.eta = 1.2;
  CHECK_THROWS_AS(req.validate(), ValidationError);
  req.eta = 0.5;
  req.edit_type = EditType::inpainting;
  CHECK_THROWS_AS(req.validate(), ValidationError);
  req.mask = {{0.2, 0.6}};
  CHECK_NOTHROW(req.validate());
  req.mask = {{0.2, 1.6}};
  CHECK_THROWS_AS(req.validate(), ValidationError);
  req.edit_type = EditType::addition;
  req.mask = {{0.2, 0.6}};
  CHECK_THROWS_AS(req.validate(), ValidationError);
  req.mask.clear();
  req.prompt.clear();
  CHECK_THROWS_AS(req.validate(), ValidationError);
}

TEST_CASE("default eta grid") {
  const auto grid = default_eta_grid();
  REQUIRE(grid.size() == 11);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1.0);
  CHECK(grid[3] == doctest::Approx(0.3));
}

TEST_CASE("sweep points equal single edits and do not depend on workers") {
  const SweepFixture fx;
  const std::vector<double> etas{0.0, 0.4, 1.0};
  const auto serial = eta_sweep(fx.backend, fx.z, fx.e_target, fx.e_opt, etas, fx.gen, 5, fx.vocoder, 1);
  const auto parallel = eta_sweep(fx.backend, fx.z, fx.e_target, fx.e_opt, etas, fx.gen, 5, fx.vocoder, 3);
  REQUIRE(serial.size() == etas.size());
  for (std::size_t i = 0; i < etas.size(); ++i) {
    CHECK(serial[i].eta == etas[i]);
    CHECK(serial[i].z_prime.values == parallel[i].z_prime.values);
    CHECK(serial[i].edited_audio.samples == parallel[i].edited_audio.samples);
    const EditResult single = generate_edit(fx.backend, fx.z, fx.e_target, fx.e_opt, etas[i], fx.gen, 5, fx.vocoder);
    CHECK(single.z_prime.values == serial[i].z_prime.values);
  }
  CHECK(!(serial[0].z_prime.values == serial[2].z_prime.values));
  CHECK(serial[0].provenance.at("e_opt") == hash_embedding(fx.e_opt));
  CHECK_THROWS_AS(eta_sweep(fx.backend, fx.z, fx.e_target, fx.e_opt, {0.5, 0.2}, fx.gen, 5, fx.vocoder),
                  ValidationError);
  CHECK_THROWS_AS(eta_sweep(fx.backend, fx.z, fx.e_target, fx.e_opt, {}, fx.gen, 5, fx.vocoder), ValidationError);
}

TEST_CASE("generation requires a backend tuned against the optimized embedding") {
  SweepFixture fx;
  fx.backend.set_lineage("something else");
  CHECK_THROWS_AS(generate_edit(fx.backend, fx.z, fx.e_target, fx.e_opt, 0.5, fx.gen, 1, fx.vocoder), StateError);
}

TEST_CASE("spearman with ties matches scipy") {
  CHECK(spearman({1, 2, 2, 3, 5, 0.5}, {2, 1, 4, 4, 9, 3}) == doctest::Approx(0.661764705882353).epsilon(1e-13));
  CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {1, 1, 1}) == 0.0);
  CHECK_THROWS_AS(spearman({1}, {1}), ValidationError);
}
