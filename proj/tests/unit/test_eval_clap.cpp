// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "aedit/errors.hpp"
#include "aedit/eval_clap.hpp"
#include "aedit/rng.hpp"
#include "aedit/toy_sounds.hpp"
#include "test_support.hpp"

using namespace aedit;

namespace {

AudioClip scene(const char* word, std::uint64_t seed) {
  return synthesize_scene({find_sound_class(word)}, 1.0, 16000, seed);
}

std::vector<ScoreReport> curve(const std::vector<double>& sums) {
  std::vector<ScoreReport> out;
  for (std::size_t i = 0; i < sums.size(); ++i)
    out.push_back(make_score_report(sums[i] / 2, sums[i] / 2, static_cast<double>(i) / 10.0, "toy-clap-v1"));
  return out;
}

}  // namespace

TEST_CASE("cosine similarity") {
  Rng rng(1);
  const Tensor a = rng.normal_tensor({64}), b = rng.normal_tensor({64});
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, -1.0 * a) == doctest::Approx(-1.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(cosine_similarity(b, a)));
  CHECK(cosine_similarity(a, 3.5 * b) == doctest::Approx(cosine_similarity(a, b)));
  CHECK_THROWS_AS(cosine_similarity(a, Tensor({64})), ValidationError);
  CHECK_THROWS_AS(cosine_similarity(a, Tensor({63}, 1.0)), ValidationError);
}

TEST_CASE("scores land in [-1, 1] and the sum is their total") {
  const ToyClapEmbedder embedder;
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const AudioClip a = scene("dog", rng.engine()()), b = scene("rain", rng.engine()());
    const ScoreReport r = score_edit(embedder, a, b, "dog barking in the rain", 0.3);
    CHECK(r.text_clap >= -1.0);
    CHECK(r.text_clap <= 1.0);
    CHECK(r.audio_clap >= -1.0);
    CHECK(r.audio_clap <= 1.0);
    CHECK(r.sum == r.text_clap + r.audio_clap);
    CHECK(r.eta == 0.3);
    CHECK(r.embedder_id == "toy-clap-v1");
  }
}

TEST_CASE("an unchanged clip scores audio 1") {
  const ToyClapEmbedder embedder;
  const AudioClip a = scene("engine", 4);
  CHECK(score_edit(embedder, a, a, "engine", 0.0).audio_clap == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("text anchors prefer the matching sound") {
  const ToyClapEmbedder embedder;
  const JointEmbedding siren = embedder.embed_audio(scene("siren", 5));
  const JointEmbedding knock = embedder.embed_audio(scene("knock", 6));
  const JointEmbedding rain = embedder.embed_audio(scene("rain", 7));
  const JointEmbedding t_siren = embedder.embed_text("a siren wailing");
  const JointEmbedding t_knock = embedder.embed_text("knocking on a door");
  const JointEmbedding t_rain = embedder.embed_text("rain");
  CHECK(text_clap(siren, t_siren) > text_clap(siren, t_knock));
  CHECK(text_clap(knock, t_knock) > text_clap(knock, t_siren));
  CHECK(text_clap(rain, t_rain) > text_clap(rain, t_knock));
  CHECK(text_clap(rain, t_rain) > text_clap(siren, t_rain));
  CHECK_THROWS_AS(text_clap(siren, knock), ValidationError);
  CHECK_THROWS_AS(audio_clap(siren, t_rain), ValidationError);
}

TEST_CASE("embeddings are deterministic") {
  const ToyClapEmbedder a, b;
  const AudioClip clip = scene("bird", 8);
  CHECK(a.embed_audio(clip).values == b.embed_audio(clip).values);
  CHECK(a.embed_text("birds chirping").values == b.embed_text("birds chirping").values);
  CHECK_THROWS_AS(a.embed_text("the of a"), ValidationError);
  AudioClip silent;
  silent.samples.assign(16000, 0.0);
  CHECK_THROWS(a.embed_audio(silent));
}

TEST_CASE("eta selection") {
  CHECK(select_eta(curve({1.0, 1.2, 1.5, 1.3})).first == doctest::Approx(0.2));
  // Ties resolve to the smaller strength.
  CHECK(select_eta(curve({1.0, 1.4, 1.4, 1.2})).first == doctest::Approx(0.1));
  CHECK(select_eta(curve({0.7})).first == 0.0);
  CHECK_THROWS_AS(select_eta({}), ValidationError);
  auto mixed = curve({1.0, 1.1});
  mixed[1].embedder_id = "other";
  CHECK_THROWS_AS(select_eta(mixed), ValidationError);
}

TEST_CASE("eta selection is invariant to monotone rescaling of the sum") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> sums(11);
    for (double& s : sums) s = rng.uniform_int(0, 6) * 0.25;  // coarse values force ties
    std::vector<double> warped;
    for (double s : sums) warped.push_back(std::exp(3.0 * s) - 7.0);
    CHECK(select_eta(curve(sums)).first == select_eta(curve(warped)).first);
  }
}

TEST_CASE("score table renders three decimals") {
  const auto dir = testing::fresh_dir("clap_csv");
  write_score_csv(dir / "s.csv", {{"addition", "ours", "mean", make_score_report(0.544, 0.822, 0.0, "x")}});
  std::ifstream in(dir / "s.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "edit_type,pipeline,item,sum,text,audio");
  CHECK(row == "addition,ours,mean,1.366,0.544,0.822");
}

TEST_CASE("curve csv round trip") {
  const auto dir = testing::fresh_dir("clap_curve");
  Rng rng(10);
  std::vector<ScoreReport> reports;
  for (int i = 0; i <= 10; ++i)
    reports.push_back(make_score_report(rng.uniform(), rng.uniform(), i / 10.0, "toy-clap-v1"));
  write_curve_csv(dir / "c.csv", reports);
  const auto back = read_curve_csv(dir / "c.csv");
  REQUIRE(back.size() == reports.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].eta == reports[i].eta);
    CHECK(back[i].text_clap == reports[i].text_clap);
    CHECK(back[i].audio_clap == reports[i].audio_clap);
    CHECK(back[i].sum == reports[i].sum);
  }
  write_curve_svg(dir / "c.svg", reports, "curve");
  CHECK(std::filesystem::file_size(dir / "c.svg") > 0);
}
