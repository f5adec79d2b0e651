#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vqrank/errors.hpp"
#include "vqrank/scoring.hpp"

using namespace vqr;
using vqr::testing::random_record;

namespace {

std::vector<VideoRecord> random_corpus(std::uint64_t seed, std::size_t n, std::size_t dt, std::size_t df) {
  Rng rng(seed);
  std::vector<VideoRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(random_record(rng, 1 + rng.below(kMaxFrames), dt, df, std::nullopt, "v" + std::to_string(i)));
  }
  return out;
}

}  // namespace

TEST_CASE("zero parameters score one half with uniform weights") {
  const ModelParameters<float> model = zero_parameters<float>(default_model_config(6, 5, 8, 2));
  for (const VideoRecord& r : random_corpus(1, 10, 6, 5)) {
    const ScoredVideo s = score_record(r, model);
    CHECK(s.score == 0.5);
    for (const double z : s.weights) CHECK(std::abs(z - 0.25) < 1e-7);
  }
}

TEST_CASE("scoring is deterministic and order preserving") {
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(6, 5, 8, 2), 2);
  const std::vector<VideoRecord> corpus = random_corpus(2, 15, 6, 5);
  const std::vector<ScoredVideo> a = score_corpus(corpus, model);
  REQUIRE(a.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(a[i].id == corpus[i].id);
    CHECK(a[i] == score_record(corpus[i], model));
  }
  CHECK(score_corpus({}, model).empty());
}

TEST_CASE("duplicated records score identically") {
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(6, 5, 8, 2), 3);
  const VideoRecord r = random_corpus(3, 1, 6, 5)[0];
  const std::vector<ScoredVideo> out = score_corpus({r, r, r}, model);
  CHECK(out[0] == out[1]);
  CHECK(out[1] == out[2]);
}

TEST_CASE("parallel scoring equals serial scoring") {
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(6, 5, 8, 2), 4);
  const std::vector<VideoRecord> corpus = random_corpus(4, 60, 6, 5);
  const std::vector<ScoredVideo> serial = score_corpus(corpus, model, 1);
  CHECK(score_corpus(corpus, model, 4) == serial);
  CHECK(score_corpus(corpus, model, 0) == serial);
}

TEST_CASE("scores lie strictly inside (0, 1) and weights sum to one") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParameters<float> model = initialize_parameters<float>(default_model_config(6, 5, 8, 2), trial);
    // Inflate the branch heads so the logit spans a wide range.
    for (float& v : model.slots.branches.frame_quality.w2.data()) v *= 20.0f;
    for (const VideoRecord& r : random_corpus(100 + trial, 5, 6, 5)) {
      const ScoredVideo s = score_record(r, model);
      CHECK(s.score > 0.0);
      CHECK(s.score < 1.0);
      double total = 0.0;
      for (const double z : s.weights) total += z;
      CHECK(std::abs(total - 1.0) < 1e-6);
      CHECK(s.branches.s_vt == doctest::Approx((s.branches.s_vt_global + s.branches.s_vt_local) / 2.0));
    }
  }
}

TEST_CASE("disabled branches get zero weight and zero score") {
  ModelConfig c = default_model_config(6, 5, 8, 2);
  c.branches = {true, false, true, true};
  const ModelParameters<float> model = initialize_parameters<float>(c, 6);
  for (const VideoRecord& r : random_corpus(6, 5, 6, 5)) {
    const ScoredVideo s = score_record(r, model);
    CHECK(s.weights[1] == 0.0);
    CHECK(s.branches.s_fc == 0.0);
    CHECK(std::abs(s.weights[0] + s.weights[2] + s.weights[3] - 1.0) < 1e-6);
  }
}

TEST_CASE("records that do not fit the model are configuration errors") {
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(6, 5, 8, 2), 7);
  const std::vector<VideoRecord> wrong = random_corpus(7, 3, 7, 5);
  CHECK_THROWS_AS(score_record(wrong[0], model), ConfigError);
  std::vector<VideoRecord> mixed = random_corpus(8, 6, 6, 5);
  mixed[4] = wrong[1];
  CHECK_THROWS_AS(score_corpus(mixed, model, 3), ConfigError);
}

TEST_CASE("scored json carries every branch") {
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(6, 5, 8, 2), 8);
  const ScoredVideo s = score_record(random_corpus(9, 1, 6, 5)[0], model);
  const nlohmann::ordered_json j = scored_to_json(s);
  CHECK(j["id"] == "v0");
  CHECK(j["score"] == s.score);
  for (const char* b : {"vtmab", "fcab", "fqab", "tqab"}) {
    CHECK(j["branch_scores"].contains(b));
    CHECK(j["branch_weights"].contains(b));
  }
  CHECK(j["branch_scores"].size() == 6);
}
