#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "model_check.hpp"
#include "support.hpp"
#include "vqrank/checkpoint.hpp"
#include "vqrank/errors.hpp"
#include "vqrank/synthetic.hpp"
#include "vqrank/training.hpp"

using namespace vqr;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vqrank_test_training_" + name);
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

bool same_slots(const ModelSlots<Tensor<float>>& a, const ModelSlots<Tensor<float>>& b) {
  bool same = true;
  visit_slots([&](const std::string&, const Tensor<float>& x, const Tensor<float>& y) { same &= bitwise_equal(x, y); },
              a, b);
  return same;
}

SynthConfig small_synth(std::size_t n) {
  SynthConfig c;
  c.n_records = n;
  c.text_dim = 8;
  c.frame_dim = 8;
  c.frames = 4;
  return c;
}

TrainConfig small_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 16;
  t.learning_rate = 1e-3;
  t.model = default_model_config(8, 8, 8, 2);
  return t;
}

}  // namespace

TEST_CASE("adam leaves parameters alone under a zero gradient") {
  std::vector<float> p = {0.5f, -1.0f}, g = {0.0f, 0.0f}, m = {0.0f, 0.0f}, v = {0.0f, 0.0f};
  adam_update(p, g, m, v, 1, 1e-3);
  CHECK(p == std::vector<float>{0.5f, -1.0f});
}

TEST_CASE("first adam step moves by the learning rate") {
  std::vector<float> p = {0.0f}, g = {1.0f}, m = {0.0f}, v = {0.0f};
  adam_update(p, g, m, v, 1, 1e-3);
  CHECK(p[0] == static_cast<float>(-0.001 / (1.0 + 1e-8)));
  CHECK(m[0] == 0.1f);
  CHECK(v[0] == static_cast<float>(0.001));
}

TEST_CASE("second adam step with the same gradient is no larger") {
  std::vector<float> p = {1.0f}, g = {1.0f}, m = {0.0f}, v = {0.0f};
  adam_update(p, g, m, v, 1, 1e-3);
  const double first = 1.0 - p[0];
  const float before = p[0];
  adam_update(p, g, m, v, 2, 1e-3);
  const double second = static_cast<double>(before) - p[0];
  CHECK(second > 0.0);
  CHECK(second <= first);
}

TEST_CASE("a non-finite gradient aborts the whole step") {
  const ModelConfig c = default_model_config(6, 5, 8, 2);
  ModelParameters<float> params = initialize_parameters<float>(c, 1);
  const ModelParameters<float> before = params;
  AdamState state = make_adam_state(c);
  ModelSlots<Tensor<float>> grads = zero_parameters<float>(c).slots;
  for (float& x : grads.text.weight.data()) x = 1.0f;
  grads.se.excite[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(params, grads, state, 1e-3), NumericError);
  CHECK(state.step == 0);
  CHECK(same_slots(params.slots, before.slots));
  CHECK(same_slots(state.first_moment, zero_parameters<float>(c).slots));
}

TEST_CASE("zero learning rate returns the initialization bit for bit") {
  const std::vector<VideoRecord> corpus = generate_corpus(small_synth(64)).records;
  TrainConfig cfg = small_train();
  cfg.learning_rate = 0.0;
  const TrainResult r = train(corpus, cfg);
  const ModelParameters<float> init = initialize_parameters<float>(r.params.config, cfg.seed);
  CHECK(same_slots(r.params.slots, init.slots));
  CHECK(r.history.size() == 2);
}

TEST_CASE("training twice gives identical history and checkpoint bytes") {
  const std::vector<VideoRecord> corpus = generate_corpus(small_synth(80)).records;
  const TrainConfig cfg = small_train();
  const TrainResult a = train(corpus, cfg);
  const TrainResult b = train(corpus, cfg);
  CHECK(history_to_json(a).dump() == history_to_json(b).dump());
  const auto pa = temp_path("a.ckpt"), pb = temp_path("b.ckpt");
  save_checkpoint(a.params, a.adam, pa);
  save_checkpoint(b.params, b.adam, pb);
  CHECK(read_bytes(pa) == read_bytes(pb));
  std::filesystem::remove(pa);
  std::filesystem::remove(pb);
  CHECK(a.train_records + a.validation_records == corpus.size());
}

TEST_CASE("one step on a lossy batch changes every tensor") {
  const ModelConfig c = default_model_config(8, 8, 8, 2);
  ModelParameters<float> params = initialize_parameters<float>(c, 2);
  const ModelParameters<float> before = params;
  Rng rng(3);
  std::vector<VideoRecord> records;
  for (const Grade g : kAllGrades) records.push_back(vqr::testing::random_record(rng, 4, 8, 8, g));
  std::vector<const VideoRecord*> batch;
  for (const VideoRecord& r : records) batch.push_back(&r);
  const BatchGradient bg = batch_gradient(params, batch, LossConfig{}, ForwardMode::inference());
  REQUIRE(bg.loss > 0.0);
  AdamState state = make_adam_state(c);
  adam_step(params, bg.grads, state, 1e-3);
  visit_slots(
      [](const std::string& name, const Tensor<float>& x, const Tensor<float>& y) {
        double delta = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) delta += std::abs(static_cast<double>(x[i]) - y[i]);
        INFO(name);
        CHECK(delta > 0.0);
      },
      params.slots, before.slots);
}

TEST_CASE("training loss falls on the default synthetic task") {
  SynthConfig sc;
  sc.n_records = 600;
  TrainConfig cfg;
  cfg.epochs = 5;
  const TrainResult r = train(generate_corpus(sc).records, cfg);
  REQUIRE(r.history.size() == 5);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
}

TEST_CASE("whole-model gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) CHECK(vqr::testing::whole_model_gradient_error(seed) <= 1e-3);
}

TEST_CASE("identical grades train on the pointwise term and raise the flag") {
  std::vector<VideoRecord> corpus = generate_corpus(small_synth(40)).records;
  for (VideoRecord& r : corpus) r.grade = Grade::kFair;
  const TrainResult r = train(corpus, small_train());
  CHECK(r.pairwise_degenerate);
  for (const EpochRecord& e : r.history) CHECK(std::isfinite(e.train_loss));
}

TEST_CASE("an explicit validation corpus replaces the split") {
  const std::vector<VideoRecord> corpus = generate_corpus(small_synth(50)).records;
  SynthConfig vc = small_synth(20);
  vc.seed = 99;
  const std::vector<VideoRecord> validation = generate_corpus(vc).records;
  const TrainResult r = train(corpus, small_train(), &validation);
  CHECK(r.train_records == 50);
  CHECK(r.validation_records == 20);
}

TEST_CASE("the split is seeded and disjoint") {
  const Split a = split_corpus(100, 0.1, 7), b = split_corpus(100, 0.1, 7);
  CHECK(a.train == b.train);
  CHECK(a.validation.size() == 10);
  CHECK(a.train.size() == 90);
  std::vector<bool> seen(100, false);
  for (const std::size_t i : a.train) seen[i] = true;
  for (const std::size_t i : a.validation) {
    CHECK_FALSE(seen[i]);
    seen[i] = true;
  }
  CHECK(std::count(seen.begin(), seen.end(), true) == 100);
  CHECK(split_corpus(100, 0.0, 7).validation.empty());
}

TEST_CASE("training rejects bad input") {
  std::vector<VideoRecord> corpus = generate_corpus(small_synth(10)).records;
  CHECK_THROWS_AS(train({}, small_train()), ContractViolation);
  corpus[2].grade.reset();
  CHECK_THROWS_AS(train(corpus, small_train()), ValidationError);
  TrainConfig bad = small_train();
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_train();
  bad.learning_rate = -1e-4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_train();
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train config reads json over defaults") {
  const TrainConfig c = train_config_from_json(nlohmann::json::parse(
      R"({"learning_rate": 0.002, "epochs": 3, "alpha": 0.25, "tau": 0.2, "pair_normalization": "batch_size",
          "hinge_direction": "as_printed", "model": {"model_dim": 16, "heads": 2}})"));
  CHECK(c.learning_rate == 0.002);
  CHECK(c.epochs == 3);
  CHECK(c.batch_size == 32);
  CHECK(c.loss.alpha == 0.25);
  CHECK(c.loss.tau == 0.2);
  CHECK(c.loss.normalization == PairNormalization::kBatchSize);
  CHECK(c.loss.direction == HingeDirection::kAsPrinted);
  CHECK(c.model.model_dim == 16);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"lr": 0.1})")), ConfigError);
  const TrainConfig back = train_config_from_json(nlohmann::json::parse(train_config_to_json(c).dump()));
  CHECK(train_config_to_json(back) == train_config_to_json(c));
}

TEST_CASE("checkpoints roundtrip bit for bit") {
  const std::vector<VideoRecord> corpus = generate_corpus(small_synth(40)).records;
  const TrainResult r = train(corpus, small_train());
  const auto p = temp_path("roundtrip.ckpt");
  save_checkpoint(r.params, r.adam, p);
  const Checkpoint c = load_checkpoint(p, r.params.config);
  CHECK(c.params.config == r.params.config);
  CHECK(same_slots(c.params.slots, r.params.slots));
  CHECK(same_slots(c.adam.first_moment, r.adam.first_moment));
  CHECK(same_slots(c.adam.second_moment, r.adam.second_moment));
  CHECK(c.adam.step == r.adam.step);
  std::filesystem::remove(p);
}

TEST_CASE("damaged checkpoints are rejected") {
  const ModelConfig mc = default_model_config(6, 5, 8, 2);
  const ModelParameters<float> params = initialize_parameters<float>(mc, 4);
  const auto p = temp_path("damaged.ckpt");
  save_checkpoint(params, make_adam_state(mc), p);
  const std::string good = read_bytes(p);

  std::string bytes = good;
  bytes[good.size() - 100] ^= 0x01;  // inside the payload
  write_bytes(p, bytes);
  CHECK_THROWS_AS(load_checkpoint(p), CheckpointError);

  write_bytes(p, good.substr(0, good.size() - 9));
  CHECK_THROWS_AS(load_checkpoint(p), CheckpointError);

  bytes = good;
  bytes[8] = 2;  // version
  write_bytes(p, bytes);
  CHECK_THROWS_AS(load_checkpoint(p), CheckpointError);

  bytes = good;
  bytes[0] = 'X';
  write_bytes(p, bytes);
  CHECK_THROWS_AS(load_checkpoint(p), CheckpointError);

  write_bytes(p, "");
  CHECK_THROWS_AS(load_checkpoint(p), CheckpointError);

  write_bytes(p, good);
  CHECK_NOTHROW(load_checkpoint(p));
  CHECK_THROWS_AS(load_checkpoint(p, default_model_config(6, 5, 16, 2)), DimensionError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), Error);
  std::filesystem::remove(p);
}
