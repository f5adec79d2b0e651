#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vqrank/errors.hpp"
#include "vqrank/model.hpp"
#include "vqrank/temporal_encoder.hpp"

using namespace vqr;
using vqr::testing::random_record;
using vqr::testing::random_tensor;

TEST_CASE("eight frames encode to a 32-vector and an 8x32 frame matrix") {
  Rng rng(1);
  const VideoRecord r = random_record(rng, 8, 64, 64, std::nullopt);
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(64, 64), 3);
  const VideoRepresentation rep = encode_video(r, model, ForwardMode::inference());
  CHECK(rep.video_vector.shape() == Shape{32});
  CHECK(rep.frame_matrix.shape() == Shape{8, 32});
}

TEST_CASE("frame matrix never includes cover positions") {
  Rng rng(2);
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(6, 5, 8, 2), 4);
  for (std::size_t m = 1; m <= kMaxFrames; ++m) {
    const VideoRecord r = random_record(rng, m, 6, 5, std::nullopt);
    CHECK(encode_video(r, model, ForwardMode::inference()).frame_matrix.dim(0) == m);
  }
}

TEST_CASE("inference encoding is deterministic") {
  Rng rng(3);
  const VideoRecord r = random_record(rng, 5, 16, 16, std::nullopt);
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(16, 16, 8, 2), 5);
  const VideoRepresentation a = encode_video(r, model, ForwardMode::inference());
  const VideoRepresentation b = encode_video(r, model, ForwardMode::inference());
  CHECK(a.video_vector == b.video_vector);
  CHECK(a.frame_matrix == b.frame_matrix);
}

TEST_CASE("train-mode dropout is seeded and differs from inference") {
  Rng rng(4);
  const VideoRecord r = random_record(rng, 5, 16, 16, std::nullopt);
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(16, 16, 8, 2), 5);
  Rng d1(9), d2(9);
  const VideoRepresentation a = encode_video(r, model, ForwardMode{true, 0.3, &d1});
  const VideoRepresentation b = encode_video(r, model, ForwardMode{true, 0.3, &d2});
  CHECK(a.video_vector == b.video_vector);
  CHECK_FALSE(a.video_vector == encode_video(r, model, ForwardMode::inference()).video_vector);
  CHECK_THROWS_AS(encode_video(r, model, ForwardMode{true, 0.3, nullptr}), ContractViolation);
}

TEST_CASE("swapping position embeddings changes the encoding of distinct frames") {
  Rng rng(5);
  const VideoRecord r = random_record(rng, 4, 8, 8, std::nullopt);
  ModelParameters<float> model = initialize_parameters<float>(default_model_config(8, 8, 8, 2), 6);
  // Make position embeddings large enough to matter next to the inputs.
  for (float& v : model.slots.temporal.positions.data()) v *= 50.0f;
  ModelParameters<float> swapped = model;
  Tensor<float>& p = swapped.slots.temporal.positions;
  for (std::size_t c = 0; c < p.dim(1); ++c) std::swap(p.at(1, c), p.at(2, c));
  const VideoRepresentation a = encode_video(r, model, ForwardMode::inference());
  const VideoRepresentation b = encode_video(r, swapped, ForwardMode::inference());
  CHECK_FALSE(a.frame_matrix == b.frame_matrix);
}

TEST_CASE("attention rows are probability distributions") {
  Rng rng(6);
  const VideoRecord r = random_record(rng, 7, 8, 8, std::nullopt);
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(8, 8, 8, 2), 7);
  Graph<float> g;
  const ModelSlots<Var<float>> vars = bind_parameters(g, model.slots, false);
  std::vector<Var<float>> attention;
  encode_video(g, vars.temporal, model.config, r, ForwardMode::inference(), &attention);
  CHECK(attention.size() == model.config.layers * model.config.heads);
  for (const Var<float>& a : attention) {
    const Tensor<float>& w = a.value();
    CHECK(w.shape() == Shape{10, 10});
    for (std::size_t row = 0; row < 10; ++row) {
      double total = 0.0;
      for (std::size_t c = 0; c < 10; ++c) total += w.at(row, c);
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("dimension mismatches are configuration errors") {
  Rng rng(7);
  const ModelParameters<float> model = initialize_parameters<float>(default_model_config(8, 8, 8, 2), 8);
  CHECK_THROWS_AS(encode_video(random_record(rng, 3, 8, 6, std::nullopt), model, ForwardMode::inference()),
                  ConfigError);
  CHECK_THROWS_AS(project_text(Tensor<float>(Shape{5}), model), ConfigError);
  // A video without frames cannot even be represented.
  CHECK_THROWS_AS(Tensor<float>(Shape{0, 8}), DimensionError);
}

TEST_CASE("model config rejects inconsistent sizes") {
  ModelConfig c = default_model_config(8, 8, 10, 4);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_model_config(8, 8, 8, 2);
  c.max_frames = 19;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_model_config(8, 8, 8, 2);
  c.branches = {false, false, false, false};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(default_model_config(8, 8).position_slots() == 23);
}

TEST_CASE("text projection with zero parameters is zero") {
  ModelParameters<float> model = zero_parameters<float>(default_model_config(12, 8, 8, 2));
  Rng rng(8);
  const Tensor<float> out = project_text(random_tensor<float>(rng, Shape{12}), model);
  CHECK(out == Tensor<float>(Shape{8}));
}

TEST_CASE("identity text projection returns its input") {
  ModelParameters<float> model = zero_parameters<float>(default_model_config(8, 8, 8, 2));
  for (std::size_t i = 0; i < 8; ++i) model.slots.text.weight.at(i, i) = 1.0f;
  Rng rng(9);
  const Tensor<float> x = random_tensor<float>(rng, Shape{8});
  CHECK(project_text(x, model) == x);
}

TEST_CASE("text projection equals W x + b") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dt = 1 + rng.below(10);
    const ModelParameters<float> model = initialize_parameters<float>(default_model_config(dt, 4, 8, 2), trial);
    const Tensor<float> x = random_tensor<float>(rng, Shape{dt});
    const Tensor<float> y = project_text(x, model);
    for (std::size_t o = 0; o < 8; ++o) {
      double expected = model.slots.text.bias[o];
      for (std::size_t i = 0; i < dt; ++i) {
        expected += static_cast<double>(x[i]) * model.slots.text.weight.at(i, o);
      }
      CHECK(y[o] == doctest::Approx(expected).epsilon(1e-5));
    }
  }
}

TEST_CASE("parameter initialization follows the declared rules") {
  const ModelConfig c = default_model_config(16, 12);
  const ModelParameters<float> a = initialize_parameters<float>(c, 1);
  const ModelParameters<float> b = initialize_parameters<float>(c, 1);
  CHECK(a.slots.temporal.input_w == b.slots.temporal.input_w);
  const float bound = 1.0f / std::sqrt(12.0f);
  for (const float v : a.slots.temporal.input_w.data()) CHECK(std::abs(v) <= bound);
  for (const float v : a.slots.temporal.layers[0].ln1_gain.data()) CHECK(v == 1.0f);
  for (const float v : a.slots.temporal.layers[1].ln2_bias.data()) CHECK(v == 0.0f);
  double sq = 0.0;
  for (const float v : a.slots.temporal.positions.data()) sq += v * v;
  const double sd = std::sqrt(sq / static_cast<double>(a.slots.temporal.positions.numel()));
  CHECK(sd == doctest::Approx(0.02).epsilon(0.2));
  CHECK(a.slots.temporal.positions.shape() == Shape{23, 32});
  CHECK(a.slots.se.excite.shape() == Shape{2, 4});
  CHECK(a.slots.branches.frame_quality.w1.shape() == Shape{32, 16});
}
