#pragma once

// Whole-model finite-difference check shared by the unit tests and the
// acceptance runner.

#include <vector>

#include "support.hpp"
#include "vqrank/aggregation.hpp"
#include "vqrank/model.hpp"
#include "vqrank/scoring.hpp"

namespace vqr::testing {

/// Combined loss of a two-record batch (d=8, m=3) as a function of every
/// trainable tensor, checked in double precision. Returns the worst error.
inline double whole_model_gradient_error(std::uint64_t seed) {
  const ModelConfig config = default_model_config(6, 5, 8, 2);
  const ModelParameters<double> params = initialize_parameters<float>(config, seed).cast<double>();
  Rng rng(seed + 1);
  const std::vector<VideoRecord> batch = {random_record(rng, 3, 6, 5, Grade::kGood, "a"),
                                          random_record(rng, 3, 6, 5, Grade::kFair, "b")};
  std::vector<Tensor<double>> points;
  visit_slots([&](const std::string&, const Tensor<double>& t) { points.push_back(t); }, params.slots);

  LossConfig loss;
  // A generous margin keeps the hinge active, away from its kink.
  loss.tau = 0.5;
  const auto fn = [&](Graph<double>& g, std::span<const Var<double>> inputs) {
    ModelSlots<Var<double>> vars = make_slots<Var<double>>(config);
    std::size_t k = 0;
    visit_slots([&](const std::string&, Var<double>& v) { v = inputs[k++]; }, vars);
    std::vector<Var<double>> scores;
    std::vector<double> soft;
    std::vector<Grade> grades;
    for (const VideoRecord& r : batch) {
      scores.push_back(forward_record(g, vars, config, r, ForwardMode::inference()).aggregate.score);
      soft.push_back(soft_label(*r.grade));
      grades.push_back(*r.grade);
    }
    const Var<double> predicted = concat(scores, 0);
    return combined_loss(pointwise_loss(predicted, soft), pairwise_loss(predicted, grades, loss), loss.alpha);
  };
  return gradient_check(fn, points, 1e-5);
}

}  // namespace vqr::testing
