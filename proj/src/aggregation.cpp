#include "vqrank/aggregation.hpp"

#include <algorithm>
#include <string>

#include "vqrank/errors.hpp"

namespace vqr {

template <typename T>
SeOutput<T> se_aggregate(Var<T> video_vector, Var<T> text, std::span<const Var<T>> branch_scores,
                         const SeSlots<Var<T>>& params, const std::array<bool, kBranchCount>& enabled) {
  const Shape& vs = video_vector.shape();
  if (vs.size() != 1 || text.shape() != vs || params.squeeze.shape() != vs) {
    throw ConfigError("se_aggregate: video " + shape_str(vs) + ", text " + shape_str(text.shape()) +
                      " and W_S " + shape_str(params.squeeze.shape()) + " must share dimension d");
  }
  if (params.excite.shape() != Shape{2, kBranchCount}) {
    throw ConfigError("se_aggregate: W_E must be [2,4], got " + shape_str(params.excite.shape()));
  }
  const auto active = static_cast<std::size_t>(std::count(enabled.begin(), enabled.end(), true));
  if (active == 0 || branch_scores.size() != active) {
    throw ContractViolation("se_aggregate: expected one score per enabled branch");
  }
  const std::size_t d = vs[0];
  const Var<T> stacked = concat({reshape(video_vector, Shape{1, d}), reshape(text, Shape{1, d})}, 0);
  const Var<T> squeezed = relu(matmul(stacked, params.squeeze));  // [2]
  Var<T> logits = matmul(squeezed, params.excite);                // [4]
  if (active < kBranchCount) {
    std::vector<Var<T>> kept;
    for (std::size_t b = 0; b < kBranchCount; ++b) {
      if (enabled[b]) kept.push_back(slice(logits, 0, b, b + 1));
    }
    logits = kept.size() == 1 ? kept[0] : concat(kept, 0);
  }
  SeOutput<T> out;
  out.weights = softmax(logits);
  const Var<T> scores = branch_scores.size() == 1 ? branch_scores[0] : concat(branch_scores, 0);
  out.logit = dot(scores, out.weights);
  out.score = sigmoid(out.logit);
  return out;
}

AggregatedScore se_aggregate(const Tensor<double>& video_vector, const Tensor<double>& text,
                             const BranchScores& scores, const SeSlots<Tensor<double>>& params) {
  Graph<double> g;
  const std::array<Var<double>, kBranchCount> branch{
      g.constant(Tensor<double>::scalar(scores.s_vt)), g.constant(Tensor<double>::scalar(scores.s_fc)),
      g.constant(Tensor<double>::scalar(scores.s_fq)), g.constant(Tensor<double>::scalar(scores.s_tq))};
  const SeSlots<Var<double>> vars{g.constant(params.squeeze), g.constant(params.excite)};
  const SeOutput<double> out = se_aggregate<double>(g.constant(video_vector), g.constant(text),
                                                    std::span<const Var<double>>(branch), vars,
                                                    {true, true, true, true});
  AggregatedScore result;
  for (std::size_t b = 0; b < kBranchCount; ++b) result.weights[b] = out.weights.value()[b];
  result.score = out.score.value().item();
  return result;
}

void LossConfig::validate() const {
  if (!(tau >= 0.0)) throw ConfigError("loss: margin tau must be non-negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss: alpha must lie in [0, 1]");
}

double pointwise_loss(const std::vector<double>& predicted, const std::vector<double>& soft_labels) {
  if (predicted.empty()) throw ContractViolation("pointwise_loss: empty batch");
  if (predicted.size() != soft_labels.size()) {
    throw ContractViolation("pointwise_loss: " + std::to_string(predicted.size()) + " predictions vs " +
                            std::to_string(soft_labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double e = predicted[i] - soft_labels[i];
    total += e * e;
  }
  return total / static_cast<double>(predicted.size());
}

PairwiseLoss pairwise_loss(const std::vector<double>& predicted, const std::vector<Grade>& grades, double tau,
                           PairNormalization normalization, HingeDirection direction) {
  if (predicted.size() != grades.size()) throw ContractViolation("pairwise_loss: length mismatch");
  PairwiseLoss out;
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (std::size_t j = i + 1; j < predicted.size(); ++j) {
      if (grades[i] == grades[j]) continue;
      const bool i_lower = ordinal(grades[i]) < ordinal(grades[j]);
      const double lower = i_lower ? predicted[i] : predicted[j];
      const double higher = i_lower ? predicted[j] : predicted[i];
      const double margin = direction == HingeDirection::kIntent ? lower - higher : higher - lower;
      total += std::max(0.0, margin + tau);
      ++out.comparable_pairs;
    }
  }
  if (out.comparable_pairs == 0) {
    out.degenerate = true;
    return out;
  }
  const double denom = normalization == PairNormalization::kComparablePairs
                           ? static_cast<double>(out.comparable_pairs)
                           : static_cast<double>(predicted.size());
  out.value = total / denom;
  return out;
}

double combined_loss(double point, double pair, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractViolation("combined_loss: alpha must lie in [0, 1]");
  return alpha * point + (1.0 - alpha) * pair;
}

template <typename T>
Var<T> pointwise_loss(Var<T> predicted, const std::vector<double>& soft_labels) {
  const Shape& ps = predicted.shape();
  if (ps.size() != 1 || ps[0] != soft_labels.size()) {
    throw ContractViolation("pointwise_loss: predictions " + shape_str(ps) + " vs " +
                            std::to_string(soft_labels.size()) + " labels");
  }
  std::vector<T> labels(soft_labels.begin(), soft_labels.end());
  const Var<T> diff = sub(predicted, predicted.graph->constant(Tensor<T>::vector(std::move(labels))));
  return mean(mul(diff, diff), 0);
}

template <typename T>
Var<T> pairwise_loss(Var<T> predicted, const std::vector<Grade>& grades, const LossConfig& config,
                     bool* degenerate) {
  const Shape& ps = predicted.shape();
  if (ps.size() != 1 || ps[0] != grades.size()) {
    throw ContractViolation("pairwise_loss: predictions " + shape_str(ps) + " vs " +
                            std::to_string(grades.size()) + " grades");
  }
  Graph<T>& g = *predicted.graph;
  const std::size_t n = grades.size();
  std::vector<Var<T>> items(n);
  std::vector<bool> sliced(n, false);
  auto item = [&](std::size_t i) {
    if (!sliced[i]) {
      items[i] = slice(predicted, 0, i, i + 1);
      sliced[i] = true;
    }
    return items[i];
  };
  const Var<T> tau = g.constant(Tensor<T>::scalar(static_cast<T>(config.tau)));
  std::vector<Var<T>> hinges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (grades[i] == grades[j]) continue;
      const bool i_lower = ordinal(grades[i]) < ordinal(grades[j]);
      const Var<T> lower = item(i_lower ? i : j);
      const Var<T> higher = item(i_lower ? j : i);
      const Var<T> margin = config.direction == HingeDirection::kIntent ? sub(lower, higher) : sub(higher, lower);
      hinges.push_back(relu(add(margin, tau)));
    }
  }
  if (degenerate) *degenerate = hinges.empty();
  if (hinges.empty()) return g.constant(Tensor<T>::scalar(T{0}));
  Var<T> loss = mean(hinges.size() == 1 ? hinges[0] : concat(hinges, 0), 0);
  if (config.normalization == PairNormalization::kBatchSize) {
    loss = scale(loss, static_cast<T>(static_cast<double>(hinges.size()) / static_cast<double>(n)));
  }
  return loss;
}

template <typename T>
Var<T> combined_loss(Var<T> point, Var<T> pair, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractViolation("combined_loss: alpha must lie in [0, 1]");
  return add(scale(point, static_cast<T>(alpha)), scale(pair, static_cast<T>(1.0 - alpha)));
}

#define VQR_INSTANTIATE(T)                                                                                  \
  template SeOutput<T> se_aggregate<T>(Var<T>, Var<T>, std::span<const Var<T>>, const SeSlots<Var<T>>&,     \
                                       const std::array<bool, kBranchCount>&);                             \
  template Var<T> pointwise_loss<T>(Var<T>, const std::vector<double>&);                                    \
  template Var<T> pairwise_loss<T>(Var<T>, const std::vector<Grade>&, const LossConfig&, bool*);            \
  template Var<T> combined_loss<T>(Var<T>, Var<T>, double);

VQR_INSTANTIATE(float)
VQR_INSTANTIATE(double)
#undef VQR_INSTANTIATE

}  // namespace vqr
