#pragma once

#include <array>
#include <vector>

#include "vqrank/autodiff.hpp"
#include "vqrank/branches.hpp"
#include "vqrank/corpus.hpp"
#include "vqrank/model.hpp"

namespace vqr {

// ------------------------------------------------------------ squeeze-and-excitation

template <typename T>
struct SeOutput {
  Var<T> weights;  // z over the enabled branches, softmax
  Var<T> logit;    // branch_scores . z, shape {1}
  Var<T> score;    // sigmoid(logit)
};

/// Squeezes the stacked [video; text] (2 x d) through W_S to two values,
/// applies ReLU, expands through W_E to one logit per branch, and softmaxes.
/// Only branches enabled in `enabled` take part in the softmax and the sum;
/// `branch_scores` holds one {1}-shaped score per enabled branch, in branch order.
template <typename T>
SeOutput<T> se_aggregate(Var<T> video_vector, Var<T> text, std::span<const Var<T>> branch_scores,
                         const SeSlots<Var<T>>& params, const std::array<bool, kBranchCount>& enabled);

struct AggregatedScore {
  std::array<double, kBranchCount> weights{};  // z
  double score = 0.0;                          // s in (0, 1)
};

AggregatedScore se_aggregate(const Tensor<double>& video_vector, const Tensor<double>& text,
                             const BranchScores& scores, const SeSlots<Tensor<double>>& params);

// ------------------------------------------------------------ losses

enum class PairNormalization { kComparablePairs, kBatchSize };
enum class HingeDirection {
  /// Penalize max(0, f_lower - f_higher + tau): the higher grade must lead by tau.
  kIntent,
  /// Literal printed summand max(0, f_higher - f_lower + tau), kept for comparison.
  kAsPrinted,
};

struct LossConfig {
  double tau = 0.1;
  double alpha = 0.5;
  PairNormalization normalization = PairNormalization::kComparablePairs;
  HingeDirection direction = HingeDirection::kIntent;

  void validate() const;
};

struct PairwiseLoss {
  double value = 0.0;
  std::size_t comparable_pairs = 0;
  /// Set when no pair has distinct grades; value is then 0.
  bool degenerate = false;
};

/// Mean squared error against soft labels.
double pointwise_loss(const std::vector<double>& predicted, const std::vector<double>& soft_labels);

PairwiseLoss pairwise_loss(const std::vector<double>& predicted, const std::vector<Grade>& grades,
                           double tau, PairNormalization normalization = PairNormalization::kComparablePairs,
                           HingeDirection direction = HingeDirection::kIntent);

/// alpha * point + (1 - alpha) * pair.
double combined_loss(double point, double pair, double alpha);

template <typename T>
Var<T> pointwise_loss(Var<T> predicted, const std::vector<double>& soft_labels);

/// Graph form; `degenerate` is set when no comparable pair exists (result is a constant 0).
template <typename T>
Var<T> pairwise_loss(Var<T> predicted, const std::vector<Grade>& grades, const LossConfig& config,
                     bool* degenerate = nullptr);

template <typename T>
Var<T> combined_loss(Var<T> point, Var<T> pair, double alpha);

}  // namespace vqr
