#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "vqrank/aggregation.hpp"
#include "vqrank/corpus.hpp"
#include "vqrank/model.hpp"

namespace vqr {

struct TrainConfig {
  double learning_rate = 1e-4;
  double dropout = 0.1;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  LossConfig loss;
  std::uint64_t seed = 7;
  /// Share of the corpus held out for per-epoch validation when no explicit
  /// validation corpus is given. Zero disables validation.
  double validation_fraction = 0.1;
  /// text_dim and frame_dim are taken from the corpus.
  ModelConfig model;

  void validate() const;
};

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::uint64_t step = 0;
  ModelSlots<Tensor<float>> first_moment;
  ModelSlots<Tensor<float>> second_moment;
};

/// Zero moments shaped like the parameters of `config`.
AdamState make_adam_state(const ModelConfig& config);

/// Bias-corrected Adam on one buffer. `step` is the 1-based step count after
/// incrementing. Arithmetic runs in double and is rounded once per element.
void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> first_moment,
                 std::span<float> second_moment, std::uint64_t step, double learning_rate);

/// One optimizer step over the whole model. Throws NumericError, leaving
/// parameters and state untouched, if any gradient is non-finite.
void adam_step(ModelParameters<float>& params, const ModelSlots<Tensor<float>>& grads, AdamState& state,
               double learning_rate);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_pnr = 0.0;  // NaN when no validation set or undefined
  double val_auc = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  ModelParameters<float> params;
  AdamState adam;
  std::vector<EpochRecord> history;
  /// Every training grade is identical; only the pointwise term was optimized.
  bool pairwise_degenerate = false;
  std::size_t train_records = 0;
  std::size_t validation_records = 0;
};

/// Combined loss and its gradient for one batch, all records in one graph.
struct BatchGradient {
  double loss = 0.0;
  bool pairwise_degenerate = false;
  ModelSlots<Tensor<float>> grads;
};

BatchGradient batch_gradient(const ModelParameters<float>& params, std::span<const VideoRecord* const> batch,
                             const LossConfig& loss, const ForwardMode& mode);

/// Validation records come from `validation` when given, otherwise from a
/// seeded split of `corpus`.
TrainResult train(const std::vector<VideoRecord>& corpus, const TrainConfig& config,
                  const std::vector<VideoRecord>* validation = nullptr);

/// Seeded train/validation partition, preserving corpus order inside each part.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
Split split_corpus(std::size_t records, double validation_fraction, std::uint64_t seed);

nlohmann::ordered_json history_to_json(const TrainResult& result);

/// Reads the fields present in `j` over `base`; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::ordered_json train_config_to_json(const TrainConfig& config);

}  // namespace vqr
