#include "vqrank/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "vqrank/errors.hpp"
#include "vqrank/metrics.hpp"
#include "vqrank/rng.hpp"
#include "vqrank/scoring.hpp"

namespace vqr {

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974;
constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kDropoutStream = 0x64726f70;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double metric_or_nan(auto&& fn) {
  try {
    return fn();
  } catch (const UndefinedMetricError&) {
    return kNaN;
  }
}

nlohmann::ordered_json finite_or_marker(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

std::pair<double, double> validation_metrics(const std::vector<const VideoRecord*>& records,
                                             const ModelParameters<float>& params) {
  if (records.empty()) return {kNaN, kNaN};
  std::vector<int> grades;
  std::vector<int> binary;
  std::vector<double> scores;
  for (const VideoRecord* r : records) {
    grades.push_back(ordinal(*r->grade));
    binary.push_back(binary_label(*r->grade));
    scores.push_back(score_record(*r, params).score);
  }
  return {metric_or_nan([&] { return pnr(grades, scores); }), metric_or_nan([&] { return auc(binary, scores); })};
}

void require_graded(const std::vector<VideoRecord>& records, const char* what) {
  for (const VideoRecord& r : records) {
    if (!r.grade) throw ValidationError(std::string(what) + ": record \"" + r.id + "\" has no grade");
  }
}

}  // namespace

void TrainConfig::validate() const {
  // A zero step size is allowed: it is the identity run used to check plumbing.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and non-negative");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train: dropout must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train: validation_fraction must lie in [0, 1)");
  }
  loss.validate();
}

AdamState make_adam_state(const ModelConfig& config) {
  AdamState s;
  s.first_moment = zero_parameters<float>(config).slots;
  s.second_moment = s.first_moment;
  return s;
}

void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> first_moment,
                 std::span<float> second_moment, std::uint64_t step, double learning_rate) {
  if (grad.size() != param.size() || first_moment.size() != param.size() || second_moment.size() != param.size()) {
    throw DimensionError("adam_update: buffer sizes differ");
  }
  if (step == 0) throw ContractViolation("adam_update: step counts from 1");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = AdamState::kBeta1 * first_moment[i] + (1.0 - AdamState::kBeta1) * g;
    const double v = AdamState::kBeta2 * second_moment[i] + (1.0 - AdamState::kBeta2) * g * g;
    first_moment[i] = static_cast<float>(m);
    second_moment[i] = static_cast<float>(v);
    const double update = learning_rate * (m / c1) / (std::sqrt(v / c2) + AdamState::kEpsilon);
    param[i] = static_cast<float>(param[i] - update);
  }
}

void adam_step(ModelParameters<float>& params, const ModelSlots<Tensor<float>>& grads, AdamState& state,
               double learning_rate) {
  visit_slots(
      [](const std::string& name, const Tensor<float>& p, const Tensor<float>& g, const Tensor<float>& m,
         const Tensor<float>& v) {
        if (g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape()) {
          throw DimensionError("adam_step: shape mismatch at " + name);
        }
        if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient at " + name);
      },
      params.slots, grads, state.first_moment, state.second_moment);
  ++state.step;
  visit_slots(
      [&](const std::string&, Tensor<float>& p, const Tensor<float>& g, Tensor<float>& m, Tensor<float>& v) {
        adam_update(p.data(), g.data(), m.data(), v.data(), state.step, learning_rate);
      },
      params.slots, grads, state.first_moment, state.second_moment);
}

BatchGradient batch_gradient(const ModelParameters<float>& params, std::span<const VideoRecord* const> batch,
                             const LossConfig& loss, const ForwardMode& mode) {
  if (batch.empty()) throw ContractViolation("batch_gradient: empty batch");
  Graph<float> g;
  const ModelSlots<Var<float>> vars = bind_parameters(g, params.slots, true);
  std::vector<Var<float>> scores;
  std::vector<double> soft;
  std::vector<Grade> grades;
  for (const VideoRecord* r : batch) {
    if (!r->grade) throw ValidationError("batch_gradient: record \"" + r->id + "\" has no grade");
    scores.push_back(forward_record(g, vars, params.config, *r, mode).aggregate.score);
    soft.push_back(soft_label(*r->grade));
    grades.push_back(*r->grade);
  }
  const Var<float> predicted = scores.size() == 1 ? scores[0] : concat(scores, 0);
  BatchGradient out;
  const Var<float> point = pointwise_loss(predicted, soft);
  const Var<float> pair = pairwise_loss(predicted, grades, loss, &out.pairwise_degenerate);
  const Var<float> total = combined_loss(point, pair, loss.alpha);
  out.loss = total.value().item();
  if (!std::isfinite(out.loss)) throw NumericError("batch_gradient: non-finite loss");
  g.backward(total);
  out.grads = make_slots<Tensor<float>>(params.config);
  visit_slots([&](const std::string&, const Var<float>& v, Tensor<float>& dst) { dst = g.grad(v); }, vars,
              out.grads);
  return out;
}

Split split_corpus(std::size_t records, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("split: validation_fraction must lie in [0, 1)");
  }
  std::size_t n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(records)));
  if (validation_fraction > 0.0 && records >= 2) n_val = std::clamp<std::size_t>(n_val, 1, records - 1);
  std::vector<std::size_t> order(records);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kSplitStream));
  rng.shuffle(std::span<std::size_t>(order));
  Split s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

TrainResult train(const std::vector<VideoRecord>& corpus, const TrainConfig& config,
                  const std::vector<VideoRecord>* validation) {
  config.validate();
  if (corpus.empty()) throw ContractViolation("train: empty corpus");
  require_graded(corpus, "train");
  const CorpusDims dims = corpus_dims(corpus);

  ModelConfig model_config = config.model;
  model_config.text_dim = dims.text_dim;
  model_config.frame_dim = dims.frame_dim;
  model_config.validate();

  std::vector<const VideoRecord*> train_set;
  std::vector<const VideoRecord*> val_set;
  if (validation) {
    require_graded(*validation, "train: validation");
    if (!validation->empty() && corpus_dims(*validation) != dims) {
      throw SchemaError("train: validation corpus dimensions differ from the training corpus");
    }
    for (const VideoRecord& r : corpus) train_set.push_back(&r);
    for (const VideoRecord& r : *validation) val_set.push_back(&r);
  } else {
    const Split split = split_corpus(corpus.size(), config.validation_fraction, config.seed);
    for (const std::size_t i : split.train) train_set.push_back(&corpus[i]);
    for (const std::size_t i : split.validation) val_set.push_back(&corpus[i]);
  }
  if (train_set.empty()) throw ContractViolation("train: no training records after the split");

  TrainResult result;
  result.params = initialize_parameters<float>(model_config, config.seed);
  result.adam = make_adam_state(model_config);
  result.train_records = train_set.size();
  result.validation_records = val_set.size();
  result.pairwise_degenerate = std::all_of(train_set.begin(), train_set.end(),
                                           [&](const VideoRecord* r) { return *r->grade == *train_set[0]->grade; });

  std::vector<const VideoRecord*> order = train_set;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, kShuffleStream, epoch));
    shuffle_rng.shuffle(std::span<const VideoRecord*>(order));
    double loss_sum = 0.0;
    std::size_t loss_weight = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Rng dropout_rng(derive_seed(config.seed, kDropoutStream, epoch, batch));
      const ForwardMode mode{true, config.dropout, &dropout_rng};
      const BatchGradient bg = batch_gradient(
          result.params, std::span<const VideoRecord* const>(order.data() + start, end - start), config.loss, mode);
      adam_step(result.params, bg.grads, result.adam, config.learning_rate);
      loss_sum += bg.loss * static_cast<double>(end - start);
      loss_weight += end - start;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_weight);
    std::tie(rec.val_pnr, rec.val_auc) = validation_metrics(val_set, result.params);
    result.history.push_back(rec);
  }
  return result;
}

nlohmann::ordered_json history_to_json(const TrainResult& result) {
  nlohmann::ordered_json j;
  j["train_records"] = result.train_records;
  j["validation_records"] = result.validation_records;
  j["pairwise_degenerate"] = result.pairwise_degenerate;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const EpochRecord& e : result.history) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = finite_or_marker(e.train_loss);
    row["val_pnr"] = finite_or_marker(e.val_pnr);
    row["val_auc"] = finite_or_marker(e.val_auc);
    epochs.push_back(row);
  }
  j["epochs"] = epochs;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") {
        c.learning_rate = value.get<double>();
      } else if (key == "dropout") {
        c.dropout = value.get<double>();
      } else if (key == "batch_size") {
        c.batch_size = value.get<std::size_t>();
      } else if (key == "epochs") {
        c.epochs = value.get<std::size_t>();
      } else if (key == "alpha") {
        c.loss.alpha = value.get<double>();
      } else if (key == "tau") {
        c.loss.tau = value.get<double>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "validation_fraction") {
        c.validation_fraction = value.get<double>();
      } else if (key == "pair_normalization") {
        const auto s = value.get<std::string>();
        if (s == "comparable_pairs") {
          c.loss.normalization = PairNormalization::kComparablePairs;
        } else if (s == "batch_size") {
          c.loss.normalization = PairNormalization::kBatchSize;
        } else {
          throw ConfigError("train config: pair_normalization must be comparable_pairs or batch_size");
        }
      } else if (key == "hinge_direction") {
        const auto s = value.get<std::string>();
        if (s == "intent") {
          c.loss.direction = HingeDirection::kIntent;
        } else if (s == "as_printed") {
          c.loss.direction = HingeDirection::kAsPrinted;
        } else {
          throw ConfigError("train config: hinge_direction must be intent or as_printed");
        }
      } else if (key == "model") {
        c.model = model_config_from_json(value, c.model);
      } else {
        throw ConfigError("train config: unknown key \"" + key + "\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["dropout"] = c.dropout;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["alpha"] = c.loss.alpha;
  j["tau"] = c.loss.tau;
  j["seed"] = c.seed;
  j["validation_fraction"] = c.validation_fraction;
  j["pair_normalization"] =
      c.loss.normalization == PairNormalization::kComparablePairs ? "comparable_pairs" : "batch_size";
  j["hinge_direction"] = c.loss.direction == HingeDirection::kIntent ? "intent" : "as_printed";
  j["model"] = model_config_to_json(c.model);
  return j;
}

}  // namespace vqr
