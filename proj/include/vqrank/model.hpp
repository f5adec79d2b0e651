#pragma once

// Parameter layout of the scoring network.
//
// Every group of learnable tensors is a struct templated on its slot type, so
// the same layout describes shapes (Shape), stored weights (Tensor<T>), graph
// handles (Var<T>), gradients, and optimizer moments. visit_slots walks any
// number of same-layout structs in lock step, naming each slot.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqrank/autodiff.hpp"
#include "vqrank/corpus.hpp"
#include "vqrank/tensor.hpp"

namespace vqr {

enum class Branch : int { kVideoText = 0, kFrameCoherence = 1, kFrameQuality = 2, kTextQuality = 3 };
inline constexpr std::size_t kBranchCount = 4;
inline constexpr const char* kBranchNames[kBranchCount] = {"vtmab", "fcab", "fqab", "tqab"};

struct ModelConfig {
  std::size_t text_dim = 64;
  std::size_t frame_dim = 64;
  std::size_t model_dim = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn_dim = 128;
  std::size_t mlp_hidden = 16;
  std::size_t max_frames = kMaxFrames;
  /// L2-normalize representations before the video-text dot products.
  bool normalize_dot = false;
  std::array<bool, kBranchCount> branches = {true, true, true, true};

  /// Position slots: [CLS, frames 1..max_frames, cover 1, cover 2].
  std::size_t position_slots() const { return max_frames + 1 + kCoverCount; }
  std::size_t enabled_branch_count() const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Every field, branches as {"vtmab": true, ...}.
nlohmann::ordered_json model_config_to_json(const ModelConfig& config);
/// Reads the fields present in `j` over `base`; unknown keys are a ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// Config with model_dim = d, ffn 4d, MLP hidden d/2 and corpus dims.
ModelConfig default_model_config(std::size_t text_dim, std::size_t frame_dim, std::size_t model_dim = 32,
                                 std::size_t heads = 4);

template <typename S>
struct TransformerLayerSlots {
  S wq, bq, wk, bk, wv, bv, wo, bo;
  S ln1_gain, ln1_bias;
  S ff1_w, ff1_b, ff2_w, ff2_b;
  S ln2_gain, ln2_bias;
};

template <typename S>
struct TemporalEncoderSlots {
  S input_w, input_b;  // d_f -> d
  S cls;               // [d]
  S positions;         // [position_slots, d]
  std::vector<TransformerLayerSlots<S>> layers;
};

template <typename S>
struct TextProjectionSlots {
  S weight, bias;  // d_t -> d
};

template <typename S>
struct MlpSlots {
  S w1, b1;  // d -> hidden
  S w2, b2;  // hidden -> 1
};

template <typename S>
struct BranchSlots {
  S coherence;  // W_C, [d]
  MlpSlots<S> frame_quality;
  MlpSlots<S> text_quality;
};

template <typename S>
struct SeSlots {
  S squeeze;  // W_S, [d]
  S excite;   // W_E, [2, 4]
};

template <typename S>
struct ModelSlots {
  TemporalEncoderSlots<S> temporal;
  TextProjectionSlots<S> text;
  BranchSlots<S> branches;
  SeSlots<S> se;
};

namespace detail {

template <typename F, typename... L>
void visit_layer(F& f, const std::string& p, L&... l) {
  f(p + "attn.wq", l.wq...);
  f(p + "attn.bq", l.bq...);
  f(p + "attn.wk", l.wk...);
  f(p + "attn.bk", l.bk...);
  f(p + "attn.wv", l.wv...);
  f(p + "attn.bv", l.bv...);
  f(p + "attn.wo", l.wo...);
  f(p + "attn.bo", l.bo...);
  f(p + "ln1.gain", l.ln1_gain...);
  f(p + "ln1.bias", l.ln1_bias...);
  f(p + "ffn.w1", l.ff1_w...);
  f(p + "ffn.b1", l.ff1_b...);
  f(p + "ffn.w2", l.ff2_w...);
  f(p + "ffn.b2", l.ff2_b...);
  f(p + "ln2.gain", l.ln2_gain...);
  f(p + "ln2.bias", l.ln2_bias...);
}

template <typename F, typename... M>
void visit_mlp(F& f, const std::string& p, M&... m) {
  f(p + ".w1", m.w1...);
  f(p + ".b1", m.b1...);
  f(p + ".w2", m.w2...);
  f(p + ".b2", m.b2...);
}

template <typename First, typename... Rest>
First& first_of(First& first, Rest&...) {
  return first;
}

}  // namespace detail

/// Calls f(name, slot_of_m0, slot_of_m1, ...) for every parameter slot.
/// All structs must have the same number of transformer layers.
template <typename F, typename... M>
void visit_slots(F&& f, M&... m) {
  f(std::string("temporal.input.weight"), m.temporal.input_w...);
  f(std::string("temporal.input.bias"), m.temporal.input_b...);
  f(std::string("temporal.cls"), m.temporal.cls...);
  f(std::string("temporal.positions"), m.temporal.positions...);
  const std::size_t layers = detail::first_of(m...).temporal.layers.size();
  if (((m.temporal.layers.size() != layers) || ...)) {
    throw DimensionError("visit_slots: layer counts differ");
  }
  for (std::size_t i = 0; i < layers; ++i) {
    detail::visit_layer(f, "temporal.layer" + std::to_string(i) + ".", m.temporal.layers[i]...);
  }
  f(std::string("text.weight"), m.text.weight...);
  f(std::string("text.bias"), m.text.bias...);
  f(std::string("branch.fcab.coherence"), m.branches.coherence...);
  detail::visit_mlp(f, "branch.fqab.mlp", m.branches.frame_quality...);
  detail::visit_mlp(f, "branch.tqab.mlp", m.branches.text_quality...);
  f(std::string("se.squeeze"), m.se.squeeze...);
  f(std::string("se.excite"), m.se.excite...);
}

enum class InitKind { kUniformFanIn, kNormalSmall, kOnes, kZeros };

struct ParamSpec {
  Shape shape;
  InitKind init = InitKind::kUniformFanIn;
  std::size_t fan_in = 1;
};

/// Shapes and initialization rules of every slot for `config`.
ModelSlots<ParamSpec> parameter_specs(const ModelConfig& config);

template <typename T>
struct ModelParameters {
  ModelConfig config;
  ModelSlots<Tensor<T>> slots;

  template <typename U>
  ModelParameters<U> cast() const {
    ModelParameters<U> out;
    out.config = config;
    out.slots.temporal.layers.resize(slots.temporal.layers.size());
    visit_slots([](const std::string&, const Tensor<T>& src, Tensor<U>& dst) { dst = src.template cast<U>(); },
                slots, out.slots);
    return out;
  }

  std::size_t parameter_count() const;
};

template <typename S>
ModelSlots<S> make_slots(const ModelConfig& config) {
  ModelSlots<S> s;
  s.temporal.layers.resize(config.layers);
  return s;
}

/// Uniform(+-1/sqrt(fan_in)) weights and biases, N(0, 0.02^2) CLS and
/// positions, unit layer-norm gains, zero layer-norm biases.
template <typename T>
ModelParameters<T> initialize_parameters(const ModelConfig& config, std::uint64_t seed);

/// Every tensor zero-filled, layer-norm gains included.
template <typename T>
ModelParameters<T> zero_parameters(const ModelConfig& config);

template <typename T>
ModelSlots<Var<T>> bind_parameters(Graph<T>& graph, const ModelSlots<Tensor<T>>& params,
                                   bool requires_grad = true);

/// Training/inference switch for a forward pass. Dropout needs an Rng in train mode.
struct ForwardMode {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  static ForwardMode inference() { return {}; }
};

}  // namespace vqr
