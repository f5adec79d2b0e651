#include "vqrank/model.hpp"

#include <algorithm>
#include <cmath>

#include "vqrank/errors.hpp"
#include "vqrank/rng.hpp"

namespace vqr {

std::size_t ModelConfig::enabled_branch_count() const {
  return static_cast<std::size_t>(std::count(branches.begin(), branches.end(), true));
}

void ModelConfig::validate() const {
  if (text_dim == 0 || frame_dim == 0 || model_dim == 0 || heads == 0 || layers == 0 ||
      ffn_dim == 0 || mlp_hidden == 0) {
    throw ConfigError("model: all dimensions must be positive");
  }
  if (model_dim % heads != 0) {
    throw ConfigError("model: model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (max_frames < kMaxFrames) {
    throw ConfigError("model: max_frames must be at least " + std::to_string(kMaxFrames));
  }
  if (enabled_branch_count() == 0) throw ConfigError("model: at least one branch must be enabled");
}

nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["text_dim"] = c.text_dim;
  j["frame_dim"] = c.frame_dim;
  j["model_dim"] = c.model_dim;
  j["heads"] = c.heads;
  j["layers"] = c.layers;
  j["ffn_dim"] = c.ffn_dim;
  j["mlp_hidden"] = c.mlp_hidden;
  j["max_frames"] = c.max_frames;
  j["normalize_dot"] = c.normalize_dot;
  nlohmann::ordered_json b = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kBranchCount; ++i) b[kBranchNames[i]] = c.branches[i];
  j["branches"] = b;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "text_dim") {
        c.text_dim = value.get<std::size_t>();
      } else if (key == "frame_dim") {
        c.frame_dim = value.get<std::size_t>();
      } else if (key == "model_dim") {
        c.model_dim = value.get<std::size_t>();
      } else if (key == "heads") {
        c.heads = value.get<std::size_t>();
      } else if (key == "layers") {
        c.layers = value.get<std::size_t>();
      } else if (key == "ffn_dim") {
        c.ffn_dim = value.get<std::size_t>();
      } else if (key == "mlp_hidden") {
        c.mlp_hidden = value.get<std::size_t>();
      } else if (key == "max_frames") {
        c.max_frames = value.get<std::size_t>();
      } else if (key == "normalize_dot") {
        c.normalize_dot = value.get<bool>();
      } else if (key == "branches") {
        if (!value.is_object()) throw ConfigError("model config: branches must be an object");
        for (const auto& [name, on] : value.items()) {
          const auto* it = std::find(std::begin(kBranchNames), std::end(kBranchNames), name);
          if (it == std::end(kBranchNames)) throw ConfigError("model config: unknown branch \"" + name + "\"");
          c.branches[static_cast<std::size_t>(it - std::begin(kBranchNames))] = on.get<bool>();
        }
      } else {
        throw ConfigError("model config: unknown key \"" + key + "\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

ModelConfig default_model_config(std::size_t text_dim, std::size_t frame_dim, std::size_t model_dim,
                                 std::size_t heads) {
  ModelConfig c;
  c.text_dim = text_dim;
  c.frame_dim = frame_dim;
  c.model_dim = model_dim;
  c.heads = heads;
  c.ffn_dim = 4 * model_dim;
  c.mlp_hidden = std::max<std::size_t>(1, model_dim / 2);
  return c;
}

ModelSlots<ParamSpec> parameter_specs(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.model_dim;
  auto weight = [](std::size_t in, std::size_t out) {
    return ParamSpec{Shape{in, out}, InitKind::kUniformFanIn, in};
  };
  auto vec = [](std::size_t n, std::size_t fan_in) {
    return ParamSpec{Shape{n}, InitKind::kUniformFanIn, fan_in};
  };
  const ParamSpec ones{Shape{d}, InitKind::kOnes, 1};
  const ParamSpec zeros{Shape{d}, InitKind::kZeros, 1};

  ModelSlots<ParamSpec> s = make_slots<ParamSpec>(c);
  s.temporal.input_w = weight(c.frame_dim, d);
  s.temporal.input_b = vec(d, c.frame_dim);
  s.temporal.cls = ParamSpec{Shape{d}, InitKind::kNormalSmall, 1};
  s.temporal.positions = ParamSpec{Shape{c.position_slots(), d}, InitKind::kNormalSmall, 1};
  for (auto& l : s.temporal.layers) {
    l.wq = l.wk = l.wv = l.wo = weight(d, d);
    l.bq = l.bk = l.bv = l.bo = vec(d, d);
    l.ln1_gain = l.ln2_gain = ones;
    l.ln1_bias = l.ln2_bias = zeros;
    l.ff1_w = weight(d, c.ffn_dim);
    l.ff1_b = vec(c.ffn_dim, d);
    l.ff2_w = weight(c.ffn_dim, d);
    l.ff2_b = vec(d, c.ffn_dim);
  }
  s.text.weight = weight(c.text_dim, d);
  s.text.bias = vec(d, c.text_dim);
  s.branches.coherence = vec(d, d);
  for (MlpSlots<ParamSpec>* mlp : {&s.branches.frame_quality, &s.branches.text_quality}) {
    mlp->w1 = weight(d, c.mlp_hidden);
    mlp->b1 = vec(c.mlp_hidden, d);
    mlp->w2 = vec(c.mlp_hidden, c.mlp_hidden);
    mlp->b2 = vec(1, c.mlp_hidden);
  }
  s.se.squeeze = vec(d, d);
  s.se.excite = weight(2, kBranchCount);
  return s;
}

template <typename T>
ModelParameters<T> initialize_parameters(const ModelConfig& config, std::uint64_t seed) {
  const ModelSlots<ParamSpec> specs = parameter_specs(config);
  ModelParameters<T> p;
  p.config = config;
  p.slots = make_slots<Tensor<T>>(config);
  Rng rng(derive_seed(seed, 0x696e6974));
  visit_slots(
      [&](const std::string&, const ParamSpec& spec, Tensor<T>& t) {
        t = Tensor<T>(spec.shape);
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        for (std::size_t i = 0; i < t.numel(); ++i) {
          switch (spec.init) {
            case InitKind::kUniformFanIn:
              t[i] = static_cast<T>(rng.uniform(-bound, bound));
              break;
            case InitKind::kNormalSmall:
              t[i] = static_cast<T>(0.02 * rng.normal());
              break;
            case InitKind::kOnes:
              t[i] = T{1};
              break;
            case InitKind::kZeros:
              t[i] = T{0};
              break;
          }
        }
      },
      specs, p.slots);
  return p;
}

template <typename T>
ModelParameters<T> zero_parameters(const ModelConfig& config) {
  const ModelSlots<ParamSpec> specs = parameter_specs(config);
  ModelParameters<T> p;
  p.config = config;
  p.slots = make_slots<Tensor<T>>(config);
  visit_slots([](const std::string&, const ParamSpec& spec, Tensor<T>& t) { t = Tensor<T>(spec.shape); },
              specs, p.slots);
  return p;
}

template <typename T>
ModelSlots<Var<T>> bind_parameters(Graph<T>& graph, const ModelSlots<Tensor<T>>& params,
                                   bool requires_grad) {
  ModelSlots<Var<T>> vars;
  vars.temporal.layers.resize(params.temporal.layers.size());
  visit_slots([&](const std::string&, const Tensor<T>& t, Var<T>& v) { v = graph.leaf(t, requires_grad); },
              params, vars);
  return vars;
}

template <typename T>
std::size_t ModelParameters<T>::parameter_count() const {
  std::size_t n = 0;
  visit_slots([&](const std::string&, const Tensor<T>& t) { n += t.numel(); }, slots);
  return n;
}

template struct ModelParameters<float>;
template struct ModelParameters<double>;
template ModelParameters<float> initialize_parameters<float>(const ModelConfig&, std::uint64_t);
template ModelParameters<double> initialize_parameters<double>(const ModelConfig&, std::uint64_t);
template ModelParameters<float> zero_parameters<float>(const ModelConfig&);
template ModelParameters<double> zero_parameters<double>(const ModelConfig&);
template ModelSlots<Var<float>> bind_parameters<float>(Graph<float>&, const ModelSlots<Tensor<float>>&, bool);
template ModelSlots<Var<double>> bind_parameters<double>(Graph<double>&, const ModelSlots<Tensor<double>>&,
                                                         bool);

}  // namespace vqr
