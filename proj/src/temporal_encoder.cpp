#include "vqrank/temporal_encoder.hpp"

#include <cmath>
#include <string>

#include "vqrank/errors.hpp"

namespace vqr {

namespace {

template <typename T>
Var<T> apply_dropout(Var<T> x, const ForwardMode& mode) {
  if (!mode.train || mode.dropout == 0.0) return x;
  if (mode.rng == nullptr) throw ContractViolation("forward: train mode with dropout needs an rng");
  return dropout(x, mode.dropout, true, *mode.rng);
}

template <typename T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  return add(matmul(x, w), b);
}

template <typename T>
Var<T> norm_affine(Var<T> x, Var<T> gain, Var<T> bias) {
  return add(mul(layer_norm(x), gain), bias);
}

template <typename T>
Var<T> self_attention(Var<T> x, const TransformerLayerSlots<Var<T>>& l, std::size_t heads,
                      std::vector<Var<T>>* attention) {
  const std::size_t d = x.shape()[1];
  const std::size_t dh = d / heads;
  const Var<T> q = affine(x, l.wq, l.bq);
  const Var<T> k = affine(x, l.wk, l.bk);
  const Var<T> v = affine(x, l.wv, l.bv);
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Var<T>> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Var<T> qh = slice(q, 1, h * dh, (h + 1) * dh);
    const Var<T> kh = slice(k, 1, h * dh, (h + 1) * dh);
    const Var<T> vh = slice(v, 1, h * dh, (h + 1) * dh);
    const Var<T> weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (attention) attention->push_back(weights);
    outputs.push_back(matmul(weights, vh));
  }
  const Var<T> merged = heads == 1 ? outputs[0] : concat(outputs, 1);
  return affine(merged, l.wo, l.bo);
}

template <typename T>
Tensor<T> input_sequence(const VideoRecord& record) {
  const std::size_t m = record.frame_count();
  const std::size_t df = record.frame_dim();
  Tensor<T> x(Shape{m + kCoverCount, df});
  const auto frames = record.frame_embeddings.data();
  const auto covers = record.cover_embeddings.data();
  for (std::size_t i = 0; i < frames.size(); ++i) x[i] = static_cast<T>(frames[i]);
  for (std::size_t i = 0; i < covers.size(); ++i) x[frames.size() + i] = static_cast<T>(covers[i]);
  return x;
}

}  // namespace

template <typename T>
EncodedVideo<T> encode_video(Graph<T>& graph, const TemporalEncoderSlots<Var<T>>& p, const ModelConfig& config,
                             const VideoRecord& record, const ForwardMode& mode,
                             std::vector<Var<T>>* attention) {
  if (record.frame_dim() != config.frame_dim) {
    throw ConfigError("encode_video: record \"" + record.id + "\" has d_f=" +
                      std::to_string(record.frame_dim()) + ", model expects " +
                      std::to_string(config.frame_dim));
  }
  const std::size_t m = record.frame_count();
  if (m < 1 || m > config.max_frames) {
    throw ConfigError("encode_video: record \"" + record.id + "\" has " + std::to_string(m) + " frames");
  }
  if (record.cover_embeddings.dim(0) != kCoverCount) {
    throw ConfigError("encode_video: record \"" + record.id + "\" must carry 2 covers");
  }
  const std::size_t d = config.model_dim;

  const Var<T> inputs = graph.constant(input_sequence<T>(record));
  const Var<T> projected = affine(inputs, p.input_w, p.input_b);  // [m+2, d]
  const Var<T> tokens = concat({reshape(p.cls, Shape{1, d}), projected}, 0);
  const Var<T> positions =
      concat({slice(p.positions, 0, 0, m + 1),
              slice(p.positions, 0, config.max_frames + 1, config.max_frames + 1 + kCoverCount)},
             0);
  Var<T> x = apply_dropout(add(tokens, positions), mode);

  for (const TransformerLayerSlots<Var<T>>& l : p.layers) {
    const Var<T> attended = apply_dropout(self_attention(x, l, config.heads, attention), mode);
    x = norm_affine(add(x, attended), l.ln1_gain, l.ln1_bias);
    const Var<T> hidden = relu(affine(x, l.ff1_w, l.ff1_b));
    const Var<T> ffn = apply_dropout(affine(hidden, l.ff2_w, l.ff2_b), mode);
    x = norm_affine(add(x, ffn), l.ln2_gain, l.ln2_bias);
  }

  EncodedVideo<T> out;
  out.video_vector = reshape(slice(x, 0, 0, 1), Shape{d});
  out.frame_matrix = slice(x, 0, 1, m + 1);
  return out;
}

template <typename T>
Var<T> project_text(Graph<T>& graph, const TextProjectionSlots<Var<T>>& p, const ModelConfig& config,
                    const Tensor<float>& text_embedding) {
  if (text_embedding.rank() != 1 || text_embedding.dim(0) != config.text_dim) {
    throw ConfigError("project_text: text embedding shape " + shape_str(text_embedding.shape()) +
                      ", model expects [" + std::to_string(config.text_dim) + "]");
  }
  return affine(graph.constant(text_embedding.cast<T>()), p.weight, p.bias);
}

VideoRepresentation encode_video(const VideoRecord& record, const ModelParameters<float>& model,
                                 const ForwardMode& mode) {
  Graph<float> g;
  const ModelSlots<Var<float>> vars = bind_parameters(g, model.slots, false);
  const EncodedVideo<float> enc = encode_video(g, vars.temporal, model.config, record, mode);
  return {enc.video_vector.value(), enc.frame_matrix.value()};
}

Tensor<float> project_text(const Tensor<float>& text_embedding, const ModelParameters<float>& model) {
  Graph<float> g;
  const ModelSlots<Var<float>> vars = bind_parameters(g, model.slots, false);
  return project_text(g, vars.text, model.config, text_embedding).value();
}

template EncodedVideo<float> encode_video<float>(Graph<float>&, const TemporalEncoderSlots<Var<float>>&,
                                                 const ModelConfig&, const VideoRecord&, const ForwardMode&,
                                                 std::vector<Var<float>>*);
template EncodedVideo<double> encode_video<double>(Graph<double>&, const TemporalEncoderSlots<Var<double>>&,
                                                   const ModelConfig&, const VideoRecord&, const ForwardMode&,
                                                   std::vector<Var<double>>*);
template Var<float> project_text<float>(Graph<float>&, const TextProjectionSlots<Var<float>>&,
                                        const ModelConfig&, const Tensor<float>&);
template Var<double> project_text<double>(Graph<double>&, const TextProjectionSlots<Var<double>>&,
                                          const ModelConfig&, const Tensor<float>&);

}  // namespace vqr
