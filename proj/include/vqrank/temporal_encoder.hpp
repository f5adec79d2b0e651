#pragma once

#include <vector>

#include "vqrank/autodiff.hpp"
#include "vqrank/corpus.hpp"
#include "vqrank/model.hpp"

namespace vqr {

/// Coarse video vector (CLS output) and per-frame outputs with covers removed.
template <typename T>
struct EncodedVideo {
  Var<T> video_vector;  // [d]
  Var<T> frame_matrix;  // [m, d]
};

struct VideoRepresentation {
  Tensor<float> video_vector;  // [d]
  Tensor<float> frame_matrix;  // [m, d]
};

/// Runs the temporal transformer over [CLS, frames..., cover, cover].
/// CLS takes position slot 0, frame j slot j + 1, and the covers the two
/// dedicated slots after the last possible frame. Layers are post-norm:
/// x = LN(x + MHA(x)); x = LN(x + FFN(x)).
/// If `attention` is given, each head's attention matrix is appended to it.
template <typename T>
EncodedVideo<T> encode_video(Graph<T>& graph, const TemporalEncoderSlots<Var<T>>& params,
                             const ModelConfig& config, const VideoRecord& record, const ForwardMode& mode,
                             std::vector<Var<T>>* attention = nullptr);

/// Learned affine map d_t -> d.
template <typename T>
Var<T> project_text(Graph<T>& graph, const TextProjectionSlots<Var<T>>& params, const ModelConfig& config,
                    const Tensor<float>& text_embedding);

/// Inference-mode convenience wrappers over the graph versions.
VideoRepresentation encode_video(const VideoRecord& record, const ModelParameters<float>& model,
                                 const ForwardMode& mode = ForwardMode::inference());
Tensor<float> project_text(const Tensor<float>& text_embedding, const ModelParameters<float>& model);

}  // namespace vqr
