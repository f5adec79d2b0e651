#include "vqrank/branches.hpp"

#include <string>

#include "vqrank/errors.hpp"

namespace vqr {

double BranchScores::branch(Branch b) const {
  switch (b) {
    case Branch::kVideoText:
      return s_vt;
    case Branch::kFrameCoherence:
      return s_fc;
    case Branch::kFrameQuality:
      return s_fq;
    case Branch::kTextQuality:
      return s_tq;
  }
  return 0.0;
}

namespace {

template <typename T>
void check_frames(Var<T> video_vector, Var<T> frames, const char* who) {
  const Shape& fs = frames.shape();
  if (fs.size() != 2 || video_vector.shape().size() != 1 || fs[1] != video_vector.shape()[0]) {
    throw DimensionError(std::string(who) + ": frame matrix " + shape_str(fs) + " incompatible with video vector " +
                         shape_str(video_vector.shape()));
  }
}

}  // namespace

template <typename T>
VideoTextScores<T> vtmab_score(Var<T> video_vector, Var<T> frames, Var<T> text, bool normalize) {
  check_frames(video_vector, frames, "vtmab_score");
  if (text.shape() != video_vector.shape()) {
    throw DimensionError("vtmab_score: text " + shape_str(text.shape()) + " vs video " +
                         shape_str(video_vector.shape()));
  }
  if (normalize) {
    video_vector = l2_normalize(video_vector);
    frames = l2_normalize(frames);
    text = l2_normalize(text);
  }
  VideoTextScores<T> out;
  out.global = dot(video_vector, text);
  out.local = mean(matmul(frames, text), 0);
  out.score = mean(concat({out.global, out.local}, 0), 0);
  return out;
}

template <typename T>
Var<T> fcab_score(Var<T> video_vector, Var<T> frames, Var<T> coherence_weights) {
  check_frames(video_vector, frames, "fcab_score");
  const std::size_t m = frames.shape()[0];
  const Var<T> global_rows = sub(video_vector, frames);  // [m, d]
  Var<T> stacked = global_rows;
  if (m >= 2) {
    const Var<T> local_rows = sub(slice(frames, 0, 1, m), slice(frames, 0, 0, m - 1));  // [m-1, d]
    stacked = concat({global_rows, local_rows}, 0);
  }
  return dot(mean(stacked, 0), coherence_weights);
}

template <typename T>
Var<T> mlp_score(Var<T> input, const MlpSlots<Var<T>>& mlp) {
  const Var<T> hidden = relu(add(matmul(input, mlp.w1), mlp.b1));
  return add(dot(hidden, mlp.w2), mlp.b2);
}

VtmabValues vtmab_score(const Tensor<double>& video_vector, const Tensor<double>& frames,
                        const Tensor<double>& text, bool normalize) {
  Graph<double> g;
  const auto s = vtmab_score(g.constant(video_vector), g.constant(frames), g.constant(text), normalize);
  return {s.global.value().item(), s.local.value().item(), s.score.value().item()};
}

double fcab_score(const Tensor<double>& video_vector, const Tensor<double>& frames,
                  const Tensor<double>& coherence_weights) {
  Graph<double> g;
  return fcab_score(g.constant(video_vector), g.constant(frames), g.constant(coherence_weights)).value().item();
}

double mlp_score(const Tensor<double>& input, const MlpSlots<Tensor<double>>& mlp) {
  Graph<double> g;
  const MlpSlots<Var<double>> vars{g.constant(mlp.w1), g.constant(mlp.b1), g.constant(mlp.w2),
                                   g.constant(mlp.b2)};
  return mlp_score(g.constant(input), vars).value().item();
}

#define VQR_INSTANTIATE(T)                                                        \
  template VideoTextScores<T> vtmab_score<T>(Var<T>, Var<T>, Var<T>, bool);       \
  template Var<T> fcab_score<T>(Var<T>, Var<T>, Var<T>);                          \
  template Var<T> mlp_score<T>(Var<T>, const MlpSlots<Var<T>>&);

VQR_INSTANTIATE(float)
VQR_INSTANTIATE(double)
#undef VQR_INSTANTIATE

}  // namespace vqr
