#pragma once

#include "vqrank/autodiff.hpp"
#include "vqrank/model.hpp"

namespace vqr {

/// Scalar logits of the four assessment branches. s_vt is the mean of the
/// global and local video-text terms.
struct BranchScores {
  double s_vt_global = 0.0;
  double s_vt_local = 0.0;
  double s_vt = 0.0;
  double s_fc = 0.0;
  double s_fq = 0.0;
  double s_tq = 0.0;

  double branch(Branch b) const;

  friend bool operator==(const BranchScores&, const BranchScores&) = default;
};

template <typename T>
struct VideoTextScores {
  Var<T> global;  // video_vector . text
  Var<T> local;   // mean_j frame_j . text
  Var<T> score;   // (global + local) / 2
};

// Video-text matching. With `normalize`, all three inputs are scaled to unit
// norm first (off by default; plain dot products otherwise).
template <typename T>
VideoTextScores<T> vtmab_score(Var<T> video_vector, Var<T> frames, Var<T> text, bool normalize = false);

// Frame coherence: W_C applied to the mean of the stacked difference rows
// (video - frame_j) for every frame and (frame_{j+1} - frame_j) for adjacent
// pairs. A single-frame video contributes only its global row.
template <typename T>
Var<T> fcab_score(Var<T> video_vector, Var<T> frames, Var<T> coherence_weights);

/// Two-layer MLP with ReLU hidden units and a linear scalar output.
template <typename T>
Var<T> mlp_score(Var<T> input, const MlpSlots<Var<T>>& mlp);

template <typename T>
Var<T> fqab_score(Var<T> video_vector, const BranchSlots<Var<T>>& params) {
  return mlp_score(video_vector, params.frame_quality);
}

template <typename T>
Var<T> tqab_score(Var<T> text, const BranchSlots<Var<T>>& params) {
  return mlp_score(text, params.text_quality);
}

// Value-level evaluation on plain tensors, computed in double precision.
struct VtmabValues {
  double global = 0.0;
  double local = 0.0;
  double score = 0.0;
};

VtmabValues vtmab_score(const Tensor<double>& video_vector, const Tensor<double>& frames,
                        const Tensor<double>& text, bool normalize = false);
double fcab_score(const Tensor<double>& video_vector, const Tensor<double>& frames,
                  const Tensor<double>& coherence_weights);
double mlp_score(const Tensor<double>& input, const MlpSlots<Tensor<double>>& mlp);

}  // namespace vqr
