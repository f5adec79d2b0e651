#include "vqrank/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "vqrank/errors.hpp"

namespace vqr {

template <typename T>
RecordForward<T> forward_record(Graph<T>& graph, const ModelSlots<Var<T>>& params, const ModelConfig& config,
                                const VideoRecord& record, const ForwardMode& mode, bool keep_attention) {
  if (record.text_dim() != config.text_dim) {
    throw ConfigError("record \"" + record.id + "\": d_t=" + std::to_string(record.text_dim()) +
                      ", model expects " + std::to_string(config.text_dim));
  }
  RecordForward<T> out;
  out.video = encode_video(graph, params.temporal, config, record, mode, keep_attention ? &out.attention : nullptr);
  out.text = project_text(graph, params.text, config, record.text_embedding);

  const Var<T> zero = graph.constant(Tensor<T>::scalar(T{0}));
  const auto& on = config.branches;
  if (on[0]) {
    out.video_text = vtmab_score(out.video.video_vector, out.video.frame_matrix, out.text, config.normalize_dot);
  } else {
    out.video_text = {zero, zero, zero};
  }
  out.coherence = on[1] ? fcab_score(out.video.video_vector, out.video.frame_matrix, params.branches.coherence) : zero;
  out.frame_quality = on[2] ? fqab_score(out.video.video_vector, params.branches) : zero;
  out.text_quality = on[3] ? tqab_score(out.text, params.branches) : zero;

  const std::array<Var<T>, kBranchCount> all{out.video_text.score, out.coherence, out.frame_quality,
                                             out.text_quality};
  std::vector<Var<T>> active;
  for (std::size_t b = 0; b < kBranchCount; ++b) {
    if (on[b]) active.push_back(all[b]);
  }
  out.aggregate = se_aggregate<T>(out.video.video_vector, out.text, std::span<const Var<T>>(active), params.se, on);
  return out;
}

ScoredVideo score_record(const VideoRecord& record, const ModelParameters<float>& model) {
  Graph<float> g;
  const ModelSlots<Var<float>> vars = bind_parameters(g, model.slots, false);
  const RecordForward<float> f = forward_record(g, vars, model.config, record, ForwardMode::inference());
  ScoredVideo s;
  s.id = record.id;
  // The sigmoid is re-evaluated in double so that scores keep their resolution near 0 and 1.
  const double logit = f.aggregate.logit.value().item();
  s.score = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
  s.branches.s_vt_global = f.video_text.global.value().item();
  s.branches.s_vt_local = f.video_text.local.value().item();
  s.branches.s_vt = f.video_text.score.value().item();
  s.branches.s_fc = f.coherence.value().item();
  s.branches.s_fq = f.frame_quality.value().item();
  s.branches.s_tq = f.text_quality.value().item();
  const Tensor<float>& z = f.aggregate.weights.value();
  std::size_t k = 0;
  for (std::size_t b = 0; b < kBranchCount; ++b) {
    s.weights[b] = model.config.branches[b] ? z[k++] : 0.0;
  }
  return s;
}

std::vector<ScoredVideo> score_corpus(const std::vector<VideoRecord>& records, const ModelParameters<float>& model,
                                      unsigned threads) {
  std::vector<ScoredVideo> out(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, records.size())));

  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < records.size(); i += stride) {
      try {
        out[i] = score_record(records[i], model);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

nlohmann::ordered_json scored_to_json(const ScoredVideo& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["score"] = s.score;
  j["branch_scores"] = {{"vtmab", s.branches.s_vt},
                        {"fcab", s.branches.s_fc},
                        {"fqab", s.branches.s_fq},
                        {"tqab", s.branches.s_tq},
                        {"vtmab_global", s.branches.s_vt_global},
                        {"vtmab_local", s.branches.s_vt_local}};
  nlohmann::ordered_json w;
  for (std::size_t b = 0; b < kBranchCount; ++b) w[kBranchNames[b]] = s.weights[b];
  j["branch_weights"] = w;
  return j;
}

template RecordForward<float> forward_record<float>(Graph<float>&, const ModelSlots<Var<float>>&,
                                                    const ModelConfig&, const VideoRecord&, const ForwardMode&, bool);
template RecordForward<double> forward_record<double>(Graph<double>&, const ModelSlots<Var<double>>&,
                                                      const ModelConfig&, const VideoRecord&, const ForwardMode&,
                                                      bool);

}  // namespace vqr
