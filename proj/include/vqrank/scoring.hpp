#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqrank/aggregation.hpp"
#include "vqrank/branches.hpp"
#include "vqrank/corpus.hpp"
#include "vqrank/model.hpp"
#include "vqrank/temporal_encoder.hpp"

namespace vqr {

/// Every intermediate of one record's pass through the network.
template <typename T>
struct RecordForward {
  EncodedVideo<T> video;
  Var<T> text;  // projected text, [d]
  VideoTextScores<T> video_text;
  Var<T> coherence;
  Var<T> frame_quality;
  Var<T> text_quality;
  SeOutput<T> aggregate;
  std::vector<Var<T>> attention;  // filled when requested
};

/// Temporal encoder -> four branches -> squeeze-and-excitation. Disabled
/// branches are not evaluated; their scores are constant zeros.
template <typename T>
RecordForward<T> forward_record(Graph<T>& graph, const ModelSlots<Var<T>>& params, const ModelConfig& config,
                                const VideoRecord& record, const ForwardMode& mode, bool keep_attention = false);

struct ScoredVideo {
  std::string id;
  double score = 0.0;
  BranchScores branches;
  /// z per branch; zero for disabled branches.
  std::array<double, kBranchCount> weights{};

  friend bool operator==(const ScoredVideo&, const ScoredVideo&) = default;
};

/// Inference-mode score. Pure function of (record, model).
ScoredVideo score_record(const VideoRecord& record, const ModelParameters<float>& model);

/// Scores records in input order. threads == 0 picks the hardware concurrency.
/// A failure aborts with the error of the first failing record.
std::vector<ScoredVideo> score_corpus(const std::vector<VideoRecord>& records, const ModelParameters<float>& model,
                                      unsigned threads = 1);

/// {"id", "score", "branch_scores": {...}, "branch_weights": {...}}
nlohmann::ordered_json scored_to_json(const ScoredVideo& scored);

}  // namespace vqr
