#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vqrank/corpus.hpp"

namespace vqr {

enum class Defect : int { kIncoherence = 0, kTextMismatch = 1, kVisualDefect = 2, kTextDefect = 3 };

inline constexpr std::size_t kDefectCount = 4;
inline constexpr std::size_t kTopicCount = 16;

struct DefectFlags {
  bool incoherence = false;
  bool text_mismatch = false;
  bool visual_defect = false;
  bool text_defect = false;

  std::size_t count() const {
    return static_cast<std::size_t>(incoherence) + text_mismatch + visual_defect + text_defect;
  }
  bool has(Defect d) const;

  friend bool operator==(const DefectFlags&, const DefectFlags&) = default;
};

struct SynthConfig {
  std::size_t n_records = 1000;
  std::size_t text_dim = 64;
  std::size_t frame_dim = 64;
  std::size_t frames = 8;  // per video, <= 20
  /// Indexed by Defect.
  std::array<double, kDefectCount> defect_probabilities = {0.15, 0.15, 0.15, 0.15};
  double defect_magnitude = 1.0;
  /// Euclidean norm of the isotropic noise added around each centroid.
  double noise = 0.25;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Grade implied by the planted defects. A record with a single defect is
/// `fair` when that defect is planted at full strength and `good` when mild.
Grade assign_grade(const DefectFlags& flags, bool mild);

struct SyntheticCorpus {
  std::vector<VideoRecord> records;
  std::vector<DefectFlags> flags;
  /// True where a single-defect record was planted at half strength.
  std::vector<bool> mild;
  std::vector<std::size_t> topics;
};

/// Fixed per-config geometry: topic centroids and defect directions.
struct SynthGeometry {
  std::vector<std::vector<double>> frame_centroids;  // kTopicCount unit vectors in R^d_f
  std::vector<std::vector<double>> text_centroids;   // kTopicCount unit vectors in R^d_t
  std::vector<double> visual_direction;              // unit vector in R^d_f
  std::vector<double> text_direction;                // unit vector in R^d_t
};

SynthGeometry make_geometry(const SynthConfig& config);

/// Record i depends only on (config, i); ids are "synth-<i>".
SyntheticCorpus generate_corpus(const SynthConfig& config);

}  // namespace vqr
