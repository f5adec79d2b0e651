#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vqrank/tensor.hpp"

namespace vqr {

/// Ordinal quality grade; underlying values follow the order bad < fair < good < excellent.
enum class Grade : int { kBad = 0, kFair = 1, kGood = 2, kExcellent = 3 };

inline constexpr std::size_t kGradeCount = 4;
inline constexpr Grade kAllGrades[kGradeCount] = {Grade::kBad, Grade::kFair, Grade::kGood,
                                                  Grade::kExcellent};

/// Fixed numeric image of a grade: bad 0, fair 0.3, good 0.6, excellent 1.
double soft_label(Grade g);
int ordinal(Grade g);
std::string_view grade_name(Grade g);
/// Throws ValidationError for anything but "bad", "fair", "good", "excellent".
Grade parse_grade(std::string_view name);
/// {bad, fair} -> 0, {good, excellent} -> 1.
int binary_label(Grade g);

inline constexpr std::size_t kMaxFrames = 20;
inline constexpr std::size_t kCoverCount = 2;

/// One video as handed over by the frozen upstream encoders.
struct VideoRecord {
  std::string id;
  Tensor<float> text_embedding;    // [d_t]
  Tensor<float> frame_embeddings;  // [m, d_f], 1 <= m <= 20
  Tensor<float> cover_embeddings;  // [2, d_f]: resized cover, then center-cropped cover
  std::optional<Grade> grade;

  std::size_t frame_count() const { return frame_embeddings.dim(0); }
  std::size_t text_dim() const { return text_embedding.dim(0); }
  std::size_t frame_dim() const { return frame_embeddings.dim(1); }

  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

struct CorpusDims {
  std::size_t text_dim = 0;
  std::size_t frame_dim = 0;

  friend bool operator==(const CorpusDims&, const CorpusDims&) = default;
};

/// Checks one record's internal shape and value invariants.
void validate_record(const VideoRecord& record);

/// Dimensions shared by every record; throws SchemaError if they disagree.
/// Returns zeros for an empty corpus.
CorpusDims corpus_dims(const std::vector<VideoRecord>& records);

VideoRecord parse_record(std::string_view line, std::size_t line_number);
std::string format_record(const VideoRecord& record);

/// Reads a line-delimited JSON corpus. Blank lines are skipped.
std::vector<VideoRecord> load_corpus(const std::filesystem::path& path, bool require_grades);

/// Writes the corpus so that load_corpus reproduces every float bit-for-bit.
/// Validation happens before the file is opened; nothing is written on failure.
void save_corpus(const std::vector<VideoRecord>& records, const std::filesystem::path& path);

}  // namespace vqr
