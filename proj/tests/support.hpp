#pragma once

// Hand-rolled generators shared by the property tests.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vqrank/corpus.hpp"
#include "vqrank/rng.hpp"
#include "vqrank/tensor.hpp"

namespace vqr::testing {

template <typename T = double>
Tensor<T> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(scale * rng.normal());
  return t;
}

inline VideoRecord random_record(Rng& rng, std::size_t frames, std::size_t text_dim, std::size_t frame_dim,
                                 std::optional<Grade> grade, const std::string& id = "r") {
  VideoRecord r;
  r.id = id;
  r.text_embedding = random_tensor<float>(rng, Shape{text_dim});
  r.frame_embeddings = random_tensor<float>(rng, Shape{frames, frame_dim});
  r.cover_embeddings = random_tensor<float>(rng, Shape{kCoverCount, frame_dim});
  r.grade = grade;
  return r;
}

inline Grade random_grade(Rng& rng) { return kAllGrades[rng.below(kGradeCount)]; }

}  // namespace vqr::testing
