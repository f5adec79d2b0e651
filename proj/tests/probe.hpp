#pragma once

// Logistic-regression probe on (mean frame embedding, text embedding).

#include <cmath>
#include <vector>

#include "vqrank/corpus.hpp"
#include "vqrank/metrics.hpp"

namespace vqr::testing {

inline std::vector<double> probe_features(const VideoRecord& r) {
  const std::size_t m = r.frame_count();
  const std::size_t df = r.frame_dim();
  std::vector<double> x(df + r.text_dim(), 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < df; ++k) x[k] += r.frame_embeddings.at(j, k) / static_cast<double>(m);
  }
  for (std::size_t k = 0; k < r.text_dim(); ++k) x[df + k] = r.text_embedding[k];
  return x;
}

/// Fits on `train` by full-batch gradient descent on standardized features
/// and returns the held-out AUC of the binary grade split.
inline double linear_probe_auc(const std::vector<VideoRecord>& train, const std::vector<VideoRecord>& test,
                               std::size_t iterations = 1500, double lr = 0.5, double l2 = 1e-4) {
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (const VideoRecord& r : train) {
    xs.push_back(probe_features(r));
    ys.push_back(binary_label(*r.grade));
  }
  const std::size_t n = xs.size();
  const std::size_t p = xs[0].size();
  std::vector<double> mu(p, 0.0), sd(p, 0.0);
  for (const auto& x : xs) {
    for (std::size_t k = 0; k < p; ++k) mu[k] += x[k] / static_cast<double>(n);
  }
  for (const auto& x : xs) {
    for (std::size_t k = 0; k < p; ++k) sd[k] += (x[k] - mu[k]) * (x[k] - mu[k]) / static_cast<double>(n);
  }
  for (double& s : sd) s = std::sqrt(s) + 1e-12;
  auto standardize = [&](std::vector<double> x) {
    for (std::size_t k = 0; k < p; ++k) x[k] = (x[k] - mu[k]) / sd[k];
    return x;
  };
  for (auto& x : xs) x = standardize(x);

  std::vector<double> w(p, 0.0);
  double b = 0.0;
  std::vector<double> gw(p);
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = b;
      for (std::size_t k = 0; k < p; ++k) z += w[k] * xs[i][k];
      const double err = 1.0 / (1.0 + std::exp(-z)) - ys[i];
      for (std::size_t k = 0; k < p; ++k) gw[k] += err * xs[i][k] / static_cast<double>(n);
      gb += err / static_cast<double>(n);
    }
    for (std::size_t k = 0; k < p; ++k) w[k] -= lr * (gw[k] + l2 * w[k]);
    b -= lr * gb;
  }

  std::vector<int> labels;
  std::vector<double> scores;
  for (const VideoRecord& r : test) {
    const std::vector<double> x = standardize(probe_features(r));
    double z = b;
    for (std::size_t k = 0; k < p; ++k) z += w[k] * x[k];
    labels.push_back(binary_label(*r.grade));
    scores.push_back(z);
  }
  return auc(labels, scores);
}

}  // namespace vqr::testing
