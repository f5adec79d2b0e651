#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "vqrank/branches.hpp"
#include "vqrank/errors.hpp"

using namespace vqr;
using vqr::testing::random_tensor;

namespace {

constexpr double kTol = 1e-6;

Tensor<double> vec(std::vector<double> v) { return Tensor<double>::vector(std::move(v)); }

Tensor<double> mat(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor<double>(Shape{rows, cols}, std::move(v));
}

double dot_oracle(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

/// Mean of the explicitly materialized difference rows, projected on W_C.
double fcab_oracle(const Tensor<double>& v, const Tensor<double>& frames, const Tensor<double>& w) {
  const std::size_t m = frames.dim(0), d = frames.dim(1);
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> r(d);
    for (std::size_t k = 0; k < d; ++k) r[k] = v[k] - frames.at(j, k);
    rows.push_back(r);
  }
  for (std::size_t j = 0; j + 1 < m; ++j) {
    std::vector<double> r(d);
    for (std::size_t k = 0; k < d; ++k) r[k] = frames.at(j + 1, k) - frames.at(j, k);
    rows.push_back(r);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double col = 0.0;
    for (const auto& r : rows) col += r[k];
    s += col / static_cast<double>(rows.size()) * w[k];
  }
  return s;
}

MlpSlots<Tensor<double>> random_mlp(Rng& rng, std::size_t d, std::size_t h) {
  return {random_tensor(rng, Shape{d, h}), random_tensor(rng, Shape{h}), random_tensor(rng, Shape{h}),
          random_tensor(rng, Shape{1})};
}

double mlp_oracle(const Tensor<double>& x, const MlpSlots<Tensor<double>>& p) {
  const std::size_t d = p.w1.dim(0), h = p.w1.dim(1);
  double out = p.b2[0];
  for (std::size_t j = 0; j < h; ++j) {
    double pre = p.b1[j];
    for (std::size_t i = 0; i < d; ++i) pre += x[i] * p.w1.at(i, j);
    out += std::max(0.0, pre) * p.w2[j];
  }
  return out;
}

}  // namespace

TEST_CASE("vtmab on identical unit vectors is (1, 1, 1)") {
  const VtmabValues s = vtmab_score(vec({1, 0, 0}), mat(3, 3, {1, 0, 0, 1, 0, 0, 1, 0, 0}), vec({1, 0, 0}));
  CHECK(s.global == doctest::Approx(1.0).epsilon(kTol));
  CHECK(s.local == doctest::Approx(1.0).epsilon(kTol));
  CHECK(s.score == doctest::Approx(1.0).epsilon(kTol));
}

TEST_CASE("vtmab with orthogonal text is zero") {
  const VtmabValues s = vtmab_score(vec({1, 2, 0}), mat(2, 3, {3, 1, 0, -1, 4, 0}), vec({0, 0, 1}));
  CHECK(s.global == 0.0);
  CHECK(s.local == 0.0);
  CHECK(s.score == 0.0);
}

TEST_CASE("vtmab hand case 0.8 / {0.5, 0.7}") {
  // text e1 picks out the first coordinate of every operand.
  const VtmabValues s = vtmab_score(vec({0.8, 5.0}), mat(2, 2, {0.5, 1.0, 0.7, -3.0}), vec({1.0, 0.0}));
  CHECK(std::abs(s.global - 0.8) < kTol);
  CHECK(std::abs(s.local - 0.6) < kTol);
  CHECK(std::abs(s.score - 0.7) < kTol);
}

TEST_CASE("vtmab is bilinear in the text and permutation invariant in frames") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(8), m = 1 + rng.below(kMaxFrames);
    const Tensor<double> v = random_tensor(rng, Shape{d});
    const Tensor<double> t = random_tensor(rng, Shape{d});
    const Tensor<double> frames = random_tensor(rng, Shape{m, d});
    const VtmabValues s = vtmab_score(v, frames, t);

    double local = 0.0;
    for (std::size_t j = 0; j < m; ++j) local += dot_oracle(frames.data().data() + j * d, t.data().data(), d) / m;
    CHECK(std::abs(s.global - dot_oracle(v.data().data(), t.data().data(), d)) < kTol);
    CHECK(std::abs(s.local - local) < kTol);
    CHECK(std::abs(s.score - (s.global + s.local) / 2.0) < kTol);

    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    Tensor<double> shuffled(Shape{m, d});
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < d; ++k) shuffled.at(j, k) = frames.at(perm[j], k);
    }
    CHECK(std::abs(vtmab_score(v, shuffled, t).local - s.local) < kTol);

    const double c = rng.uniform(-3.0, 3.0);
    Tensor<double> tc = t;
    for (double& x : tc.data()) x *= c;
    const VtmabValues sc = vtmab_score(v, frames, tc);
    CHECK(std::abs(sc.global - c * s.global) < kTol);
    CHECK(std::abs(sc.local - c * s.local) < kTol);
    CHECK(std::abs(sc.score - c * s.score) < kTol);
  }
}

TEST_CASE("vtmab normalization produces cosines") {
  const VtmabValues s = vtmab_score(vec({3, 0}), mat(1, 2, {0, 5}), vec({2, 2}), true);
  CHECK(std::abs(s.global - std::sqrt(0.5)) < kTol);
  CHECK(std::abs(s.local - std::sqrt(0.5)) < kTol);
}

TEST_CASE("branches reject mismatched dimensions") {
  CHECK_THROWS_AS(vtmab_score(vec({1, 0}), mat(1, 3, {1, 0, 0}), vec({1, 0})), DimensionError);
  CHECK_THROWS_AS(vtmab_score(vec({1, 0}), mat(1, 2, {1, 0}), vec({1, 0, 0})), DimensionError);
  CHECK_THROWS_AS(fcab_score(vec({1, 0}), mat(1, 2, {1, 0}), vec({1})), DimensionError);
}

TEST_CASE("fcab is zero when every frame equals the video vector") {
  Rng rng(2);
  const Tensor<double> v = random_tensor(rng, Shape{4});
  Tensor<double> frames(Shape{5, 4});
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t k = 0; k < 4; ++k) frames.at(j, k) = v[k];
  }
  CHECK(fcab_score(v, frames, random_tensor(rng, Shape{4})) == 0.0);
}

TEST_CASE("fcab hand case 0.6") {
  const double s = fcab_score(vec({1, 1}), mat(3, 2, {1, 0, 0, 1, 0, 0}), vec({1, 1}));
  CHECK(std::abs(s - 0.6) < kTol);
}

TEST_CASE("fcab is linear in W_C") {
  Rng rng(3);
  const Tensor<double> v = random_tensor(rng, Shape{6});
  const Tensor<double> frames = random_tensor(rng, Shape{4, 6});
  const Tensor<double> w = random_tensor(rng, Shape{6});
  const double base = fcab_score(v, frames, w);
  for (const double c : {-2.0, 0.0, 0.5, 3.0}) {
    Tensor<double> wc = w;
    for (double& x : wc.data()) x *= c;
    CHECK(std::abs(fcab_score(v, frames, wc) - c * base) < kTol);
  }
}

TEST_CASE("fcab matches the materialized rows and is translation covariant") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(8), m = 1 + rng.below(kMaxFrames);
    const Tensor<double> v = random_tensor(rng, Shape{d});
    const Tensor<double> frames = random_tensor(rng, Shape{m, d});
    const Tensor<double> w = random_tensor(rng, Shape{d});
    const double s = fcab_score(v, frames, w);
    CHECK(std::abs(s - fcab_oracle(v, frames, w)) < kTol);

    const Tensor<double> u = random_tensor(rng, Shape{d}, 5.0);
    Tensor<double> v2 = v, f2 = frames;
    for (std::size_t k = 0; k < d; ++k) v2[k] += u[k];
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < d; ++k) f2.at(j, k) += u[k];
    }
    CHECK(std::abs(fcab_score(v2, f2, w) - s) < kTol);
  }
}

TEST_CASE("fcab local rows telescope") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.below(6), m = 2 + rng.below(kMaxFrames - 1);
    const Tensor<double> frames = random_tensor(rng, Shape{m, d});
    // With v equal to the frame mean the global rows sum to zero, leaving the
    // local rows: s = (m-1)/(2m-1) * w . (f_m - f_1)/(m-1).
    Tensor<double> v(Shape{d});
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < d; ++k) v[k] += frames.at(j, k) / static_cast<double>(m);
    }
    const Tensor<double> w = random_tensor(rng, Shape{d});
    double expected = 0.0;
    for (std::size_t k = 0; k < d; ++k) expected += (frames.at(m - 1, k) - frames.at(0, k)) * w[k];
    expected /= static_cast<double>(2 * m - 1);
    CHECK(std::abs(fcab_score(v, frames, w) - expected) < kTol);
  }
}

TEST_CASE("fcab of a single frame uses its global row only") {
  const double s = fcab_score(vec({2, 1}), mat(1, 2, {1, 1}), vec({1, 1}));
  CHECK(std::abs(s - 1.0) < kTol);
}

TEST_CASE("mlp with zero parameters is zero") {
  const MlpSlots<Tensor<double>> zero{Tensor<double>(Shape{4, 2}), Tensor<double>(Shape{2}), Tensor<double>(Shape{2}),
                                      Tensor<double>(Shape{1})};
  Rng rng(6);
  CHECK(mlp_score(random_tensor(rng, Shape{4}), zero) == 0.0);
}

TEST_CASE("a dead ReLU unit leaves only the output bias") {
  const MlpSlots<Tensor<double>> p{mat(2, 1, {1.0, 1.0}), vec({-5.0}), vec({7.0}), vec({0.25})};
  // Pre-activation is exactly -5 for both inputs.
  CHECK(mlp_score(vec({0.0, 0.0}), p) == 0.25);
  CHECK(mlp_score(vec({-1.0, 1.0}), p) == 0.25);
}

TEST_CASE("zero input reduces the mlp to its biases") {
  Rng rng(7);
  const MlpSlots<Tensor<double>> p = random_mlp(rng, 5, 3);
  double expected = p.b2[0];
  for (std::size_t j = 0; j < 3; ++j) expected += std::max(0.0, p.b1[j]) * p.w2[j];
  CHECK(std::abs(mlp_score(Tensor<double>(Shape{5}), p) - expected) < kTol);
}

TEST_CASE("mlp matches a layer-by-layer evaluation") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(8), h = 1 + rng.below(6);
    const MlpSlots<Tensor<double>> p = random_mlp(rng, d, h);
    const Tensor<double> x = random_tensor(rng, Shape{d});
    const double a = mlp_score(x, p);
    CHECK(std::abs(a - mlp_oracle(x, p)) < kTol);
    CHECK(mlp_score(x, p) == a);
  }
}

TEST_CASE("branch accessor follows the branch order") {
  BranchScores s;
  s.s_vt = 1;
  s.s_fc = 2;
  s.s_fq = 3;
  s.s_tq = 4;
  CHECK(s.branch(Branch::kVideoText) == 1);
  CHECK(s.branch(Branch::kFrameCoherence) == 2);
  CHECK(s.branch(Branch::kFrameQuality) == 3);
  CHECK(s.branch(Branch::kTextQuality) == 4);
}
