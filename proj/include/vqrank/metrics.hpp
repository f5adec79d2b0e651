#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <map>
#include <vector>

#include <json.hpp>

#include "vqrank/corpus.hpp"
#include "vqrank/model.hpp"
#include "vqrank/scoring.hpp"

namespace vqr {

/// PNR value reported when no pair is out of order.
inline constexpr double kInfinitePnr = std::numeric_limits<double>::infinity();

struct PairCounts {
  std::size_t concordant = 0;
  std::size_t discordant = 0;
};

/// Counts unordered pairs with distinct labels whose scores agree (concordant)
/// or disagree (discordant) with the label order. Score ties count for neither.
/// Throws UndefinedMetricError if no two labels differ.
PairCounts pnr_counts(const std::vector<int>& labels, const std::vector<double>& scores);

/// concordant / discordant; kInfinitePnr when discordant == 0 < concordant,
/// NaN when every label-distinct pair is a score tie.
double pnr(const std::vector<int>& labels, const std::vector<double>& scores);

/// Probability that a random positive outscores a random negative, ties 0.5.
/// Throws UndefinedMetricError unless both classes are present.
double auc(const std::vector<int>& binary_labels, const std::vector<double>& scores);

/// Area under the empirical ROC curve by the trapezoidal rule.
double auc_trapezoid(const std::vector<int>& binary_labels, const std::vector<double>& scores);

/// sum_{i=1}^{min(n, len)} gains[i-1] / log2(i + 1)
double dcg_at_n(const std::vector<double>& gains_in_rank_order, std::size_t n);

struct GSBCounts {
  std::size_t good = 0;
  std::size_t same = 0;
  std::size_t bad = 0;
};

/// (good - bad) / (good + same + bad); throws UndefinedMetricError on zero total.
double delta_gsb(const GSBCounts& counts);

/// (value - baseline) / |baseline|.
double relative_delta(double value, double baseline);

struct RankingReport {
  std::size_t records = 0;
  double pnr = 0.0;
  double auc = 0.0;
  std::map<std::size_t, double> dcg;
  /// [grade][branch]; NaN where a grade has no records.
  std::array<std::array<double, kBranchCount>, kGradeCount> branch_mean_logits{};
  std::array<double, kBranchCount> branch_pnr{};
};

inline const std::vector<std::size_t> kDefaultDcgCutoffs = {2, 4};

/// Report over already scored records (aligned with `records`, all graded).
RankingReport ranking_report(const std::vector<VideoRecord>& records, const std::vector<ScoredVideo>& scored,
                             const std::vector<std::size_t>& dcg_cutoffs = kDefaultDcgCutoffs);

/// Scores a graded corpus and reports overall and per-branch ranking quality.
RankingReport branch_report(const std::vector<VideoRecord>& corpus, const ModelParameters<float>& model,
                            const std::vector<std::size_t>& dcg_cutoffs = kDefaultDcgCutoffs,
                            unsigned threads = 1);

/// Keys pnr, auc, dcg, branch_mean_logits, branch_pnr. Infinite PNR is the
/// string "inf"; undefined values are null.
nlohmann::ordered_json report_to_json(const RankingReport& report);

/// Relative deltas of pnr, auc and each dcg cutoff against a baseline run.
nlohmann::ordered_json compare_reports(const RankingReport& current, const RankingReport& baseline);

/// Table-style text rendering of the per-branch diagnostics.
std::string format_branch_report(const RankingReport& report);

}  // namespace vqr
