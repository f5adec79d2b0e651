#include "vqrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "vqrank/errors.hpp"

namespace vqr {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* who) {
  if (a != b) {
    throw ContractViolation(std::string(who) + ": " + std::to_string(a) + " labels vs " + std::to_string(b) +
                            " scores");
  }
}

void check_binary(const std::vector<int>& labels, const char* who) {
  for (const int l : labels) {
    if (l != 0 && l != 1) throw ContractViolation(std::string(who) + ": labels must be 0 or 1");
  }
}

std::vector<std::size_t> order_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}

nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

nlohmann::ordered_json pnr_json(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return number_or_null(v);
}

}  // namespace

PairCounts pnr_counts(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_lengths(labels.size(), scores.size(), "pnr");
  PairCounts c;
  bool comparable = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j]) continue;
      comparable = true;
      if (scores[i] == scores[j]) continue;
      const bool label_order = labels[i] > labels[j];
      const bool score_order = scores[i] > scores[j];
      if (label_order == score_order) {
        ++c.concordant;
      } else {
        ++c.discordant;
      }
    }
  }
  if (!comparable) throw UndefinedMetricError("pnr: no pair with distinct labels");
  return c;
}

double pnr(const std::vector<int>& labels, const std::vector<double>& scores) {
  const PairCounts c = pnr_counts(labels, scores);
  if (c.discordant == 0) {
    return c.concordant > 0 ? kInfinitePnr : std::numeric_limits<double>::quiet_NaN();
  }
  return static_cast<double>(c.concordant) / static_cast<double>(c.discordant);
}

double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_lengths(labels.size(), scores.size(), "auc");
  check_binary(labels, "auc");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("auc: both classes must be present");

  // Sweep ascending score groups: each positive beats every negative seen in
  // earlier groups and ties half of the negatives in its own group.
  const std::vector<std::size_t> idx = order_by_score(scores);
  double wins = 0.0;
  std::size_t negatives_below = 0;
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start;
    std::size_t group_pos = 0;
    std::size_t group_neg = 0;
    while (end < idx.size() && scores[idx[end]] == scores[idx[start]]) {
      (labels[idx[end]] == 1 ? group_pos : group_neg) += 1;
      ++end;
    }
    wins += static_cast<double>(group_pos) *
            (static_cast<double>(negatives_below) + 0.5 * static_cast<double>(group_neg));
    negatives_below += group_neg;
    start = end;
  }
  return wins / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double auc_trapezoid(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_lengths(labels.size(), scores.size(), "auc");
  check_binary(labels, "auc");
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double negatives = static_cast<double>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("auc: both classes must be present");

  // Lower the threshold one distinct score at a time, from the top.
  std::vector<std::size_t> idx = order_by_score(scores);
  std::reverse(idx.begin(), idx.end());
  double area = 0.0;
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t start = 0; start < idx.size();) {
    const double prev_tpr = tp / positives;
    const double prev_fpr = fp / negatives;
    std::size_t end = start;
    while (end < idx.size() && scores[idx[end]] == scores[idx[start]]) {
      (labels[idx[end]] == 1 ? tp : fp) += 1.0;
      ++end;
    }
    area += (fp / negatives - prev_fpr) * (tp / positives + prev_tpr) / 2.0;
    start = end;
  }
  return area;
}

double dcg_at_n(const std::vector<double>& gains, std::size_t n) {
  if (n == 0) throw ContractViolation("dcg_at_n: N must be at least 1");
  double total = 0.0;
  const std::size_t k = std::min(n, gains.size());
  for (std::size_t i = 1; i <= k; ++i) total += gains[i - 1] / std::log2(static_cast<double>(i) + 1.0);
  return total;
}

double delta_gsb(const GSBCounts& c) {
  const std::size_t total = c.good + c.same + c.bad;
  if (total == 0) throw UndefinedMetricError("delta_gsb: no judgments");
  return (static_cast<double>(c.good) - static_cast<double>(c.bad)) / static_cast<double>(total);
}

double relative_delta(double value, double baseline) {
  if (baseline == 0.0 || !std::isfinite(baseline)) return std::numeric_limits<double>::quiet_NaN();
  return (value - baseline) / std::abs(baseline);
}

RankingReport ranking_report(const std::vector<VideoRecord>& records, const std::vector<ScoredVideo>& scored,
                             const std::vector<std::size_t>& dcg_cutoffs) {
  check_lengths(records.size(), scored.size(), "ranking_report");
  RankingReport rep;
  rep.records = records.size();
  std::vector<int> grades;
  std::vector<int> binary;
  std::vector<double> scores;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].grade) throw ValidationError("ranking_report: record \"" + records[i].id + "\" has no grade");
    grades.push_back(ordinal(*records[i].grade));
    binary.push_back(binary_label(*records[i].grade));
    scores.push_back(scored[i].score);
  }
  rep.pnr = pnr(grades, scores);
  rep.auc = auc(binary, scores);

  std::vector<std::size_t> ranked = order_by_score(scores);
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> gains;
  gains.reserve(ranked.size());
  for (const std::size_t i : ranked) gains.push_back(soft_label(*records[i].grade));
  for (const std::size_t n : dcg_cutoffs) rep.dcg[n] = dcg_at_n(gains, n);

  std::array<std::array<double, kBranchCount>, kGradeCount> sums{};
  std::array<std::size_t, kGradeCount> counts{};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto g = static_cast<std::size_t>(grades[i]);
    ++counts[g];
    for (std::size_t b = 0; b < kBranchCount; ++b) sums[g][b] += scored[i].branches.branch(static_cast<Branch>(b));
  }
  for (std::size_t g = 0; g < kGradeCount; ++g) {
    for (std::size_t b = 0; b < kBranchCount; ++b) {
      rep.branch_mean_logits[g][b] =
          counts[g] ? sums[g][b] / static_cast<double>(counts[g]) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  for (std::size_t b = 0; b < kBranchCount; ++b) {
    std::vector<double> logits;
    logits.reserve(scored.size());
    for (const ScoredVideo& s : scored) logits.push_back(s.branches.branch(static_cast<Branch>(b)));
    rep.branch_pnr[b] = pnr(grades, logits);
  }
  return rep;
}

RankingReport branch_report(const std::vector<VideoRecord>& corpus, const ModelParameters<float>& model,
                            const std::vector<std::size_t>& dcg_cutoffs, unsigned threads) {
  return ranking_report(corpus, score_corpus(corpus, model, threads), dcg_cutoffs);
}

nlohmann::ordered_json report_to_json(const RankingReport& rep) {
  nlohmann::ordered_json j;
  j["records"] = rep.records;
  j["pnr"] = pnr_json(rep.pnr);
  j["auc"] = number_or_null(rep.auc);
  nlohmann::ordered_json dcg = nlohmann::ordered_json::object();
  for (const auto& [n, v] : rep.dcg) dcg[std::to_string(n)] = v;
  j["dcg"] = dcg;
  nlohmann::ordered_json logits = nlohmann::ordered_json::object();
  for (std::size_t g = 0; g < kGradeCount; ++g) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (std::size_t b = 0; b < kBranchCount; ++b) row[kBranchNames[b]] = number_or_null(rep.branch_mean_logits[g][b]);
    logits[std::string(grade_name(kAllGrades[g]))] = row;
  }
  j["branch_mean_logits"] = logits;
  nlohmann::ordered_json bp = nlohmann::ordered_json::object();
  for (std::size_t b = 0; b < kBranchCount; ++b) bp[kBranchNames[b]] = pnr_json(rep.branch_pnr[b]);
  j["branch_pnr"] = bp;
  return j;
}

nlohmann::ordered_json compare_reports(const RankingReport& current, const RankingReport& baseline) {
  nlohmann::ordered_json j;
  j["pnr"] = number_or_null(relative_delta(current.pnr, baseline.pnr));
  j["auc"] = number_or_null(relative_delta(current.auc, baseline.auc));
  nlohmann::ordered_json dcg = nlohmann::ordered_json::object();
  for (const auto& [n, v] : current.dcg) {
    const auto it = baseline.dcg.find(n);
    if (it != baseline.dcg.end()) dcg[std::to_string(n)] = number_or_null(relative_delta(v, it->second));
  }
  j["dcg"] = dcg;
  return j;
}

std::string format_branch_report(const RankingReport& rep) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "mean branch logits by grade (%zu records)\n", rep.records);
  out += line;
  std::snprintf(line, sizeof(line), "%-8s %10s %10s %10s %10s\n", "branch", "bad", "fair", "good", "excellent");
  out += line;
  for (std::size_t b = 0; b < kBranchCount; ++b) {
    std::snprintf(line, sizeof(line), "%-8s %10.4f %10.4f %10.4f %10.4f\n", kBranchNames[b],
                  rep.branch_mean_logits[0][b], rep.branch_mean_logits[1][b], rep.branch_mean_logits[2][b],
                  rep.branch_mean_logits[3][b]);
    out += line;
  }
  out += "\nPNR of branch logits\n";
  for (std::size_t b = 0; b < kBranchCount; ++b) {
    std::snprintf(line, sizeof(line), "%-8s %10.4f\n", kBranchNames[b], rep.branch_pnr[b]);
    out += line;
  }
  std::snprintf(line, sizeof(line), "\noverall  PNR %.4f  AUC %.4f\n", rep.pnr, rep.auc);
  out += line;
  return out;
}

}  // namespace vqr
