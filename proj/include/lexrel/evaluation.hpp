#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexrel/dataset.hpp"
#include "lexrel/util.hpp"

namespace lexrel {

struct ConfusionMatrix {
  std::vector<std::string> inventory;
  std::vector<std::vector<std::int64_t>> counts;  // rows gold, columns predicted

  explicit ConfusionMatrix(std::vector<std::string> relations)
      : inventory(std::move(relations)),
        counts(inventory.size(), std::vector<std::int64_t>(inventory.size(), 0)) {}

  std::int64_t total() const {
    std::int64_t n = 0;
    for (const auto& row : counts)
      for (std::int64_t c : row) n += c;
    return n;
  }
};

inline ConfusionMatrix confusion(const std::vector<std::string>& gold,
                                 const std::vector<std::string>& pred,
                                 const std::vector<std::string>& inventory) {
  if (gold.size() != pred.size())
    throw DataError("confusion: " + std::to_string(gold.size()) + " gold labels vs " +
                    std::to_string(pred.size()) + " predictions");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < inventory.size(); ++i) index.emplace(inventory[i], i);
  ConfusionMatrix cm(inventory);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto g = index.find(gold[i]);
    auto p = index.find(pred[i]);
    if (g == index.end()) throw DataError("confusion: unknown gold label '" + gold[i] + "'");
    if (p == index.end()) throw DataError("confusion: unknown predicted label '" + pred[i] + "'");
    ++cm.counts[g->second][p->second];
  }
  return cm;
}

struct RelationMetrics {
  std::string relation;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct Metrics {
  std::vector<RelationMetrics> per_relation;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  std::int64_t total = 0;
};

/// Per-relation precision/recall/F1 with the zero-denominator convention:
/// any 0/0 is reported as 0.
inline std::vector<RelationMetrics> per_relation_prf(const ConfusionMatrix& cm) {
  const std::size_t k = cm.inventory.size();
  std::vector<RelationMetrics> out(k);
  for (std::size_t r = 0; r < k; ++r) {
    std::int64_t tp = cm.counts[r][r];
    std::int64_t gold_total = 0, pred_total = 0;
    for (std::size_t c = 0; c < k; ++c) {
      gold_total += cm.counts[r][c];
      pred_total += cm.counts[c][r];
    }
    RelationMetrics& m = out[r];
    m.relation = cm.inventory[r];
    m.support = gold_total;
    m.precision = pred_total > 0 ? static_cast<double>(tp) / pred_total : 0.0;
    m.recall = gold_total > 0 ? static_cast<double>(tp) / gold_total : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                      : 0.0;
  }
  return out;
}

/// Support-weighted averages: each of P, R, F1 is averaged independently with
/// weights support_r / N, so the weighted F1 is generally not the harmonic
/// mean of weighted P and weighted R.
inline Metrics weighted_prf(const ConfusionMatrix& cm) {
  Metrics m;
  m.per_relation = per_relation_prf(cm);
  m.total = cm.total();
  if (m.total == 0) throw DataError("weighted_prf: empty confusion matrix");
  std::int64_t diagonal = 0;
  for (std::size_t r = 0; r < cm.inventory.size(); ++r) diagonal += cm.counts[r][r];
  m.accuracy = static_cast<double>(diagonal) / m.total;
  for (const RelationMetrics& r : m.per_relation) {
    const double w = static_cast<double>(r.support) / m.total;
    m.weighted_precision += w * r.precision;
    m.weighted_recall += w * r.recall;
    m.weighted_f1 += w * r.f1;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Paired t-test. The two-sided p-value comes from the regularized incomplete
// beta function evaluated by continued fraction, not a lookup table.
// ---------------------------------------------------------------------------

namespace detail {

inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

inline double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw NumericError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace detail

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
};

inline TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DataError("paired_ttest: score vectors of length " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  const std::size_t n = a.size();
  if (n < 2) throw DataError("paired_ttest: need at least 2 paired scores");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  if (ss == 0.0) throw DataError("paired_ttest: all differences identical (zero variance)");
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult result;
  result.df = static_cast<int>(n) - 1;
  result.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double df = static_cast<double>(result.df);
  result.p = detail::incomplete_beta(df / 2.0, 0.5, df / (df + result.t * result.t));
  return result;
}

// ---------------------------------------------------------------------------
// Lexical memorization analysis.
// ---------------------------------------------------------------------------

/// Per-term label frequencies over a training set, with deterministic
/// majority lookups (ties break toward the earlier inventory relation).
class TrainFrequency {
 public:
  TrainFrequency(const std::vector<LabeledPair>& train, const std::vector<std::string>& inventory) {
    if (train.empty()) throw DataError("memorization analysis: empty train set");
    for (std::size_t i = 0; i < inventory.size(); ++i) rank_.emplace(inventory[i], i);
    std::map<std::string, std::int64_t> global;
    for (const LabeledPair& p : train) {
      ++by_y_[p.y][p.relation];
      ++by_x_[p.x][p.relation];
      ++global[p.relation];
    }
    global_ = majority(global);
  }

  const std::string& global_majority() const { return global_; }

  std::optional<std::string> y_majority(const std::string& y) const {
    auto it = by_y_.find(y);
    if (it == by_y_.end()) return std::nullopt;
    return majority(it->second);
  }

  std::optional<std::string> x_majority(const std::string& x) const {
    auto it = by_x_.find(x);
    if (it == by_x_.end()) return std::nullopt;
    return majority(it->second);
  }

 private:
  std::string majority(const std::map<std::string, std::int64_t>& counts) const {
    std::string best;
    std::int64_t best_count = -1;
    std::size_t best_rank = 0;
    for (const auto& [rel, count] : counts) {
      auto it = rank_.find(rel);
      const std::size_t rank =
          it != rank_.end() ? it->second : rank_.size() + std::hash<std::string>{}(rel) % 1000;
      if (count > best_count || (count == best_count && rank < best_rank)) {
        best = rel;
        best_count = count;
        best_rank = rank;
      }
    }
    return best;
  }

  std::unordered_map<std::string, std::map<std::string, std::int64_t>> by_y_;
  std::unordered_map<std::string, std::map<std::string, std::int64_t>> by_x_;
  std::unordered_map<std::string, std::size_t> rank_;
  std::string global_;
};

/// Predicts each test pair's label as the most frequent train relation of y,
/// falling back to x, then to the global train majority.
inline std::vector<std::string> memorization_baseline(const std::vector<LabeledPair>& train,
                                                      const std::vector<LabeledPair>& test,
                                                      const std::vector<std::string>& inventory) {
  TrainFrequency freq(train, inventory);
  std::vector<std::string> out;
  out.reserve(test.size());
  for (const LabeledPair& p : test) {
    if (auto by_y = freq.y_majority(p.y)) out.push_back(*by_y);
    else if (auto by_x = freq.x_majority(p.x)) out.push_back(*by_x);
    else out.push_back(freq.global_majority());
  }
  return out;
}

struct DisagreementRow {
  LabeledPair pair;  // relation field holds the gold label
  std::string pred_a;
  std::string pred_b;
  std::string y_train_majority;  // "-" when y is unseen in train
  bool memorization = false;     // pred_b equals y's train majority
};

struct DisagreementReport {
  std::vector<DisagreementRow> rows;
  std::vector<std::pair<std::string, std::int64_t>> per_relation;  // gold label breakdown
  std::int64_t memorization = 0;
  std::int64_t evaluated = 0;

  std::int64_t total() const { return static_cast<std::int64_t>(rows.size()); }
};

/// Pairs the first method gets right and the second gets wrong, with the
/// y-frequency memorization diagnosis for each.
inline DisagreementReport disagreement_report(const std::vector<LabeledPair>& pairs,
                                              const std::vector<std::string>& pred_a,
                                              const std::vector<std::string>& pred_b,
                                              const std::vector<LabeledPair>& train,
                                              const std::vector<std::string>& inventory) {
  if (pred_a.size() != pairs.size() || pred_b.size() != pairs.size())
    throw DataError("disagreement_report: misaligned prediction lists (" +
                    std::to_string(pairs.size()) + " pairs, " + std::to_string(pred_a.size()) +
                    " and " + std::to_string(pred_b.size()) + " predictions)");
  TrainFrequency freq(train, inventory);
  DisagreementReport report;
  report.evaluated = static_cast<std::int64_t>(pairs.size());
  std::map<std::string, std::int64_t> by_gold;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pred_a[i] != pairs[i].relation || pred_b[i] == pairs[i].relation) continue;
    DisagreementRow row;
    row.pair = pairs[i];
    row.pred_a = pred_a[i];
    row.pred_b = pred_b[i];
    auto majority = freq.y_majority(pairs[i].y);
    row.y_train_majority = majority.value_or("-");
    row.memorization = majority && *majority == pred_b[i];
    if (row.memorization) ++report.memorization;
    ++by_gold[pairs[i].relation];
    report.rows.push_back(std::move(row));
  }
  report.per_relation.assign(by_gold.begin(), by_gold.end());
  return report;
}

// ---------------------------------------------------------------------------
// Report rendering.
// ---------------------------------------------------------------------------

inline std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string format_table_tsv(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += join(row, "\t");
    out += '\n';
  }
  return out;
}

inline std::string format_table_aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (row.size() > widths.size()) widths.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out += "  ";
      out += row[c];
      if (c + 1 < row.size()) out.append(widths[c] - row[c].size(), ' ');
    }
    out += '\n';
  }
  return out;
}

}  // namespace lexrel
