#pragma once

// Evaluation statistics: ROC/AUC, cut-off search, confusion metrics,
// percentile bootstrap, DeLong and McNemar tests, progression ratios.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sacropipe/errors.hpp"
#include "sacropipe/manifest.hpp"
#include "sacropipe/random.hpp"

namespace sacropipe::stats {

using json = nlohmann::json;

struct Scored {
  std::string sample_id;
  double probability = 0.0;
  int label = 0;
};
using ScoredSet = std::vector<Scored>;

struct ClassCounts {
  long positives = 0;
  long negatives = 0;
};

inline ClassCounts class_counts(const ScoredSet& s) {
  ClassCounts c;
  for (const auto& e : s) {
    if (e.label != 0 && e.label != 1) throw DomainError("label must be 0 or 1 (" + e.sample_id + ")");
    if (!(e.probability >= 0.0 && e.probability <= 1.0))
      throw DomainError("probability outside [0,1] for " + e.sample_id);
    (e.label ? c.positives : c.negatives)++;
  }
  return c;
}

inline ClassCounts require_both_classes(const ScoredSet& s) {
  const auto c = class_counts(s);
  if (c.positives == 0 || c.negatives == 0) throw DomainError("AUC-type statistic needs both classes present");
  return c;
}

/// 1-based midranks of `v` (ties share the mean of their ranks).
inline std::vector<double> midranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mid;
    i = j + 1;
  }
  return r;
}

/// Mann-Whitney AUC from midranks; ties between classes earn half credit.
inline double auc(const ScoredSet& s) {
  const auto c = require_both_classes(s);
  std::vector<double> scores(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) scores[i] = s[i].probability;
  const auto r = midranks(scores);
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i].label) pos_rank_sum += r[i];
  const double np = static_cast<double>(c.positives), nn = static_cast<double>(c.negatives);
  return (pos_rank_sum - np * (np + 1) / 2) / (np * nn);
}

struct RocPoint {
  double threshold = 0.0;  // predicted positive iff probability >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

/// One point per distinct score (descending) plus the (0,0) origin.
inline std::vector<RocPoint> roc_curve(const ScoredSet& s) {
  const auto c = require_both_classes(s);
  std::vector<const Scored*> sorted;
  for (const auto& e : s) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Scored* a, const Scored* b) { return a->probability > b->probability; });
  std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double t = sorted[i]->probability;
    while (i < sorted.size() && sorted[i]->probability == t) {
      (sorted[i]->label ? tp : fp)++;
      ++i;
    }
    pts.push_back({t, static_cast<double>(fp) / c.negatives, static_cast<double>(tp) / c.positives});
  }
  return pts;
}

inline double trapezoid_area(const std::vector<RocPoint>& pts) {
  double a = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    a += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2;
  return a;
}

// ---- confusion metrics -------------------------------------------------------------

struct ConfusionMatrix {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long n() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// predicted positive iff probability > tau.
inline ConfusionMatrix confusion(const ScoredSet& s, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("cut-off must lie in [0,1]");
  class_counts(s);
  ConfusionMatrix m;
  for (const auto& e : s) {
    const bool pred = e.probability > tau;
    if (e.label) (pred ? m.tp : m.fn)++;
    else (pred ? m.fp : m.tn)++;
  }
  return m;
}

inline ConfusionMatrix confusion_from_predictions(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i]) (preds[i] ? m.tp : m.fn)++;
    else (preds[i] ? m.fp : m.tn)++;
  }
  return m;
}

/// Undefined rates (0/0) are reported as absent.
struct BasicMetrics {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> balanced_accuracy;
  std::optional<double> mcc;
};

inline std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline std::optional<double> mcc(const ConfusionMatrix& m) {
  const double tp = m.tp, tn = m.tn, fp = m.fp, fn = m.fn;
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return std::nullopt;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

inline BasicMetrics basic_metrics(const ConfusionMatrix& m) {
  BasicMetrics b;
  b.accuracy = ratio(m.tp + m.tn, m.n());
  b.sensitivity = ratio(m.tp, m.tp + m.fn);
  b.specificity = ratio(m.tn, m.tn + m.fp);
  if (b.sensitivity && b.specificity) b.balanced_accuracy = (*b.sensitivity + *b.specificity) / 2;
  b.mcc = mcc(m);
  return b;
}

// ---- cut-off ---------------------------------------------------------------------

enum class CutoffObjective { accuracy, balanced_accuracy };

/// Candidate cut-offs: 0, 1 and the midpoints between adjacent distinct scores.
inline std::vector<double> cutoff_candidates(const ScoredSet& s) {
  std::vector<double> v;
  for (const auto& e : s) v.push_back(e.probability);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> c{0.0};
  for (std::size_t i = 0; i + 1 < v.size(); ++i) c.push_back((v[i] + v[i + 1]) / 2);
  c.push_back(1.0);
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

/// Cut-off maximising the objective; ties resolve to the smallest cut-off.
inline double optimal_cutoff(const ScoredSet& s, CutoffObjective obj = CutoffObjective::accuracy) {
  const auto cls = require_both_classes(s);
  std::vector<double> pos, neg;
  for (const auto& e : s) (e.label ? pos : neg).push_back(e.probability);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  double best_tau = 0.0, best = -1.0;
  for (double tau : cutoff_candidates(s)) {
    // predicted positive iff p > tau
    const long tp = static_cast<long>(pos.end() - std::upper_bound(pos.begin(), pos.end(), tau));
    const long tn = static_cast<long>(std::upper_bound(neg.begin(), neg.end(), tau) - neg.begin());
    const double value = obj == CutoffObjective::accuracy
                             ? static_cast<double>(tp + tn) / static_cast<double>(cls.positives + cls.negatives)
                             : (static_cast<double>(tp) / cls.positives + static_cast<double>(tn) / cls.negatives) / 2;
    if (value > best) {
      best = value;
      best_tau = tau;
    }
  }
  return best_tau;
}

// ---- bootstrap ---------------------------------------------------------------------

/// Linear-interpolation (type 7) sample quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

struct BootstrapResult {
  Interval ci;
  int replicates = 0;
  long redraws = 0;  // resamples on which the metric was undefined
};

using Metric = std::function<std::optional<double>(const ScoredSet&)>;

/// Percentile interval over B resamples (with replacement, sample level).
/// Undefined resamples are redrawn; more undefined draws than B is a failure.
inline BootstrapResult bootstrap_ci(const Metric& metric, const ScoredSet& set, int B = 1000, std::uint64_t seed = 0,
                                    double level = 0.95) {
  if (B < 1) throw ConfigError("bootstrap needs B >= 1");
  if (set.empty()) throw DomainError("bootstrap of an empty set");
  if (!(level > 0 && level < 1)) throw ConfigError("bootstrap level must be in (0,1)");
  // Canonical order makes the result independent of input ordering.
  ScoredSet base = set;
  std::sort(base.begin(), base.end(), [](const Scored& a, const Scored& b) {
    if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
    if (a.probability != b.probability) return a.probability < b.probability;
    return a.label < b.label;
  });
  const std::size_t n = base.size();
  BootstrapResult res;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(B));
  ScoredSet sample(n);
  for (int b = 0; b < B; ++b) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(b));
    while (true) {
      for (std::size_t i = 0; i < n; ++i) sample[i] = base[static_cast<std::size_t>(rng() % n)];
      const auto v = metric(sample);
      if (v) {
        values.push_back(*v);
        break;
      }
      if (++res.redraws > B)
        throw NumericalError("bootstrap CI failure: metric undefined on more than half of the resamples");
    }
  }
  std::sort(values.begin(), values.end());
  const double alpha = (1 - level) / 2;
  res.ci = {quantile_sorted(values, alpha), quantile_sorted(values, 1 - alpha)};
  res.replicates = B;
  return res;
}

// Metric adaptors for bootstrap_ci.
inline Metric auc_metric() {
  return [](const ScoredSet& s) -> std::optional<double> {
    const auto c = class_counts(s);
    if (c.positives == 0 || c.negatives == 0) return std::nullopt;
    return auc(s);
  };
}
inline Metric threshold_metric(double tau, std::optional<double> BasicMetrics::*field) {
  return [tau, field](const ScoredSet& s) { return basic_metrics(confusion(s, tau)).*field; };
}

// ---- normal distribution helpers -----------------------------------------------------

inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }
inline double chi2_1df_sf(double x) { return x <= 0 ? 1.0 : std::erfc(std::sqrt(x / 2)); }

// ---- DeLong --------------------------------------------------------------------------

struct DelongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double variance = 0.0;  // var(auc_a - auc_b)
  double z = 0.0;
  double p = 1.0;
};

namespace detail {

struct Components {
  double auc = 0.0;
  std::vector<double> v10;  // one per positive
  std::vector<double> v01;  // one per negative
};

// Structural components from midranks within all samples, positives and negatives.
inline Components structural_components(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
  const double m = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());
  std::vector<double> all = pos;
  all.insert(all.end(), neg.begin(), neg.end());
  const auto r_all = midranks(all), r_pos = midranks(pos), r_neg = midranks(neg);
  Components c;
  c.v10.resize(pos.size());
  c.v01.resize(neg.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    c.v10[i] = (r_all[i] - r_pos[i]) / n;
    sum += r_all[i];
  }
  for (std::size_t j = 0; j < neg.size(); ++j) c.v01[j] = 1.0 - (r_all[pos.size() + j] - r_neg[j]) / m;
  c.auc = (sum - m * (m + 1) / 2) / (m * n);
  return c;
}

inline double covariance(const std::vector<double>& a, const std::vector<double>& b) {
  const double k = static_cast<double>(a.size());
  if (k < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / k;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / k;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / (k - 1);
}

}  // namespace detail

inline DelongResult delong_test(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                                const std::vector<int>& labels) {
  if (scores_a.size() != labels.size() || scores_b.size() != labels.size())
    throw ShapeError("delong: scores and labels must be paired");
  long np = 0, nn = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DomainError("delong: labels must be 0/1");
    (l ? np : nn)++;
  }
  if (np == 0 || nn == 0) throw DomainError("delong: both classes required");
  const auto A = detail::structural_components(scores_a, labels);
  const auto B = detail::structural_components(scores_b, labels);
  using detail::covariance;
  const double s10 = covariance(A.v10, A.v10) + covariance(B.v10, B.v10) - 2 * covariance(A.v10, B.v10);
  const double s01 = covariance(A.v01, A.v01) + covariance(B.v01, B.v01) - 2 * covariance(A.v01, B.v01);
  DelongResult r;
  r.auc_a = A.auc;
  r.auc_b = B.auc;
  r.variance = std::max(0.0, s10 / static_cast<double>(np) + s01 / static_cast<double>(nn));
  const double delta = r.auc_a - r.auc_b;
  constexpr double kTiny = 1e-15;
  if (r.variance <= kTiny) {
    if (std::abs(delta) <= 1e-12) return r;  // z = 0, p = 1
    throw NumericalError("delong: zero variance with non-zero AUC difference");
  }
  r.z = delta / std::sqrt(r.variance);
  r.p = normal_two_sided_p(r.z);
  return r;
}

// ---- McNemar -------------------------------------------------------------------------

struct McNemarResult {
  long b = 0;  // A correct, B wrong
  long c = 0;  // A wrong, B correct
  double statistic = 0.0;
  double p = 1.0;
  std::string method;  // "exact", "chi2-cc" or "degenerate"
};

inline double binomial_two_sided_half(long k, long n) {
  // P(X <= min(k, n-k)) * 2 for X ~ Bin(n, 1/2), accumulated in log space.
  const long lo = std::min(k, n - k);
  double tail = 0.0;
  for (long i = 0; i <= lo; ++i)
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return std::min(1.0, 2 * tail);
}

inline McNemarResult mcnemar_counts(long b, long c, long exact_below = 25) {
  McNemarResult r;
  r.b = b;
  r.c = c;
  const long n = b + c;
  if (n == 0) {
    r.method = "degenerate";
    return r;
  }
  if (n < exact_below) {
    r.method = "exact";
    r.statistic = static_cast<double>(std::min(b, c));
    r.p = binomial_two_sided_half(b, n);
  } else {
    r.method = "chi2-cc";
    const double d = std::abs(static_cast<double>(b - c)) - 1.0;
    r.statistic = d * d / static_cast<double>(n);
    r.p = chi2_1df_sf(r.statistic);
  }
  return r;
}

inline McNemarResult mcnemar(const std::vector<int>& preds_a, const std::vector<int>& preds_b,
                             const std::vector<int>& labels) {
  if (preds_a.size() != labels.size() || preds_b.size() != labels.size())
    throw ShapeError("mcnemar: predictions must be paired");
  long b = 0, c = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool ca = (preds_a[i] != 0) == (labels[i] != 0);
    const bool cb = (preds_b[i] != 0) == (labels[i] != 0);
    if (ca && !cb) ++b;
    if (!ca && cb) ++c;
  }
  return mcnemar_counts(b, c);
}

// ---- predictions and progression ------------------------------------------------------

inline constexpr double kConfidentThreshold = 0.7;

struct PredictionRecord {
  std::string sample_id;
  double probability = 0.0;
  double cutoff = 0.5;
  bool predicted = false;
  bool confident = false;
};

inline PredictionRecord make_prediction(std::string id, double probability, double cutoff,
                                        double conf_threshold = kConfidentThreshold) {
  PredictionRecord r{std::move(id), probability, cutoff, probability > cutoff, false};
  r.confident = probability > conf_threshold || probability < 1.0 - conf_threshold;
  return r;
}

struct RatioEstimate {
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct ProgressionCounts {
  long group = 0;                   // confident false positives
  long group_progressors = 0;
  long population = 0;              // all baseline-negative patients
  long population_progressors = 0;
};

struct ProgressionResult {
  ProgressionCounts counts;
  std::optional<RatioEstimate> risk_ratio;  // (a/n1) / (P/N)
  std::optional<RatioEstimate> odds_ratio;  // 2x2 cross-product, group vs rest
  std::string status = "ok";
};

/// Ratios from counts with log-scale Wald intervals (Katz for the risk ratio,
/// Woolf for the odds ratio).
inline ProgressionResult progression_from_counts(const ProgressionCounts& k, double zcrit = 1.96) {
  if (k.group < 0 || k.group_progressors < 0 || k.group_progressors > k.group || k.population < k.group ||
      k.population_progressors > k.population || k.population_progressors < k.group_progressors)
    throw DomainError("inconsistent progression counts");
  ProgressionResult r;
  r.counts = k;
  if (k.group == 0) {
    r.status = "no confident false positives";
    return r;
  }
  const double a = static_cast<double>(k.group_progressors), n1 = static_cast<double>(k.group);
  const double P = static_cast<double>(k.population_progressors), N = static_cast<double>(k.population);
  if (a > 0 && P > 0) {
    const double rr = (a / n1) / (P / N);
    const double se = std::sqrt(1 / a - 1 / n1 + 1 / P - 1 / N);
    r.risk_ratio = RatioEstimate{rr, rr * std::exp(-zcrit * se), rr * std::exp(zcrit * se)};
  } else {
    r.status = "risk ratio undefined (zero progressors)";
  }
  const double b = n1 - a, c = P - a, d = (N - n1) - c;
  if (a > 0 && b > 0 && c > 0 && d > 0) {
    const double orr = (a * d) / (b * c);
    const double se = std::sqrt(1 / a + 1 / b + 1 / c + 1 / d);
    r.odds_ratio = RatioEstimate{orr, orr * std::exp(-zcrit * se), orr * std::exp(zcrit * se)};
  } else if (r.status == "ok") {
    r.status = "odds ratio undefined (empty 2x2 cell)";
  }
  return r;
}

/// Baseline-negative patients only; the confident-FP group is probability > conf_threshold.
inline ProgressionResult progression_ratios(const std::vector<PredictionRecord>& baseline,
                                            const FollowUpManifest& followup,
                                            double conf_threshold = kConfidentThreshold) {
  std::map<std::string, const FollowUpEntry*> fu;
  for (const auto& e : followup.entries) fu[e.sample_id] = &e;
  ProgressionCounts k;
  for (const auto& p : baseline) {
    auto it = fu.find(p.sample_id);
    if (it == fu.end()) throw ConfigError("no follow-up entry for " + p.sample_id);
    if (it->second->baseline_label != 0) throw DomainError(p.sample_id + " is not baseline-negative");
    const bool progressed = it->second->followup_label == 1;
    const bool in_group = p.probability > conf_threshold;
    ++k.population;
    if (progressed) ++k.population_progressors;
    if (in_group) {
      ++k.group;
      if (progressed) ++k.group_progressors;
    }
  }
  return progression_from_counts(k);
}

// ---- evaluation report ---------------------------------------------------------------

struct MetricWithCI {
  std::optional<double> value;
  std::optional<Interval> ci;
};

struct ProbabilitySummary {
  double mean = 0.0;
  long count = 0;
  std::vector<long> histogram;  // 10 equal bins on [0,1]
};

struct EvalReport {
  std::string dataset;
  std::string variant;
  double cutoff = 0.5;
  long n = 0;
  MetricWithCI auc, balanced_accuracy, sensitivity, specificity;
  std::optional<double> mcc;
  std::optional<double> accuracy;
  ConfusionMatrix confusion;
  std::vector<RocPoint> roc;
  ProbabilitySummary negatives, positives;
  std::optional<double> gradcam_in_box_fraction;
  int bootstrap_replicates = 0;
};

inline ProbabilitySummary summarize_probabilities(const ScoredSet& s, int label) {
  ProbabilitySummary p;
  p.histogram.assign(10, 0);
  double sum = 0.0;
  for (const auto& e : s) {
    if (e.label != label) continue;
    ++p.count;
    sum += e.probability;
    p.histogram[std::min(9, static_cast<int>(e.probability * 10))]++;
  }
  if (p.count) p.mean = sum / static_cast<double>(p.count);
  return p;
}

inline EvalReport build_report(const ScoredSet& s, double tau, int B, std::uint64_t seed, std::string dataset = "",
                               std::string variant = "") {
  EvalReport r;
  r.dataset = std::move(dataset);
  r.variant = std::move(variant);
  r.cutoff = tau;
  r.n = static_cast<long>(s.size());
  r.bootstrap_replicates = B;
  r.confusion = confusion(s, tau);
  const auto m = basic_metrics(r.confusion);
  r.accuracy = m.accuracy;
  r.mcc = m.mcc;
  r.sensitivity.value = m.sensitivity;
  r.specificity.value = m.specificity;
  r.balanced_accuracy.value = m.balanced_accuracy;
  const auto cls = class_counts(s);
  const bool both = cls.positives > 0 && cls.negatives > 0;
  if (both) {
    r.auc.value = auc(s);
    r.roc = roc_curve(s);
  }
  auto try_ci = [&](MetricWithCI& dst, const Metric& metric, std::uint64_t stream) {
    if (!dst.value || B < 1) return;
    dst.ci = bootstrap_ci(metric, s, B, derive_seed(seed, stream)).ci;
  };
  try_ci(r.auc, auc_metric(), 1);
  try_ci(r.balanced_accuracy, threshold_metric(tau, &BasicMetrics::balanced_accuracy), 2);
  try_ci(r.sensitivity, threshold_metric(tau, &BasicMetrics::sensitivity), 3);
  try_ci(r.specificity, threshold_metric(tau, &BasicMetrics::specificity), 4);
  r.negatives = summarize_probabilities(s, 0);
  r.positives = summarize_probabilities(s, 1);
  return r;
}

// ---- JSON / CSV ------------------------------------------------------------------------

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json to_json_value(const MetricWithCI& m) {
  json j{{"value", opt_json(m.value)}};
  j["ci"] = m.ci ? json::array({m.ci->lo, m.ci->hi}) : json(nullptr);
  return j;
}

inline void to_json(json& j, const ConfusionMatrix& m) {
  j = json{{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
}

inline void to_json(json& j, const ProbabilitySummary& p) {
  j = json{{"count", p.count}, {"mean", p.mean}, {"histogram", p.histogram}};
}

inline void to_json(json& j, const EvalReport& r) {
  j = json{{"dataset", r.dataset},
           {"variant", r.variant},
           {"n", r.n},
           {"cutoff", r.cutoff},
           {"auc", to_json_value(r.auc)},
           {"balanced_accuracy", to_json_value(r.balanced_accuracy)},
           {"sensitivity", to_json_value(r.sensitivity)},
           {"specificity", to_json_value(r.specificity)},
           {"accuracy", opt_json(r.accuracy)},
           {"mcc", opt_json(r.mcc)},
           {"confusion", r.confusion},
           {"bootstrap_replicates", r.bootstrap_replicates},
           {"probabilities", {{"negatives", r.negatives}, {"positives", r.positives}}},
           {"gradcam_in_box_fraction", opt_json(r.gradcam_in_box_fraction)}};
  json roc = json::array();
  for (const auto& p : r.roc) roc.push_back({std::isinf(p.threshold) ? json(nullptr) : json(p.threshold), p.fpr, p.tpr});
  j["roc_points"] = roc;
}

inline void to_json(json& j, const DelongResult& d) {
  j = json{{"auc_a", d.auc_a}, {"auc_b", d.auc_b}, {"variance", d.variance}, {"z", d.z}, {"p", d.p}};
}

inline void to_json(json& j, const McNemarResult& m) {
  j = json{{"b", m.b}, {"c", m.c}, {"statistic", m.statistic}, {"p", m.p}, {"method", m.method}};
}

inline json ratio_json(const std::optional<RatioEstimate>& r) {
  if (!r) return nullptr;
  return json{{"value", r->value}, {"ci", json::array({r->lo, r->hi})}};
}

inline void to_json(json& j, const ProgressionResult& r) {
  j = json{{"counts",
            {{"confident_fp", r.counts.group},
             {"confident_fp_progressors", r.counts.group_progressors},
             {"baseline_negative", r.counts.population},
             {"progressors", r.counts.population_progressors}}},
           {"risk_ratio", ratio_json(r.risk_ratio)},
           {"odds_ratio", ratio_json(r.odds_ratio)},
           {"status", r.status}};
}

inline std::string roc_csv(const std::vector<RocPoint>& pts) {
  std::string s = "threshold,fpr,tpr\n";
  char buf[96];
  for (const auto& p : pts) {
    if (std::isinf(p.threshold)) std::snprintf(buf, sizeof buf, "inf,%.10g,%.10g\n", p.fpr, p.tpr);
    else std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", p.threshold, p.fpr, p.tpr);
    s += buf;
  }
  return s;
}

inline std::string confusion_csv(const ConfusionMatrix& m) {
  return "actual,predicted_negative,predicted_positive\nnegative," + std::to_string(m.tn) + "," +
         std::to_string(m.fp) + "\npositive," + std::to_string(m.fn) + "," + std::to_string(m.tp) + "\n";
}

}  // namespace sacropipe::stats
