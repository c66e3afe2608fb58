#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "overthink/redundancy.hpp"
#include "overthink/rng.hpp"

namespace overthink {

struct InsufficientGroups : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooFewSamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoEligibleGroups : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingLabels : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyJoin : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-problem value lists; the resampling unit for all bootstrap CIs is the
// problem, not the trace, to respect within-problem correlation.
struct GroupedSample {
  std::map<std::string, std::vector<double>> groups;

  void add(const std::string& group, double value) { groups[group].push_back(value); }

  size_t total_values() const {
    size_t n = 0;
    for (const auto& [_, v] : groups) n += v.size();
    return n;
  }

  double pooled_mean() const {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& [_, v] : groups) {
      sum = std::accumulate(v.begin(), v.end(), sum);
      n += v.size();
    }
    return sum / static_cast<double>(n);
  }
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Acklam's rational approximation to the standard normal quantile
// (|relative error| < 1.15e-9 over the open unit interval).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

// Quantile of a sorted sample with linear interpolation between order stats.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace detail

struct BootstrapResult {
  double low = 0.0;
  double high = 0.0;
  std::string method;  // "percentile" or "BCa"
};

// Percentile bootstrap of the pooled mean with problem-level resampling.
// Small samples (fewer than bca_threshold traces in total) switch to the
// bias-corrected and accelerated interval, with the acceleration estimated by
// a jackknife over groups.
inline BootstrapResult bootstrap_ci(const GroupedSample& sample, int B = 10000, double level = 0.95,
                                    uint64_t seed = 42, int bca_threshold = 40) {
  const size_t g = sample.groups.size();
  if (g < 2) throw InsufficientGroups("bootstrap_ci: need at least 2 groups");
  for (const auto& [name, values] : sample.groups) {
    if (values.empty()) throw InsufficientGroups("bootstrap_ci: empty group " + name);
  }

  std::vector<const std::vector<double>*> groups;
  groups.reserve(g);
  size_t n_total = 0;
  bool constant = true;
  const double first_value = sample.groups.begin()->second.front();
  for (const auto& [_, v] : sample.groups) {
    groups.push_back(&v);
    n_total += v.size();
    for (double x : v) constant = constant && x == first_value;
  }
  if (constant) {
    return {first_value, first_value,
            n_total < static_cast<size_t>(bca_threshold) ? "BCa" : "percentile"};
  }

  std::vector<double> boot(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(b)));
    double sum = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < g; ++i) {
      const auto& grp = *groups[rng.below(g)];
      sum = std::accumulate(grp.begin(), grp.end(), sum);
      n += grp.size();
    }
    boot[static_cast<size_t>(b)] = sum / static_cast<double>(n);
  }
  std::sort(boot.begin(), boot.end());

  const double alpha = 1.0 - level;
  if (boot.front() == boot.back()) {
    return {boot.front(), boot.back(), n_total < static_cast<size_t>(bca_threshold) ? "BCa" : "percentile"};
  }

  if (n_total >= static_cast<size_t>(bca_threshold)) {
    return {detail::quantile_sorted(boot, alpha / 2), detail::quantile_sorted(boot, 1 - alpha / 2),
            "percentile"};
  }

  // BCa: bias correction from the bootstrap distribution, acceleration from
  // a leave-one-group-out jackknife.
  const double theta_hat = sample.pooled_mean();
  size_t below = 0;
  for (double v : boot) {
    if (v < theta_hat) ++below;
  }
  double p0 = static_cast<double>(below) / B;
  p0 = std::min(std::max(p0, 0.5 / B), 1.0 - 0.5 / B);
  const double z0 = detail::normal_quantile(p0);

  std::vector<double> jack(g);
  for (size_t drop = 0; drop < g; ++drop) {
    double sum = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < g; ++i) {
      if (i == drop) continue;
      sum = std::accumulate(groups[i]->begin(), groups[i]->end(), sum);
      n += groups[i]->size();
    }
    jack[drop] = sum / static_cast<double>(n);
  }
  const double jack_mean = std::accumulate(jack.begin(), jack.end(), 0.0) / static_cast<double>(g);
  double num = 0.0, den = 0.0;
  for (double v : jack) {
    const double d = jack_mean - v;
    num += d * d * d;
    den += d * d;
  }
  const double accel = den > 0.0 ? num / (6.0 * std::pow(den, 1.5)) : 0.0;

  const auto adjusted = [&](double z_alpha) {
    const double t = z0 + z_alpha;
    double denom = 1.0 - accel * t;
    if (denom <= 0.0) denom = 1e-12;
    const double z = z0 + t / denom;
    return detail::normal_cdf(z);
  };
  const double a1 = adjusted(detail::normal_quantile(alpha / 2));
  const double a2 = adjusted(detail::normal_quantile(1 - alpha / 2));
  return {detail::quantile_sorted(boot, std::clamp(a1, 0.0, 1.0)),
          detail::quantile_sorted(boot, std::clamp(a2, 0.0, 1.0)), "BCa"};
}

// ---------------------------------------------------------------------------
// ECDF
// ---------------------------------------------------------------------------

// Right-continuous empirical CDF; value at x is the fraction of observations
// <= x. quantile(q) is the smallest observation with ECDF >= q.
class Ecdf {
 public:
  explicit Ecdf(std::vector<double> values) : sorted_(std::move(values)) {
    if (sorted_.empty()) throw EmptyInput("ecdf: values must be non-empty");
    std::sort(sorted_.begin(), sorted_.end());
  }

  double operator()(double x) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
  }

  double quantile(double q) const {
    const size_t n = sorted_.size();
    const size_t need = static_cast<size_t>(std::ceil(q * static_cast<double>(n) - 1e-12));
    return sorted_[std::min(need == 0 ? 0 : need - 1, n - 1)];
  }

  double p50() const { return quantile(0.5); }
  double p90() const { return quantile(0.9); }
  const std::vector<double>& sorted_values() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

// ---------------------------------------------------------------------------
// Spearman rank correlation
// ---------------------------------------------------------------------------

// Average ranks (ties share the mean rank), 1-based.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw LengthMismatch("spearman: input lengths differ");
  const size_t n = x.size();
  if (n < 2) throw DegenerateInput("spearman: need at least 2 pairs");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx == 0.0 || vy == 0.0) throw DegenerateInput("spearman: constant input");
  return cov / std::sqrt(vx * vy);
}

// ---------------------------------------------------------------------------
// Decile table
// ---------------------------------------------------------------------------

struct DecileRow {
  double mean_length = 0.0;
  double accuracy = 0.0;
  int n = 0;
};

// Stable sort by length, then ten equal-count bins; a remainder of r spreads
// one extra sample into each of the first r bins.
inline std::vector<DecileRow> decile_table(const std::vector<double>& lengths, const std::vector<bool>& correct) {
  if (lengths.size() != correct.size()) throw LengthMismatch("decile_table: input lengths differ");
  const size_t n = lengths.size();
  if (n < 10) throw TooFewSamples("decile_table: need at least 10 samples");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return lengths[a] < lengths[b]; });

  const size_t base = n / 10, rem = n % 10;
  std::vector<DecileRow> rows;
  size_t pos = 0;
  for (size_t bin = 0; bin < 10; ++bin) {
    const size_t size = base + (bin < rem ? 1 : 0);
    DecileRow row;
    row.n = static_cast<int>(size);
    double len_sum = 0.0;
    int n_correct = 0;
    for (size_t i = 0; i < size; ++i, ++pos) {
      len_sum += lengths[order[pos]];
      n_correct += correct[order[pos]] ? 1 : 0;
    }
    row.mean_length = len_sum / static_cast<double>(size);
    row.accuracy = static_cast<double>(n_correct) / static_cast<double>(size);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Within-problem variance
// ---------------------------------------------------------------------------

struct VarianceSummary {
  double mean_sigma = 0.0;  // mean per-problem sample standard deviation
  double mean_range = 0.0;  // mean per-problem max - min
  int n_problems = 0;       // groups with >= 2 values
};

inline VarianceSummary within_problem_variance(const GroupedSample& sample) {
  VarianceSummary out;
  double sigma_sum = 0.0, range_sum = 0.0;
  for (const auto& [_, values] : sample.groups) {
    if (values.size() < 2) continue;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    sigma_sum += std::sqrt(ss / static_cast<double>(values.size() - 1));
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    range_sum += *mx - *mn;
    ++out.n_problems;
  }
  if (out.n_problems == 0) throw NoEligibleGroups("within_problem_variance: no group has >= 2 values");
  out.mean_sigma = sigma_sum / out.n_problems;
  out.mean_range = range_sum / out.n_problems;
  return out;
}

// ---------------------------------------------------------------------------
// Condition summary (main-table row) and stratification
// ---------------------------------------------------------------------------

struct ConditionSummary {
  std::string model;
  std::string benchmark;
  double rho_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double rho_word_mean = 0.0;
  double mean_n_steps = 0.0;
  double mean_k_star = 0.0;
  double median_k_star = 0.0;
  int n_correct = 0;    // traces entering the row (k* found)
  int n_not_found = 0;  // correct traces whose probes never recovered the answer
  std::string ci_method;
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ConditionSummary summarize_condition(const std::vector<RedundancyRecord>& records,
                                            const std::string& model, const std::string& benchmark,
                                            int B = 10000, uint64_t seed = 42) {
  ConditionSummary s;
  s.model = model;
  s.benchmark = benchmark;
  GroupedSample rho_groups;
  std::vector<double> ks;
  double rho_sum = 0.0, rho_word_sum = 0.0, n_sum = 0.0;
  for (const auto& r : records) {
    if (!r.k_star) {
      ++s.n_not_found;
      continue;
    }
    rho_groups.add(r.problem_id, *r.rho_step);
    ks.push_back(static_cast<double>(*r.k_star));
    rho_sum += *r.rho_step;
    rho_word_sum += *r.rho_word;
    n_sum += r.n_steps;
    ++s.n_correct;
  }
  if (s.n_correct == 0) throw EmptyInput("summarize_condition: no records with k* found");
  s.rho_mean = rho_sum / s.n_correct;
  s.rho_word_mean = rho_word_sum / s.n_correct;
  s.mean_n_steps = n_sum / s.n_correct;
  s.mean_k_star = std::accumulate(ks.begin(), ks.end(), 0.0) / s.n_correct;
  s.median_k_star = median_of(ks);
  if (rho_groups.groups.size() >= 2) {
    const BootstrapResult ci = bootstrap_ci(rho_groups, B, 0.95, seed);
    s.ci_low = ci.low;
    s.ci_high = ci.high;
    s.ci_method = ci.method;
  } else {
    s.ci_low = s.ci_high = s.rho_mean;
    s.ci_method = "degenerate";
  }
  return s;
}

enum class StratifyBy { Difficulty, Subject };

struct StratumSummary {
  std::string label;
  double rho_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double mean_k_star = 0.0;
  double mean_length = 0.0;  // mean trace words (subject table pairs it with rho)
  int n = 0;
  std::string ci_method;
};

// Per-stratum aggregation over records with k* found. label_of maps a problem
// id to its stratum (difficulty level or subject); length_of supplies trace
// word totals for the subject table's length column.
inline std::vector<StratumSummary> stratify(
    const std::vector<RedundancyRecord>& records,
    const std::function<std::optional<std::string>(const std::string&)>& label_of,
    const std::function<double(const std::string&, int)>& length_of, int B = 10000, uint64_t seed = 42) {
  std::map<std::string, std::vector<const RedundancyRecord*>> strata;
  for (const auto& r : records) {
    if (!r.k_star) continue;
    const auto label = label_of(r.problem_id);
    if (!label) throw MissingLabels("stratify: problem " + r.problem_id + " has no stratum label");
    strata[*label].push_back(&r);
  }
  if (strata.empty()) throw MissingLabels("stratify: no labelled records");

  std::vector<StratumSummary> out;
  for (const auto& [label, recs] : strata) {
    StratumSummary s;
    s.label = label;
    GroupedSample rho_groups;
    double rho_sum = 0.0, k_sum = 0.0, len_sum = 0.0;
    for (const auto* r : recs) {
      rho_groups.add(r->problem_id, *r->rho_step);
      rho_sum += *r->rho_step;
      k_sum += static_cast<double>(*r->k_star);
      len_sum += length_of(r->problem_id, r->sample_index);
    }
    s.n = static_cast<int>(recs.size());
    s.rho_mean = rho_sum / s.n;
    s.mean_k_star = k_sum / s.n;
    s.mean_length = len_sum / s.n;
    if (rho_groups.groups.size() >= 2) {
      const BootstrapResult ci = bootstrap_ci(rho_groups, B, 0.95, Rng::derive(seed, label));
      s.ci_low = ci.low;
      s.ci_high = ci.high;
      s.ci_method = ci.method;
    } else {
      s.ci_low = s.ci_high = s.rho_mean;
      s.ci_method = "degenerate";
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Positional redundancy
// ---------------------------------------------------------------------------

struct PositionalBin {
  double lo = 0.0;  // relative position bin (lo, hi]
  double hi = 0.0;
  double rate = 0.0;  // fraction of steps in the bin that are redundant (i > k*)
  long n_steps = 0;
};

inline std::vector<PositionalBin> positional_redundancy(const std::vector<RedundancyRecord>& records,
                                                        int bins = 10) {
  std::vector<long> total(static_cast<size_t>(bins), 0), redundant(static_cast<size_t>(bins), 0);
  for (const auto& r : records) {
    if (!r.k_star) continue;
    for (int i = 1; i <= r.n_steps; ++i) {
      const double p = static_cast<double>(i) / r.n_steps;
      size_t bin = static_cast<size_t>(p * bins);
      if (bin >= static_cast<size_t>(bins)) bin = static_cast<size_t>(bins) - 1;
      ++total[bin];
      if (i > *r.k_star) ++redundant[bin];
    }
  }
  std::vector<PositionalBin> out;
  for (int b = 0; b < bins; ++b) {
    PositionalBin pb;
    pb.lo = static_cast<double>(b) / bins;
    pb.hi = static_cast<double>(b + 1) / bins;
    pb.n_steps = total[static_cast<size_t>(b)];
    pb.rate = pb.n_steps > 0 ? static_cast<double>(redundant[static_cast<size_t>(b)]) / pb.n_steps : 0.0;
    out.push_back(pb);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Judge agreement
// ---------------------------------------------------------------------------

struct JudgeAgreement {
  int n = 0;
  double exact_pct = 0.0;      // k*_self == k*_ext
  double within1_pct = 0.0;    // |delta| <= 1
  double pi_earlier_pct = 0.0; // k*_self < k*_ext
  double mean_delta = 0.0;     // mean(k*_self - k*_ext)
};

inline JudgeAgreement judge_agreement(const std::vector<RedundancyRecord>& self_records,
                                      const std::vector<RedundancyRecord>& ext_records) {
  std::map<std::pair<std::string, int>, int> ext_k;
  for (const auto& r : ext_records) {
    if (r.k_star) ext_k[{r.problem_id, r.sample_index}] = *r.k_star;
  }
  JudgeAgreement out;
  long exact = 0, within1 = 0, earlier = 0;
  double delta_sum = 0.0;
  for (const auto& r : self_records) {
    if (!r.k_star) continue;
    const auto it = ext_k.find({r.problem_id, r.sample_index});
    if (it == ext_k.end()) continue;
    const int d = *r.k_star - it->second;
    ++out.n;
    if (d == 0) ++exact;
    if (d >= -1 && d <= 1) ++within1;
    if (d < 0) ++earlier;
    delta_sum += d;
  }
  if (out.n == 0) throw EmptyJoin("judge_agreement: no joinable records with both k* found");
  out.exact_pct = 100.0 * exact / out.n;
  out.within1_pct = 100.0 * within1 / out.n;
  out.pi_earlier_pct = 100.0 * earlier / out.n;
  out.mean_delta = delta_sum / out.n;
  return out;
}

}  // namespace overthink
