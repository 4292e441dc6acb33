#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mirror/error.hpp"
#include "mirror/survey.hpp"

namespace mirror::metrics {

/// Response frequencies over every level of a Likert scale (zero-count
/// levels kept).
struct LikertDistribution {
  LikertScale scale;
  std::vector<long> counts;
  std::vector<double> probabilities;

  long total() const {
    long t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

inline LikertDistribution likert_histogram(std::span<const int> responses, const LikertScale& scale) {
  scale.validate();
  if (responses.empty()) throw Error(ErrorCode::empty_input, "histogram of an empty response list");
  LikertDistribution d{scale, std::vector<long>(static_cast<std::size_t>(scale.levels()), 0), {}};
  for (int v : responses) {
    if (!scale.contains(v)) {
      throw Error(ErrorCode::out_of_range, "response " + std::to_string(v) + " outside [" + std::to_string(scale.min) +
                                               ", " + std::to_string(scale.max) + "]");
    }
    ++d.counts[static_cast<std::size_t>(v - scale.min)];
  }
  const auto total = static_cast<double>(responses.size());
  for (auto c : d.counts) d.probabilities.push_back(static_cast<double>(c) / total);
  return d;
}

/// Distribution from explicit probabilities (must be nonnegative, sum to 1).
inline LikertDistribution from_probabilities(const LikertScale& scale, std::vector<double> probabilities) {
  scale.validate();
  if (probabilities.size() != static_cast<std::size_t>(scale.levels())) {
    throw Error(ErrorCode::invalid_argument, "probability vector length does not match the scale");
  }
  double sum = 0;
  for (double p : probabilities) {
    if (!(p >= 0)) throw Error(ErrorCode::invalid_argument, "negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorCode::invalid_argument, "probabilities do not sum to 1");
  return {scale, std::vector<long>(probabilities.size(), 0), std::move(probabilities)};
}

inline void require_same_scale(const LikertDistribution& p, const LikertDistribution& q) {
  if (!(p.scale == q.scale)) throw Error(ErrorCode::scale_mismatch, "distributions are on different scales");
}

namespace detail {
// KL(P || M) in bits; terms with P(k) = 0 contribute nothing.
inline double kl_to_mixture(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0) s += p[k] * std::log2(p[k] / (0.5 * (p[k] + q[k])));
  }
  return s;
}
}  // namespace detail

/// Jensen-Shannon divergence with base-2 logarithm, in [0, 1].
inline double jensen_shannon(const LikertDistribution& p, const LikertDistribution& q) {
  require_same_scale(p, q);
  const double js = 0.5 * detail::kl_to_mixture(p.probabilities, q.probabilities) +
                    0.5 * detail::kl_to_mixture(q.probabilities, p.probabilities);
  return std::clamp(js, 0.0, 1.0);
}

/// First-order Wasserstein distance on the integer Likert line (unit spacing).
inline double wasserstein(const LikertDistribution& p, const LikertDistribution& q) {
  require_same_scale(p, q);
  double fp = 0;
  double fq = 0;
  double w = 0;
  for (std::size_t k = 0; k + 1 < p.probabilities.size(); ++k) {
    fp += p.probabilities[k];
    fq += q.probabilities[k];
    w += std::abs(fp - fq);
  }
  return w;
}

enum class Bin { disagree, neutral, agree };

/// Below the scale midpoint disagrees, above agrees, exactly on it is neutral
/// (1-3 / 4 / 5-7 on a seven-point scale).
inline Bin bin_of(int value, const LikertScale& scale) {
  const int twice = 2 * value;
  const int mid2 = scale.min + scale.max;
  if (twice < mid2) return Bin::disagree;
  if (twice > mid2) return Bin::agree;
  return Bin::neutral;
}

struct ConsistencyResult {
  double percentage = 0;  // pooled over all respondent-item cells
  long matched = 0;
  long cells = 0;
  std::vector<std::pair<std::string, double>> per_item;  // percentage per item
};

/// Bin agreement between two matrices over the same respondents (matched by
/// id) and the same items.
inline ConsistencyResult consistency_detail(const ResponseMatrix& human, const ResponseMatrix& llm) {
  if (!(human.spec().scale() == llm.spec().scale())) throw Error(ErrorCode::scale_mismatch, "matrices use different scales");
  if (human.items() != llm.items()) throw Error(ErrorCode::item_mismatch, "matrices cover different items");
  if (human.size() != llm.size()) throw Error(ErrorCode::respondent_mismatch, "matrices have different respondent counts");
  const auto& scale = human.spec().scale();

  ConsistencyResult res;
  std::vector<long> item_matched(human.items().size(), 0);
  for (const auto& h : human.respondents()) {
    const auto* g = llm.find(h.id);
    if (!g) throw Error(ErrorCode::respondent_mismatch, "respondent '" + h.id + "' missing from generated matrix");
    for (std::size_t i = 0; i < human.items().size(); ++i) {
      const auto& item = human.items()[i];
      const bool same = bin_of(h.answers.at(item), scale) == bin_of(g->answers.at(item), scale);
      res.matched += same;
      item_matched[i] += same;
      ++res.cells;
    }
  }
  res.percentage = 100.0 * static_cast<double>(res.matched) / static_cast<double>(res.cells);
  for (std::size_t i = 0; i < human.items().size(); ++i) {
    res.per_item.emplace_back(human.items()[i],
                              100.0 * static_cast<double>(item_matched[i]) / static_cast<double>(human.size()));
  }
  return res;
}

inline double consistency(const ResponseMatrix& human, const ResponseMatrix& llm) {
  return consistency_detail(human, llm).percentage;
}

// ---------------------------------------------------------------------------
// Kernel density curves

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count < 2 || !(hi > lo)) throw Error(ErrorCode::invalid_argument, "linspace needs count >= 2 and hi > lo");
  std::vector<double> g(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) g[i] = lo + step * static_cast<double>(i);
  g.back() = hi;
  return g;
}

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5). Falls back to
/// the larger spread measure, then to half a scale step, when the sample is
/// too concentrated for the rule to give a positive width.
inline double silverman_bandwidth(std::span<const int> responses) {
  if (responses.empty()) throw Error(ErrorCode::empty_input, "bandwidth of an empty sample");
  const auto n = static_cast<double>(responses.size());
  std::vector<double> v(responses.begin(), responses.end());
  std::sort(v.begin(), v.end());
  double mean = 0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  auto quantile = [&](double q) {
    const double pos = q * (n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double iqr = (quantile(0.75) - quantile(0.25)) / 1.34;
  double spread = std::min(sd, iqr);
  if (!(spread > 0)) spread = std::max(sd, iqr);
  if (!(spread > 0)) return 0.5;
  return 0.9 * spread * std::pow(n, -0.2);
}

/// Gaussian kernel density estimate evaluated at each grid point.
inline std::vector<std::pair<double, double>> kde_curve(std::span<const int> responses, double bandwidth,
                                                        std::span<const double> grid) {
  if (responses.empty()) throw Error(ErrorCode::empty_input, "density of an empty sample");
  if (!(bandwidth > 0)) throw Error(ErrorCode::invalid_argument, "bandwidth must be positive");
  const double norm = 1.0 / (static_cast<double>(responses.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  std::vector<std::pair<double, double>> curve;
  curve.reserve(grid.size());
  for (double x : grid) {
    double s = 0;
    for (int r : responses) {
      const double u = (x - r) / bandwidth;
      s += std::exp(-0.5 * u * u);
    }
    curve.emplace_back(x, s * norm);
  }
  return curve;
}

/// Evaluation grid used for report curves: one step beyond each end of the
/// scale, 0.05 apart.
inline std::vector<double> report_grid(const LikertScale& scale) {
  const auto steps = static_cast<std::size_t>((scale.max - scale.min + 2) * 20);
  return linspace(scale.min - 1.0, scale.max + 1.0, steps + 1);
}

// ---------------------------------------------------------------------------
// Per-approach distribution comparison

struct ItemComparison {
  std::string item_id;
  double jsd = 0;
  double wasserstein = 0;
  LikertDistribution human;
  LikertDistribution generated;
  double human_bandwidth = 0;
  double generated_bandwidth = 0;
  std::vector<std::pair<double, double>> human_curve;
  std::vector<std::pair<double, double>> generated_curve;
};

/// Metrics for one approach. Means weight items equally.
struct DistributionReport {
  std::vector<ItemComparison> items;
  double mean_jsd = 0;
  double mean_wasserstein = 0;
  ConsistencyResult consistency;
};

struct CompareOptions {
  std::optional<double> bandwidth;  // default: Silverman per sample
  bool curves = true;
};

/// Compares two matrices already restricted to the same respondents and target
/// items.
inline DistributionReport compare(const ResponseMatrix& human, const ResponseMatrix& generated,
                                  const CompareOptions& options = {}) {
  DistributionReport rep;
  rep.consistency = consistency_detail(human, generated);
  const auto& scale = human.spec().scale();
  const auto grid = report_grid(scale);
  for (const auto& item : human.items()) {
    ItemComparison c;
    c.item_id = item;
    const auto h = human.column(item);
    const auto g = generated.column(item);
    c.human = likert_histogram(h, scale);
    c.generated = likert_histogram(g, scale);
    c.jsd = jensen_shannon(c.human, c.generated);
    c.wasserstein = wasserstein(c.human, c.generated);
    if (options.curves) {
      c.human_bandwidth = options.bandwidth.value_or(silverman_bandwidth(h));
      c.generated_bandwidth = options.bandwidth.value_or(silverman_bandwidth(g));
      c.human_curve = kde_curve(h, c.human_bandwidth, grid);
      c.generated_curve = kde_curve(g, c.generated_bandwidth, grid);
    }
    rep.mean_jsd += c.jsd;
    rep.mean_wasserstein += c.wasserstein;
    rep.items.push_back(std::move(c));
  }
  rep.mean_jsd /= static_cast<double>(rep.items.size());
  rep.mean_wasserstein /= static_cast<double>(rep.items.size());
  return rep;
}

}  // namespace mirror::metrics
