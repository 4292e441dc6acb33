#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mirror/detail/format.hpp"
#include "mirror/detail/hash.hpp"
#include "mirror/detail/parallel.hpp"
#include "mirror/error.hpp"
#include "mirror/survey.hpp"

// Partial least squares path modeling: iterative outer/inner estimation of
// latent scores (mode A outer weights), OLS structural paths, and a seeded
// nonparametric bootstrap for path-coefficient standard deviations.
namespace mirror::pls {

enum class InnerScheme { centroid, factorial, path };
enum class Denominator { n, n_minus_1 };

inline std::string_view to_string(InnerScheme s) {
  switch (s) {
    case InnerScheme::centroid: return "centroid";
    case InnerScheme::factorial: return "factorial";
    case InnerScheme::path: return "path";
  }
  return "?";
}

inline InnerScheme parse_inner_scheme(std::string_view s) {
  if (s == "centroid") return InnerScheme::centroid;
  if (s == "factorial") return InnerScheme::factorial;
  if (s == "path") return InnerScheme::path;
  throw Error(ErrorCode::invalid_argument, "unknown inner weighting scheme '" + std::string(s) + "'");
}

struct PlsOptions {
  InnerScheme inner_scheme = InnerScheme::centroid;
  int max_iterations = 100;
  double tolerance = 1e-6;
  Denominator denominator = Denominator::n_minus_1;

  void validate() const {
    if (max_iterations < 1) throw Error(ErrorCode::invalid_argument, "max_iterations must be >= 1");
    if (!(tolerance > 0)) throw Error(ErrorCode::invalid_argument, "tolerance must be > 0");
  }
};

namespace detail {

inline double divisor(Denominator d, Eigen::Index n) {
  return d == Denominator::n ? static_cast<double>(n) : static_cast<double>(n - 1);
}

inline double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Solve G b = r for a symmetric positive (semi)definite Gram matrix. Returns
// nullopt when G is numerically singular.
inline std::optional<Eigen::VectorXd> solve_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) {
  if (gram.rows() == 1) {
    if (!(gram(0, 0) > 0)) return std::nullopt;
    return Eigen::VectorXd::Constant(1, rhs(0) / gram(0, 0));
  }
  const Eigen::VectorXd diag = gram.diagonal();
  if ((diag.array() <= 0).any()) return std::nullopt;
  const Eigen::VectorXd inv_sd = diag.array().rsqrt();
  const Eigen::MatrixXd corr = inv_sd.asDiagonal() * gram * inv_sd.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < 1e-10 * eig.eigenvalues().maxCoeff()) return std::nullopt;
  return Eigen::VectorXd(gram.ldlt().solve(rhs));
}

}  // namespace detail

/// Column-wise z-scores. Rejects fewer than two rows and constant columns.
inline Eigen::MatrixXd standardize(const Eigen::MatrixXd& columns, Denominator denominator,
                                   const std::vector<std::string>& names = {}) {
  const auto n = columns.rows();
  if (n < 2) throw Error(ErrorCode::invalid_argument, "standardize needs at least two rows");
  Eigen::MatrixXd z = columns.rowwise() - columns.colwise().mean();
  const double dn = detail::divisor(denominator, n);
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double sd = std::sqrt(z.col(c).squaredNorm() / dn);
    const double ref = std::max(1.0, columns.col(c).cwiseAbs().maxCoeff());
    if (!(sd > 1e-12 * ref)) {
      const auto label = static_cast<std::size_t>(c) < names.size() ? "'" + names[static_cast<std::size_t>(c)] + "'"
                                                                     : "#" + std::to_string(c);
      throw Error(ErrorCode::zero_variance, "column " + label + " has zero variance");
    }
    z.col(c) /= sd;
  }
  return z;
}

struct LatentScores {
  std::vector<std::string> latent_names;
  Eigen::MatrixXd scores;                      // respondents x latents, standardized
  std::vector<Eigen::VectorXd> outer_weights;  // per latent, on standardized indicators
  std::vector<Eigen::VectorXd> loadings;       // indicator-score correlations
  bool converged = false;
  int iterations = 0;
  Denominator denominator = Denominator::n_minus_1;
};

/// Latent scores from indicator columns given in the spec's canonical item
/// order. Blocks are reflective (mode A); the inner proxy follows
/// options.inner_scheme over the undirected path graph.
inline LatentScores estimate_scores(const Eigen::MatrixXd& indicators, const SurveySpec& spec,
                                    const PlsOptions& options) {
  options.validate();
  const auto n_latent = spec.latents().size();
  if (static_cast<std::size_t>(indicators.cols()) != spec.item_ids().size()) {
    throw Error(ErrorCode::invalid_argument, "indicator matrix has " + std::to_string(indicators.cols()) +
                                                 " columns, spec declares " + std::to_string(spec.item_ids().size()));
  }

  Eigen::MatrixXi adjacency = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n_latent), static_cast<Eigen::Index>(n_latent));
  for (const auto& p : spec.paths()) {
    const auto a = static_cast<Eigen::Index>(spec.latent_index(p.from));
    const auto b = static_cast<Eigen::Index>(spec.latent_index(p.to));
    adjacency(a, b) = adjacency(b, a) = 1;
  }
  for (std::size_t l = 0; l < n_latent; ++l) {
    if (adjacency.row(static_cast<Eigen::Index>(l)).sum() == 0) {
      throw Error(ErrorCode::invalid_spec, "latent '" + spec.latents()[l].name + "' is not connected to any path");
    }
  }

  const Eigen::MatrixXd x = standardize(indicators, options.denominator, spec.item_ids());
  const auto n = x.rows();
  const double dn = detail::divisor(options.denominator, n);

  auto block = [&](std::size_t l) {
    const auto& cols = spec.block_columns(l);
    return x.middleCols(static_cast<Eigen::Index>(cols.front()), static_cast<Eigen::Index>(cols.size()));
  };
  // Rescale weights so the block composite has unit variance.
  auto normalize = [&](std::size_t l, Eigen::VectorXd w) {
    const double sd = std::sqrt((block(l) * w).squaredNorm() / dn);
    if (!(sd > 1e-10 * std::max(1.0, w.cwiseAbs().maxCoeff()))) {
      throw Error(ErrorCode::degenerate_block, "block '" + spec.latents()[l].name + "' produced a constant composite");
    }
    return Eigen::VectorXd(w / sd);
  };

  std::vector<Eigen::VectorXd> weights(n_latent);
  for (std::size_t l = 0; l < n_latent; ++l) {
    weights[l] = normalize(l, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(spec.block_columns(l).size())));
  }

  Eigen::MatrixXd y(n, static_cast<Eigen::Index>(n_latent));
  auto compute_scores = [&] {
    for (std::size_t l = 0; l < n_latent; ++l) y.col(static_cast<Eigen::Index>(l)) = block(l) * weights[l];
  };

  LatentScores out;
  out.denominator = options.denominator;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    compute_scores();
    const Eigen::MatrixXd corr = (y.transpose() * y) / dn;

    // inner(i, j): weight of score i in the inner proxy of latent j.
    Eigen::MatrixXd inner = Eigen::MatrixXd::Zero(y.cols(), y.cols());
    switch (options.inner_scheme) {
      case InnerScheme::centroid:
        for (Eigen::Index i = 0; i < inner.rows(); ++i)
          for (Eigen::Index j = 0; j < inner.cols(); ++j)
            if (adjacency(i, j)) inner(i, j) = detail::sign(corr(i, j));
        break;
      case InnerScheme::factorial:
        for (Eigen::Index i = 0; i < inner.rows(); ++i)
          for (Eigen::Index j = 0; j < inner.cols(); ++j)
            if (adjacency(i, j)) inner(i, j) = corr(i, j);
        break;
      case InnerScheme::path:
        for (std::size_t j = 0; j < n_latent; ++j) {
          const auto& preds = spec.predecessors(j);
          if (!preds.empty()) {
            Eigen::MatrixXd gram(static_cast<Eigen::Index>(preds.size()), static_cast<Eigen::Index>(preds.size()));
            Eigen::VectorXd rhs(static_cast<Eigen::Index>(preds.size()));
            for (std::size_t a = 0; a < preds.size(); ++a) {
              rhs(static_cast<Eigen::Index>(a)) = corr(static_cast<Eigen::Index>(preds[a]), static_cast<Eigen::Index>(j));
              for (std::size_t b = 0; b < preds.size(); ++b)
                gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                    corr(static_cast<Eigen::Index>(preds[a]), static_cast<Eigen::Index>(preds[b]));
            }
            auto beta = detail::solve_gram(gram, rhs);
            if (!beta) throw Error(ErrorCode::singular_predictors, "collinear predecessors of '" + spec.latents()[j].name + "'");
            for (std::size_t a = 0; a < preds.size(); ++a)
              inner(static_cast<Eigen::Index>(preds[a]), static_cast<Eigen::Index>(j)) = (*beta)(static_cast<Eigen::Index>(a));
          }
        }
        for (const auto& p : spec.paths()) {
          const auto from = static_cast<Eigen::Index>(spec.latent_index(p.from));
          const auto to = static_cast<Eigen::Index>(spec.latent_index(p.to));
          inner(to, from) = corr(from, to);  // followers enter with their correlation
        }
        break;
    }

    const Eigen::MatrixXd proxy = y * inner;
    double max_change = 0;
    std::vector<Eigen::VectorXd> next(n_latent);
    for (std::size_t l = 0; l < n_latent; ++l) {
      const auto col = proxy.col(static_cast<Eigen::Index>(l));
      if (!(col.squaredNorm() > 0)) {
        throw Error(ErrorCode::degenerate_block, "inner proxy of '" + spec.latents()[l].name + "' vanished");
      }
      next[l] = normalize(l, block(l).transpose() * col / dn);
      max_change = std::max(max_change, (next[l] - weights[l]).cwiseAbs().maxCoeff());
    }
    weights = std::move(next);
    out.iterations = iter;
    if (max_change < options.tolerance) {
      out.converged = true;
      break;
    }
  }
  compute_scores();

  out.loadings.resize(n_latent);
  for (std::size_t l = 0; l < n_latent; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    Eigen::VectorXd loading = block(l).transpose() * y.col(li) / dn;
    Eigen::Index dominant = 0;
    loading.cwiseAbs().maxCoeff(&dominant);
    if (loading(dominant) < 0) {
      weights[l] = -weights[l];
      y.col(li) = -y.col(li);
      loading = -loading;
    }
    out.loadings[l] = std::move(loading);
    out.latent_names.push_back(spec.latents()[l].name);
  }
  out.scores = std::move(y);
  out.outer_weights = std::move(weights);
  return out;
}

inline LatentScores estimate_scores(const ResponseMatrix& data, const PlsOptions& options) {
  return estimate_scores(data.values(data.spec().item_ids()), data.spec(), options);
}

struct PathEstimates {
  std::vector<StructuralPath> paths;
  std::vector<double> coefficients;  // aligned with paths
  std::vector<std::pair<std::string, double>> r_squared;  // endogenous latents, declaration order

  double coefficient(std::string_view from, std::string_view to) const {
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (paths[i].from == from && paths[i].to == to) return coefficients[i];
    }
    throw Error(ErrorCode::unknown_latent, "no path " + std::string(from) + " -> " + std::string(to));
  }
};

/// OLS of each endogenous score column on its structural predecessors.
inline PathEstimates path_coefficients(const LatentScores& scores, const SurveySpec& spec,
                                       bool accept_unconverged = false) {
  if (!scores.converged && !accept_unconverged) {
    throw Error(ErrorCode::not_converged, "latent scores did not converge after " +
                                              std::to_string(scores.iterations) + " iterations");
  }
  if (static_cast<std::size_t>(scores.scores.cols()) != spec.latents().size()) {
    throw Error(ErrorCode::invalid_argument, "score matrix does not match the spec's latents");
  }
  const Eigen::MatrixXd centered = scores.scores.rowwise() - scores.scores.colwise().mean();

  PathEstimates est;
  est.paths = spec.paths();
  est.coefficients.assign(est.paths.size(), 0.0);
  for (std::size_t j = 0; j < spec.latents().size(); ++j) {
    const auto& preds = spec.predecessors(j);
    if (preds.empty()) continue;
    Eigen::MatrixXd p(centered.rows(), static_cast<Eigen::Index>(preds.size()));
    for (std::size_t a = 0; a < preds.size(); ++a) p.col(static_cast<Eigen::Index>(a)) = centered.col(static_cast<Eigen::Index>(preds[a]));
    const Eigen::VectorXd target = centered.col(static_cast<Eigen::Index>(j));
    auto beta = detail::solve_gram(p.transpose() * p, p.transpose() * target);
    if (!beta) {
      throw Error(ErrorCode::singular_predictors, "predecessor scores of '" + spec.latents()[j].name + "' are collinear");
    }
    for (std::size_t a = 0; a < preds.size(); ++a) {
      for (std::size_t k = 0; k < est.paths.size(); ++k) {
        if (spec.latent_index(est.paths[k].from) == preds[a] && spec.latent_index(est.paths[k].to) == j) {
          est.coefficients[k] = (*beta)(static_cast<Eigen::Index>(a));
        }
      }
    }
    const double sst = target.squaredNorm();
    const double sse = (target - p * *beta).squaredNorm();
    const double r2 = sst > 0 ? 1.0 - sse / sst : 0.0;
    est.r_squared.emplace_back(spec.latents()[j].name, std::clamp(r2, 0.0, 1.0));
  }
  return est;
}

enum class Significance { none, p05, p01, p001 };

inline std::string_view mark(Significance s) {
  switch (s) {
    case Significance::none: return "";
    case Significance::p05: return "*";
    case Significance::p01: return "**";
    case Significance::p001: return "***";
  }
  return "";
}

/// Two-sided normal-approximation p-value ladder on z = coefficient / sd.
inline Significance significance(double coefficient, double sd) {
  double z = 0;
  if (sd > 0) {
    z = coefficient / sd;
  } else if (coefficient != 0) {
    z = std::numeric_limits<double>::infinity();
  }
  const double p = std::erfc(std::abs(z) / std::sqrt(2.0));
  if (p < 0.001) return Significance::p001;
  if (p < 0.01) return Significance::p01;
  if (p < 0.05) return Significance::p05;
  return Significance::none;
}

struct PlsResult {
  PathEstimates estimates;
  std::vector<double> bootstrap_sd;          // aligned with estimates.paths
  std::vector<Significance> significance;    // aligned with estimates.paths
  int bootstrap_samples = 0;
  std::uint64_t seed = 0;
  int failed_replicates = 0;
  bool converged = false;
  int iterations = 0;
  std::size_t respondents = 0;
};

/// Replicate b resamples rows with a generator seeded only by (seed, b), so
/// results do not depend on how replicates are scheduled across threads.
inline std::vector<Eigen::Index> resample_indices(Eigen::Index n, std::uint64_t seed, std::uint64_t replicate) {
  std::mt19937_64 rng(::mirror::detail::stream_seed(seed, replicate));
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

/// Full-sample estimate plus B bootstrap replicates. Each replicate's latent
/// orientation is aligned to the full-sample outer weights before its path
/// coefficients are recorded. Failed replicates are skipped; more than 5%
/// failures is an error.
inline PlsResult bootstrap(const Eigen::MatrixXd& indicators, const SurveySpec& spec, const PlsOptions& options,
                           int samples, std::uint64_t seed, unsigned threads = 0) {
  if (samples < 2) throw Error(ErrorCode::invalid_argument, "bootstrap needs B >= 2");
  const auto full_scores = estimate_scores(indicators, spec, options);

  PlsResult result;
  result.estimates = path_coefficients(full_scores, spec, /*accept_unconverged=*/true);
  result.bootstrap_samples = samples;
  result.seed = seed;
  result.converged = full_scores.converged;
  result.iterations = full_scores.iterations;
  result.respondents = static_cast<std::size_t>(indicators.rows());

  const auto n = indicators.rows();
  const auto n_paths = result.estimates.paths.size();
  std::vector<std::optional<std::vector<double>>> replicates(static_cast<std::size_t>(samples));

  ::mirror::detail::parallel_for(static_cast<std::size_t>(samples), threads, [&](std::size_t b) {
    const auto idx = resample_indices(n, seed, b);
    Eigen::MatrixXd resampled(n, indicators.cols());
    for (Eigen::Index r = 0; r < n; ++r) resampled.row(r) = indicators.row(idx[static_cast<std::size_t>(r)]);
    try {
      auto rep = estimate_scores(resampled, spec, options);
      for (std::size_t l = 0; l < rep.outer_weights.size(); ++l) {
        if (rep.outer_weights[l].dot(full_scores.outer_weights[l]) < 0) {
          rep.outer_weights[l] = -rep.outer_weights[l];
          rep.scores.col(static_cast<Eigen::Index>(l)) *= -1.0;
        }
      }
      replicates[b] = path_coefficients(rep, spec, /*accept_unconverged=*/true).coefficients;
    } catch (const Error&) {
      // counted below
    }
  });

  std::size_t ok = 0;
  for (const auto& r : replicates) ok += r.has_value();
  result.failed_replicates = samples - static_cast<int>(ok);
  if (static_cast<double>(result.failed_replicates) > 0.05 * samples) {
    throw Error(ErrorCode::bootstrap_failures, std::to_string(result.failed_replicates) + " of " +
                                                   std::to_string(samples) + " bootstrap replicates failed");
  }
  if (ok < 2) throw Error(ErrorCode::bootstrap_failures, "fewer than two successful bootstrap replicates");

  result.bootstrap_sd.assign(n_paths, 0.0);
  result.significance.assign(n_paths, Significance::none);
  for (std::size_t k = 0; k < n_paths; ++k) {
    double sum = 0;
    for (const auto& r : replicates)
      if (r) sum += (*r)[k];
    const double mean = sum / static_cast<double>(ok);
    double ss = 0;
    for (const auto& r : replicates)
      if (r) ss += ((*r)[k] - mean) * ((*r)[k] - mean);
    result.bootstrap_sd[k] = std::sqrt(ss / static_cast<double>(ok - 1));
    result.significance[k] = significance(result.estimates.coefficients[k], result.bootstrap_sd[k]);
  }
  return result;
}

inline PlsResult fit(const Eigen::MatrixXd& indicators, const SurveySpec& spec, const PlsOptions& options,
                     int samples, std::uint64_t seed, unsigned threads = 0) {
  return bootstrap(indicators, spec, options, samples, seed, threads);
}

inline PlsResult fit(const ResponseMatrix& data, const PlsOptions& options, int samples, std::uint64_t seed,
                     unsigned threads = 0) {
  return bootstrap(data.values(data.spec().item_ids()), data.spec(), options, samples, seed, threads);
}

// ---------------------------------------------------------------------------
// Rendering

/// "0.3359*** (0.0272)"
inline std::string format_cell(double coefficient, double sd, Significance s) {
  return ::mirror::detail::fixed(coefficient) + std::string(mark(s)) + " (" + ::mirror::detail::fixed(sd) + ")";
}

inline constexpr std::string_view kSignificanceLegend =
    "* p < 0.05; ** p < 0.01; *** p < 0.001 (two-sided, normal approximation on bootstrap z). "
    "Standard deviation in parentheses.";

inline nlohmann::ordered_json to_json(const PlsResult& r) {
  nlohmann::ordered_json j;
  j["paths"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < r.estimates.paths.size(); ++k) {
    j["paths"].push_back({{"from", r.estimates.paths[k].from},
                          {"to", r.estimates.paths[k].to},
                          {"coefficient", r.estimates.coefficients[k]},
                          {"sd", r.bootstrap_sd[k]},
                          {"mark", std::string(mark(r.significance[k]))}});
  }
  j["r_squared"] = nlohmann::ordered_json::object();
  for (const auto& [name, v] : r.estimates.r_squared) j["r_squared"][name] = v;
  j["bootstrap_samples"] = r.bootstrap_samples;
  j["seed"] = r.seed;
  j["failed_replicates"] = r.failed_replicates;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["respondents"] = r.respondents;
  j["significance_legend"] = kSignificanceLegend;
  return j;
}

/// Plain-text table: one row per path, SD in parentheses on the line beneath.
inline std::string render_text_table(const PlsResult& r) {
  std::size_t width = 4;
  for (const auto& p : r.estimates.paths) width = std::max(width, to_string(p).size());
  std::string out = "Path" + std::string(width - 4 + 2, ' ') + "Coefficient\n";
  for (std::size_t k = 0; k < r.estimates.paths.size(); ++k) {
    const auto label = to_string(r.estimates.paths[k]);
    out += label + std::string(width - label.size() + 2, ' ') + ::mirror::detail::fixed(r.estimates.coefficients[k]) +
           std::string(mark(r.significance[k])) + "\n";
    out += std::string(width + 2, ' ') + "(" + ::mirror::detail::fixed(r.bootstrap_sd[k]) + ")\n";
  }
  for (const auto& [name, v] : r.estimates.r_squared) out += "R^2 " + name + ": " + ::mirror::detail::fixed(v) + "\n";
  out += "B = " + std::to_string(r.bootstrap_samples) + ", seed = " + std::to_string(r.seed) +
         ", failed replicates = " + std::to_string(r.failed_replicates) + (r.converged ? "" : ", NOT CONVERGED") + "\n";
  out += std::string(kSignificanceLegend) + "\n";
  return out;
}

}  // namespace mirror::pls
