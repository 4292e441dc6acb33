#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mirror/error.hpp"
#include "mirror/survey.hpp"

namespace mirror {

/// Planted structural model for synthetic respondents.
struct SyntheticModel {
  std::map<std::string, double> betas;          // keyed "from -> to"; every spec path must be present
  double loading = 0.9;                         // default indicator loading
  std::map<std::string, double> item_loadings;  // per-item overrides
  double noise_sd = 0.6;                        // indicator measurement noise
  std::size_t respondents = 500;
  std::uint64_t seed = 1;

  double beta(const StructuralPath& p) const {
    auto it = betas.find(to_string(p));
    if (it == betas.end()) throw Error(ErrorCode::invalid_argument, "no planted coefficient for path " + to_string(p));
    return it->second;
  }

  double loading_of(const std::string& item) const {
    auto it = item_loadings.find(item);
    return it == item_loadings.end() ? loading : it->second;
  }
};

struct SyntheticStudy {
  Eigen::MatrixXd latents;     // rows x latents, declaration order
  Eigen::MatrixXd continuous;  // rows x items before discretization
  ResponseMatrix responses;
};

/// Maps a standardized indicator onto the Likert range: the midpoint plus
/// `x * (max - min) / 6`, rounded and clamped.
inline int discretize(double x, const LikertScale& scale) {
  const double v = scale.midpoint() + x * static_cast<double>(scale.max - scale.min) / 6.0;
  const double r = std::round(v);
  return static_cast<int>(std::clamp(r, static_cast<double>(scale.min), static_cast<double>(scale.max)));
}

/// Exogenous latents are independent standard normals. Each endogenous latent
/// is the planted combination of its predecessors plus a structural residual
/// sized so the latent keeps unit variance; indicators are loading * latent
/// plus Gaussian noise.
inline SyntheticStudy generate_synthetic_study(std::shared_ptr<const SurveySpec> spec, const SyntheticModel& model) {
  if (!spec) throw Error(ErrorCode::invalid_argument, "synthetic study needs a spec");
  if (model.respondents < 2) throw Error(ErrorCode::invalid_argument, "synthetic study needs at least two respondents");
  if (!(model.noise_sd >= 0)) throw Error(ErrorCode::invalid_argument, "noise sd must be >= 0");
  for (const auto& [key, b] : model.betas) {
    bool known = false;
    for (const auto& p : spec->paths()) known = known || to_string(p) == key;
    if (!known) throw Error(ErrorCode::invalid_argument, "planted coefficient for unknown path " + key);
    if (!std::isfinite(b)) throw Error(ErrorCode::invalid_argument, "non-finite coefficient for " + key);
  }
  const auto n_lat = static_cast<Eigen::Index>(spec->latents().size());
  const auto order = spec->topological_order();

  // Model-implied latent covariance, filled in topological order.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n_lat, n_lat);
  std::vector<std::vector<std::pair<Eigen::Index, double>>> preds(static_cast<std::size_t>(n_lat));
  std::vector<double> residual_sd(static_cast<std::size_t>(n_lat), 1.0);
  for (auto l : order) {
    const auto li = static_cast<Eigen::Index>(l);
    for (const auto& p : spec->paths()) {
      if (p.to == spec->latents()[l].name) {
        preds[l].emplace_back(static_cast<Eigen::Index>(spec->latent_index(p.from)), model.beta(p));
      }
    }
    if (preds[l].empty()) {
      cov(li, li) = 1.0;
      continue;
    }
    for (Eigen::Index k = 0; k < n_lat; ++k) {
      if (k == li) continue;
      double c = 0;
      for (const auto& [j, b] : preds[l]) c += b * cov(j, k);
      cov(li, k) = cov(k, li) = c;
    }
    double explained = 0;
    for (const auto& [j, bj] : preds[l]) {
      for (const auto& [k, bk] : preds[l]) explained += bj * bk * cov(j, k);
    }
    const double psi = 1.0 - explained;
    if (psi < -1e-12) {
      throw Error(ErrorCode::invalid_argument, "planted coefficients into '" + spec->latents()[l].name +
                                                   "' explain more than unit variance (residual variance " +
                                                   std::to_string(psi) + ")");
    }
    residual_sd[l] = std::sqrt(std::max(0.0, psi));
    cov(li, li) = 1.0;
  }

  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(model.respondents);
  const auto& items = spec->item_ids();
  const auto& scale = spec->scale();

  Eigen::MatrixXd eta(n, n_lat);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(items.size()));
  std::vector<Respondent> rows;
  rows.reserve(model.respondents);
  const auto width = std::to_string(model.respondents).size();

  for (Eigen::Index r = 0; r < n; ++r) {
    for (auto l : order) {
      double v = 0;
      for (const auto& [j, b] : preds[l]) v += b * eta(r, j);
      v += residual_sd[l] * normal(rng);
      eta(r, static_cast<Eigen::Index>(l)) = v;
    }
    Respondent resp;
    auto id = std::to_string(r + 1);
    resp.id = "R" + std::string(width - id.size(), '0') + id;
    for (std::size_t c = 0; c < items.size(); ++c) {
      const auto lat = static_cast<Eigen::Index>(spec->latent_index(spec->latent_of(items[c]).name));
      const double value = model.loading_of(items[c]) * eta(r, lat) + model.noise_sd * normal(rng);
      x(r, static_cast<Eigen::Index>(c)) = value;
      resp.answers[items[c]] = discretize(value, scale);
    }
    for (const auto& d : spec->demographics()) {
      if (d.kind == DemographicKind::numeric) {
        std::uniform_int_distribution<int> age(18, 75);
        resp.demographics[d.name] = std::to_string(age(rng));
      } else if (!d.values.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, d.values.size() - 1);
        resp.demographics[d.name] = d.values[pick(rng)];
      }
    }
    rows.push_back(std::move(resp));
  }
  return {std::move(eta), std::move(x), ResponseMatrix(spec, items, std::move(rows))};
}

/// Continuous indicators as a CSV in the response layout (demographics omitted).
inline std::string write_indicator_csv(const SyntheticStudy& study) {
  const auto& items = study.responses.items();
  std::vector<std::string> header{"respondent_id"};
  header.insert(header.end(), items.begin(), items.end());
  std::string out = detail::csv_line(header);
  char buf[64];
  for (std::size_t r = 0; r < study.responses.size(); ++r) {
    std::vector<std::string> cells{study.responses.respondents()[r].id};
    for (Eigen::Index c = 0; c < study.continuous.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", study.continuous(static_cast<Eigen::Index>(r), c));
      cells.emplace_back(buf);
    }
    out += detail::csv_line(cells);
  }
  return out;
}

}  // namespace mirror
