#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mirror/detail/csv.hpp"
#include "mirror/detail/format.hpp"
#include "mirror/detail/parallel.hpp"
#include "mirror/error.hpp"
#include "mirror/llm_client.hpp"
#include "mirror/metrics.hpp"
#include "mirror/persona.hpp"
#include "mirror/plssem.hpp"
#include "mirror/prompting.hpp"
#include "mirror/studies.hpp"
#include "mirror/survey.hpp"

namespace mirror {

using prompting::Approach;

// ---------------------------------------------------------------------------
// Configuration

enum class ReportFormat { markdown, csv, json };

inline std::string_view to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::markdown: return "markdown";
    case ReportFormat::csv: return "csv";
    case ReportFormat::json: return "json";
  }
  return "?";
}

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw Error(ErrorCode::invalid_argument, "unknown report format '" + std::string(s) + "'");
}

struct BackendConfig {
  std::string kind = "simulated";  // simulated | http
  RequestSettings request;
  // simulated
  double noise = 0.0;
  std::optional<std::uint64_t> seed;  // defaults to the study seed
  std::map<std::string, std::map<std::string, double>> rule;  // empty: plain average of prior factors
  // http
  std::string base_url = "https://api.openai.com/v1";
  int http_retries = 5;
  // shared
  std::optional<std::filesystem::path> cache_dir;
};

struct StudyConfig {
  std::string spec = "builtin:study1";
  std::filesystem::path responses;
  std::vector<std::string> targets;  // empty: the spec's outcome latents
  std::vector<Approach> approaches{prompting::kAllApproaches.begin(), prompting::kAllApproaches.end()};
  int bootstrap = 5000;
  std::uint64_t seed = 1;
  BackendConfig backend;
  std::filesystem::path out;
  std::optional<double> kde_bandwidth;
  unsigned workers = 8;            // requests in flight
  unsigned bootstrap_threads = 0;  // 0: hardware concurrency
  pls::PlsOptions pls;
  ReportFormat format = ReportFormat::markdown;
  std::optional<std::filesystem::path> templates_dir;

  void validate() const {
    if (bootstrap < 2) throw Error(ErrorCode::invalid_argument, "bootstrap B must be >= 2");
    if (approaches.empty()) throw Error(ErrorCode::invalid_argument, "no approaches selected");
    std::set<Approach> seen;
    for (auto a : approaches) {
      if (!seen.insert(a).second) throw Error(ErrorCode::invalid_argument, "approach listed twice");
    }
    if (workers == 0) throw Error(ErrorCode::invalid_argument, "workers must be >= 1");
    if (backend.kind != "simulated" && backend.kind != "http") {
      throw Error(ErrorCode::invalid_argument, "backend must be 'simulated' or 'http'");
    }
    if (kde_bandwidth && !(*kde_bandwidth > 0)) throw Error(ErrorCode::invalid_argument, "KDE bandwidth must be positive");
    backend.request.validate();
    pls.validate();
  }

  static StudyConfig from_json(const nlohmann::json& j) {
    StudyConfig c;
    try {
      for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> known{"spec",      "responses",     "targets", "approaches", "bootstrap",
                                                 "seed",      "backend",       "out",     "kde_bandwidth",
                                                 "workers",   "bootstrap_threads", "inner_scheme", "format",
                                                 "templates"};
        if (!known.count(it.key())) throw Error(ErrorCode::invalid_argument, "unknown config key '" + it.key() + "'");
      }
      if (j.contains("spec")) c.spec = j.at("spec").get<std::string>();
      if (j.contains("responses")) c.responses = j.at("responses").get<std::string>();
      if (j.contains("targets")) c.targets = j.at("targets").get<std::vector<std::string>>();
      if (j.contains("approaches")) {
        c.approaches.clear();
        for (const auto& a : j.at("approaches")) c.approaches.push_back(prompting::parse_approach(a.get<std::string>()));
      }
      if (j.contains("bootstrap")) c.bootstrap = j.at("bootstrap").get<int>();
      if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("out")) c.out = j.at("out").get<std::string>();
      if (j.contains("kde_bandwidth") && !j.at("kde_bandwidth").is_null()) c.kde_bandwidth = j.at("kde_bandwidth").get<double>();
      if (j.contains("workers")) c.workers = j.at("workers").get<unsigned>();
      if (j.contains("bootstrap_threads")) c.bootstrap_threads = j.at("bootstrap_threads").get<unsigned>();
      if (j.contains("inner_scheme")) c.pls.inner_scheme = pls::parse_inner_scheme(j.at("inner_scheme").get<std::string>());
      if (j.contains("format")) c.format = parse_report_format(j.at("format").get<std::string>());
      if (j.contains("templates")) c.templates_dir = j.at("templates").get<std::string>();
      if (j.contains("backend")) {
        const auto& b = j.at("backend");
        auto& be = c.backend;
        if (b.contains("kind")) be.kind = b.at("kind").get<std::string>();
        if (b.contains("model")) be.request.model = b.at("model").get<std::string>();
        if (b.contains("temperature")) be.request.temperature = b.at("temperature").get<double>();
        if (b.contains("max_tokens")) be.request.max_tokens = b.at("max_tokens").get<int>();
        if (b.contains("max_retries")) be.request.max_retries = b.at("max_retries").get<int>();
        if (b.contains("noise")) be.noise = b.at("noise").get<double>();
        if (b.contains("seed")) be.seed = b.at("seed").get<std::uint64_t>();
        if (b.contains("rule")) be.rule = b.at("rule").get<std::map<std::string, std::map<std::string, double>>>();
        if (b.contains("base_url")) be.base_url = b.at("base_url").get<std::string>();
        if (b.contains("http_retries")) be.http_retries = b.at("http_retries").get<int>();
        if (b.contains("cache_dir") && !b.at("cache_dir").is_null()) be.cache_dir = b.at("cache_dir").get<std::string>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("study config: ") + e.what());
    }
    return c;
  }
};

inline std::vector<std::string> resolve_targets(const SurveySpec& spec, const std::vector<std::string>& targets) {
  auto t = targets.empty() ? outcome_latents(spec) : targets;
  split_items(spec, t);  // validates
  return t;
}

/// Builds the configured backend, wrapped in the response cache when a cache
/// directory is set.
inline std::shared_ptr<llm::CompletionBackend> make_backend(const BackendConfig& config, const SurveySpec& spec,
                                                            const std::vector<std::string>& targets,
                                                            std::uint64_t study_seed) {
  std::shared_ptr<llm::CompletionBackend> backend;
  if (config.kind == "simulated") {
    llm::SimulatedRespondentConfig sim;
    sim.noise = config.noise;
    sim.seed = config.seed.value_or(study_seed);
    sim.rule = config.rule.empty() ? llm::SimulatedRespondentConfig::identity_rule(spec, targets) : config.rule;
    sim.validate(targets);
    backend = std::make_shared<llm::SimulatedBackend>(std::move(sim));
  } else if (config.kind == "http") {
    auto http = llm::HttpConfig::from_environment();
    http.base_url = config.base_url;
    http.max_retries = config.http_retries;
    backend = std::make_shared<llm::HttpBackend>(std::move(http));
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown backend '" + config.kind + "'");
  }
  if (config.cache_dir) backend = std::make_shared<llm::CachedBackend>(backend, *config.cache_dir);
  return backend;
}

// ---------------------------------------------------------------------------
// Generation

/// One persona per respondent, in respondent order.
inline std::vector<prompting::PersonaText> generate_personas(const ResponseMatrix& human,
                                                             const std::vector<std::string>& prior_items,
                                                             llm::CompletionBackend& backend,
                                                             const prompting::PromptTemplates& templates,
                                                             const RequestSettings& settings, unsigned workers) {
  std::vector<prompting::PersonaText> out(human.size());
  detail::parallel_for(human.size(), workers, [&](std::size_t r) {
    out[r] = generate_persona(human.respondents()[r], human.spec(), prior_items, backend, templates, settings);
  });
  return out;
}

struct GenerationResult {
  Approach approach = Approach::baseline;
  std::optional<ResponseMatrix> responses;  // target items only; absent when nobody succeeded
  std::vector<std::string> succeeded;
  std::vector<std::string> failed;          // replies never parsed
  std::map<std::string, std::string> failure_reasons;
  long attempts = 0;
};

/// Asks every respondent the target items under one approach. Respondents
/// whose replies never parse are left out and listed.
inline GenerationResult generate_responses(Approach approach, const ResponseMatrix& human,
                                           const std::vector<std::string>& target_items,
                                           llm::CompletionBackend& backend,
                                           const std::vector<prompting::PersonaText>* personas,
                                           const prompting::PromptTemplates& templates,
                                           const RequestSettings& settings, unsigned workers) {
  if (approach == Approach::mirror && (!personas || personas->size() != human.size())) {
    throw Error(ErrorCode::persona_required, "mirror generation needs one persona per respondent");
  }
  std::vector<AnswerOutcome> outcomes(human.size());
  detail::parallel_for(human.size(), workers, [&](std::size_t r) {
    const auto& resp = human.respondents()[r];
    std::optional<prompting::PersonaText> persona;
    if (approach == Approach::mirror) persona = (*personas)[r];
    const auto bundle = prompting::build_prompt(approach, resp, human.spec(), target_items, persona, templates);
    outcomes[r] = ask_likert(backend, bundle, settings, templates);
  });

  GenerationResult g;
  g.approach = approach;
  std::vector<Respondent> rows;
  for (std::size_t r = 0; r < human.size(); ++r) {
    const auto& resp = human.respondents()[r];
    g.attempts += outcomes[r].attempts;
    if (!outcomes[r].answers) {
      g.failed.push_back(resp.id);
      g.failure_reasons[resp.id] = std::string(to_string(*outcomes[r].last_error));
      continue;
    }
    Respondent row{resp.id, resp.demographics, {}};
    for (std::size_t i = 0; i < target_items.size(); ++i) row.answers[target_items[i]] = (*outcomes[r].answers)[i];
    rows.push_back(std::move(row));
    g.succeeded.push_back(resp.id);
  }
  if (!rows.empty()) g.responses.emplace(human.spec_ptr(), target_items, std::move(rows));
  return g;
}

/// Human rows with the target answers replaced by generated ones; only
/// respondents present in `generated`.
inline ResponseMatrix splice_generated(const ResponseMatrix& human, const ResponseMatrix& generated) {
  std::vector<Respondent> rows;
  rows.reserve(generated.size());
  for (const auto& g : generated.respondents()) {
    const auto* h = human.find(g.id);
    if (!h) throw Error(ErrorCode::respondent_mismatch, "generated respondent '" + g.id + "' has no human row");
    Respondent r = *h;
    for (const auto& [item, v] : g.answers) r.answers[item] = v;
    rows.push_back(std::move(r));
  }
  return ResponseMatrix(human.spec_ptr(), human.items(), std::move(rows));
}

// ---------------------------------------------------------------------------
// Reports

struct ApproachReport {
  Approach approach = Approach::baseline;
  std::optional<pls::PlsResult> fit;  // PLS on the generated matrix
  std::optional<std::string> fit_error;
  std::optional<metrics::DistributionReport> distribution;
  std::vector<std::string> failed_respondents;
  std::map<std::string, std::string> failure_reasons;
  std::size_t respondents = 0;  // respondents with usable replies
  bool degraded = false;        // more than 10% of respondents failed
};

struct HumanCurve {
  std::string item_id;
  double bandwidth = 0;
  std::vector<std::pair<double, double>> curve;
};

struct RunManifest {
  std::string study;
  std::uint64_t seed = 0;
  int bootstrap_samples = 0;
  std::vector<std::string> targets;
  std::vector<std::string> approaches;
  std::string template_version;
  std::string backend;
  std::string model;
  double temperature = 0;
  std::optional<std::size_t> cache_hits;
  std::optional<std::size_t> cache_misses;
  std::size_t personas_generated = 0;
  std::size_t human_respondents = 0;
};

struct ReportBundle {
  std::shared_ptr<const SurveySpec> spec;
  std::vector<std::string> targets;
  std::vector<std::string> target_items;
  std::shared_ptr<const pls::PlsResult> human_fit;
  std::vector<ApproachReport> approaches;
  std::vector<HumanCurve> human_curves;
  RunManifest manifest;
  std::map<Approach, GenerationResult> generated;
  std::vector<prompting::PersonaText> personas;
};

inline nlohmann::ordered_json manifest_json(const ReportBundle& b) {
  const auto& m = b.manifest;
  nlohmann::ordered_json j;
  j["study"] = m.study;
  j["seed"] = m.seed;
  j["bootstrap_samples"] = m.bootstrap_samples;
  j["targets"] = m.targets;
  j["approaches"] = m.approaches;
  j["template_version"] = m.template_version;
  j["backend"] = m.backend;
  j["model"] = m.model;
  j["temperature"] = m.temperature;
  j["cache"] = m.cache_hits ? nlohmann::ordered_json{{"hits", *m.cache_hits}, {"misses", *m.cache_misses}}
                            : nlohmann::ordered_json();
  j["personas_generated"] = m.personas_generated;
  j["human_respondents"] = m.human_respondents;
  j["results"] = nlohmann::ordered_json::object();
  for (const auto& a : b.approaches) {
    nlohmann::ordered_json r;
    r["respondents"] = a.respondents;
    r["failed_respondents"] = a.failed_respondents;
    r["failure_reasons"] = a.failure_reasons;
    r["degraded"] = a.degraded;
    r["fit_error"] = a.fit_error ? nlohmann::ordered_json(*a.fit_error) : nlohmann::ordered_json();
    j["results"][std::string(prompting::to_string(a.approach))] = r;
  }
  return j;
}

namespace detail {

inline void record_stage(nlohmann::ordered_json& progress, const std::string& stage) {
  progress["completed_stages"].push_back(stage);
}

}  // namespace detail

/// Runs the study against an already-loaded human matrix and a backend. On
/// any error a partial manifest is written to `config.out` (when set) and the
/// error is rethrown.
inline ReportBundle run_study(const StudyConfig& config, const ResponseMatrix& human,
                              llm::CompletionBackend& backend) {
  config.validate();
  nlohmann::ordered_json progress{{"study", human.spec().name()},
                                  {"seed", config.seed},
                                  {"completed_stages", nlohmann::ordered_json::array()}};
  try {
    const auto& spec = human.spec();
    const auto templates =
        config.templates_dir ? prompting::PromptTemplates::load(*config.templates_dir) : prompting::default_templates();

    ReportBundle b;
    b.spec = human.spec_ptr();
    b.targets = resolve_targets(spec, config.targets);
    const auto split = split_items(spec, b.targets);
    b.target_items = split.target;

    b.manifest.study = spec.name();
    b.manifest.seed = config.seed;
    b.manifest.bootstrap_samples = config.bootstrap;
    b.manifest.targets = b.targets;
    for (auto a : config.approaches) b.manifest.approaches.emplace_back(prompting::to_string(a));
    b.manifest.template_version = templates.version();
    b.manifest.backend = backend.identity();
    b.manifest.model = config.backend.request.model;
    b.manifest.temperature = config.backend.request.temperature;
    b.manifest.human_respondents = human.size();

    b.human_fit = std::make_shared<const pls::PlsResult>(
        pls::fit(human, config.pls, config.bootstrap, config.seed, config.bootstrap_threads));
    detail::record_stage(progress, "human_fit");

    const auto grid = metrics::report_grid(spec.scale());
    for (const auto& item : b.target_items) {
      const auto col = human.column(item);
      const double h = config.kde_bandwidth.value_or(metrics::silverman_bandwidth(col));
      b.human_curves.push_back({item, h, metrics::kde_curve(col, h, grid)});
    }

    const bool need_personas =
        std::find(config.approaches.begin(), config.approaches.end(), Approach::mirror) != config.approaches.end();
    if (need_personas) {
      b.personas =
          generate_personas(human, split.prior, backend, templates, config.backend.request, config.workers);
      b.manifest.personas_generated = b.personas.size();
      detail::record_stage(progress, "personas");
    }

    for (auto approach : config.approaches) {
      auto gen = generate_responses(approach, human, b.target_items, backend, need_personas ? &b.personas : nullptr,
                                    templates, config.backend.request, config.workers);
      detail::record_stage(progress, "generate:" + std::string(prompting::to_string(approach)));

      ApproachReport rep;
      rep.approach = approach;
      rep.failed_respondents = gen.failed;
      rep.failure_reasons = gen.failure_reasons;
      rep.respondents = gen.succeeded.size();
      rep.degraded = static_cast<double>(gen.failed.size()) > 0.10 * static_cast<double>(human.size());
      if (gen.responses) {
        const auto human_subset = human.select(gen.succeeded);
        metrics::CompareOptions opts;
        opts.bandwidth = config.kde_bandwidth;
        rep.distribution = metrics::compare(human_subset.restrict(b.target_items), *gen.responses, opts);
        try {
          rep.fit = pls::fit(splice_generated(human_subset, *gen.responses), config.pls, config.bootstrap, config.seed,
                             config.bootstrap_threads);
        } catch (const Error& e) {
          rep.fit_error = e.what();
        }
      } else {
        rep.fit_error = "no respondent produced a usable reply";
      }
      b.approaches.push_back(std::move(rep));
      b.generated.emplace(approach, std::move(gen));
      detail::record_stage(progress, "evaluate:" + std::string(prompting::to_string(approach)));
    }

    if (const auto* cached = dynamic_cast<const llm::CachedBackend*>(&backend)) {
      b.manifest.cache_hits = cached->hits();
      b.manifest.cache_misses = cached->misses();
    }
    return b;
  } catch (const std::exception& e) {
    if (!config.out.empty()) {
      progress["error"] = e.what();
      std::filesystem::create_directories(config.out);
      write_text_file(config.out / "manifest.partial.json", progress.dump(2) + "\n");
    }
    throw;
  }
}

/// Loads spec and human responses from the config, builds the backend, runs.
inline ReportBundle run_study(const StudyConfig& config) {
  config.validate();
  auto spec = resolve_study_spec(config.spec);
  if (config.responses.empty()) throw Error(ErrorCode::invalid_argument, "no human responses file configured");
  const auto human = load_responses(read_text_file(config.responses), spec);
  const auto targets = resolve_targets(*spec, config.targets);
  auto backend = make_backend(config.backend, *spec, targets, config.seed);
  return run_study(config, human, *backend);
}

// ---------------------------------------------------------------------------
// Emission

namespace detail {

inline std::string column_title(const ApproachReport& a) {
  return std::string(prompting::display_name(a.approach)) + (a.degraded ? " [degraded]" : "");
}

inline std::string md_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

inline std::string md_rule(std::size_t n) {
  std::string out = "|";
  for (std::size_t i = 0; i < n; ++i) out += " --- |";
  return out + "\n";
}

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;
};

inline std::string to_markdown(const Table& t) {
  std::string out = "# " + t.title + "\n\n" + md_row(t.header) + md_rule(t.header.size());
  for (const auto& r : t.rows) out += md_row(r);
  if (!t.notes.empty()) out += "\n";
  for (const auto& n : t.notes) out += n + "\n";
  return out;
}

inline std::string to_csv(const Table& t) {
  std::string out = csv_line(t.header);
  for (const auto& r : t.rows) out += csv_line(r);
  return out;
}

inline nlohmann::ordered_json to_json(const Table& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json row;
    for (std::size_t c = 0; c < t.header.size(); ++c) row[t.header[c]] = r[c];
    rows.push_back(row);
  }
  return {{"title", t.title}, {"columns", t.header}, {"rows", rows}, {"notes", t.notes}};
}

inline std::string pls_cell(const pls::PlsResult& r, std::size_t k) {
  return pls::format_cell(r.estimates.coefficients[k], r.bootstrap_sd[k], r.significance[k]);
}

}  // namespace detail

/// Path-coefficient table: one row per path, Human first then each approach.
inline detail::Table path_table(const ReportBundle& b) {
  detail::Table t;
  t.title = "Path coefficients (" + b.spec->name() + ")";
  t.header = {"Path", "Human"};
  for (const auto& a : b.approaches) t.header.push_back(detail::column_title(a));
  const auto& paths = b.human_fit->estimates.paths;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    std::vector<std::string> row{to_string(paths[k]), detail::pls_cell(*b.human_fit, k)};
    for (const auto& a : b.approaches) row.push_back(a.fit ? detail::pls_cell(*a.fit, k) : "n/a");
    t.rows.push_back(std::move(row));
  }
  for (std::size_t e = 0; e < b.human_fit->estimates.r_squared.size(); ++e) {
    const auto& [name, v] = b.human_fit->estimates.r_squared[e];
    std::vector<std::string> row{"R^2 " + name, ::mirror::detail::fixed(v)};
    for (const auto& a : b.approaches) row.push_back(a.fit ? ::mirror::detail::fixed(a.fit->estimates.r_squared[e].second) : "n/a");
    t.rows.push_back(std::move(row));
  }
  t.notes.emplace_back(pls::kSignificanceLegend);
  t.notes.push_back("Bootstrap samples: " + std::to_string(b.manifest.bootstrap_samples) +
                    "; seed: " + std::to_string(b.manifest.seed) + ".");
  for (const auto& a : b.approaches) {
    if (a.fit_error) t.notes.push_back(detail::column_title(a) + ": fit failed: " + *a.fit_error);
  }
  return t;
}

/// Per-item divergence table for one metric ("jsd" or "wasserstein").
inline detail::Table divergence_table(const ReportBundle& b, bool jsd) {
  detail::Table t;
  t.title = std::string(jsd ? "Jensen-Shannon divergence" : "Wasserstein distance") + " (" + b.spec->name() + ")";
  t.header = {"Item"};
  for (const auto& a : b.approaches) t.header.push_back(detail::column_title(a));
  for (std::size_t i = 0; i < b.target_items.size(); ++i) {
    std::vector<std::string> row{b.target_items[i]};
    for (const auto& a : b.approaches) {
      if (!a.distribution) {
        row.emplace_back("n/a");
        continue;
      }
      const auto& c = a.distribution->items[i];
      row.push_back(::mirror::detail::fixed(jsd ? c.jsd : c.wasserstein));
    }
    t.rows.push_back(std::move(row));
  }
  std::vector<std::string> mean{"Mean"};
  for (const auto& a : b.approaches) {
    mean.push_back(a.distribution ? ::mirror::detail::fixed(jsd ? a.distribution->mean_jsd : a.distribution->mean_wasserstein)
                                  : "n/a");
  }
  t.rows.push_back(std::move(mean));
  return t;
}

inline detail::Table consistency_table(const ReportBundle& b) {
  detail::Table t;
  t.title = "Response consistency, % same disagree/neutral/agree bin (" + b.spec->name() + ")";
  t.header = {"Item"};
  for (const auto& a : b.approaches) t.header.push_back(detail::column_title(a));
  for (std::size_t i = 0; i < b.target_items.size(); ++i) {
    std::vector<std::string> row{b.target_items[i]};
    for (const auto& a : b.approaches) {
      row.push_back(a.distribution ? ::mirror::detail::fixed(a.distribution->consistency.per_item[i].second, 2) : "n/a");
    }
    t.rows.push_back(std::move(row));
  }
  std::vector<std::string> overall{"Overall"};
  for (const auto& a : b.approaches) {
    overall.push_back(a.distribution ? ::mirror::detail::fixed(a.distribution->consistency.percentage, 2) : "n/a");
  }
  t.rows.push_back(std::move(overall));
  return t;
}

inline std::string curve_csv(const std::vector<std::pair<double, double>>& curve, double bandwidth) {
  std::string out = "# bandwidth=" + ::mirror::detail::fixed(bandwidth, 6) + "\nx,density\n";
  for (const auto& [x, d] : curve) out += ::mirror::detail::fixed(x, 2) + "," + ::mirror::detail::fixed(d, 8) + "\n";
  return out;
}

/// Writes the report tables in one format, KDE curve CSVs and manifest.json.
/// Returns the written paths in write order.
inline std::vector<std::filesystem::path> emit_report(const ReportBundle& b, ReportFormat format,
                                                      const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  std::vector<fs::path> written;
  auto put = [&](const fs::path& rel, const std::string& content) {
    const auto p = out / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text_file(p, content);
    written.push_back(p);
  };
  const std::vector<std::pair<std::string, detail::Table>> tables{{"path_coefficients", path_table(b)},
                                                                  {"jsd", divergence_table(b, true)},
                                                                  {"wasserstein", divergence_table(b, false)},
                                                                  {"consistency", consistency_table(b)}};
  for (const auto& [name, t] : tables) {
    switch (format) {
      case ReportFormat::markdown: put(name + ".md", detail::to_markdown(t)); break;
      case ReportFormat::csv: put(name + ".csv", detail::to_csv(t)); break;
      case ReportFormat::json: put(name + ".json", detail::to_json(t).dump(2) + "\n"); break;
    }
  }
  for (const auto& h : b.human_curves) put(fs::path("kde") / "human" / (h.item_id + ".csv"), curve_csv(h.curve, h.bandwidth));
  for (const auto& a : b.approaches) {
    if (!a.distribution) continue;
    for (const auto& c : a.distribution->items) {
      if (c.generated_curve.empty()) continue;
      put(fs::path("kde") / std::string(prompting::to_string(a.approach)) / (c.item_id + ".csv"),
          curve_csv(c.generated_curve, c.generated_bandwidth));
    }
  }
  put("manifest.json", manifest_json(b).dump(2) + "\n");
  return written;
}

}  // namespace mirror
