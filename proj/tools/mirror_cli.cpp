// llm-mirror: survey pre-testing from the command line.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mirror/mirror.hpp"

namespace fs = std::filesystem;
using namespace mirror;

namespace {

struct BackendFlags {
  std::string kind = "simulated";
  std::string model = "gpt-4o";
  double temperature = 0.0;
  int max_tokens = 512;
  double noise = 0.0;
  std::string base_url = "https://api.openai.com/v1";
  std::string cache;
  std::string rule;  // JSON file: target latent -> {prior latent: weight}
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
  cmd->add_option("--backend", f.kind, "Completion backend")->check(CLI::IsMember({"http", "simulated"}));
  cmd->add_option("--model", f.model, "Model identifier sent to the endpoint");
  cmd->add_option("--temperature", f.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-tokens", f.max_tokens, "Maximum reply length")->check(CLI::PositiveNumber);
  cmd->add_option("--noise", f.noise, "Simulated respondent noise sd")->check(CLI::NonNegativeNumber);
  cmd->add_option("--base-url", f.base_url, "Chat-completion base URL (LLM_API_KEY holds the credential)");
  cmd->add_option("--cache", f.cache, "Response cache directory");
  cmd->add_option("--rule", f.rule, "Simulated answer rule (JSON file)");
}

BackendConfig to_backend_config(const BackendFlags& f) {
  BackendConfig c;
  c.kind = f.kind;
  c.request.model = f.model;
  c.request.temperature = f.temperature;
  c.request.max_tokens = f.max_tokens;
  c.noise = f.noise;
  c.base_url = f.base_url;
  if (!f.cache.empty()) c.cache_dir = f.cache;
  if (!f.rule.empty()) {
    c.rule = nlohmann::json::parse(read_text_file(f.rule)).get<std::map<std::string, std::map<std::string, double>>>();
  }
  return c;
}

std::vector<Approach> parse_approaches(const std::vector<std::string>& names) {
  std::vector<Approach> out;
  for (const auto& n : names) {
    if (n == "all") return {prompting::kAllApproaches.begin(), prompting::kAllApproaches.end()};
    out.push_back(prompting::parse_approach(n));
  }
  return out;
}

void write_or_print(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::cout << content;
  } else {
    write_text_file(out, content);
    std::cerr << "wrote " << out << "\n";
  }
}

std::pair<std::string, double> parse_beta(const std::string& text) {
  const auto eq = text.rfind('=');
  const auto arrow = text.find("->");
  if (eq == std::string::npos || arrow == std::string::npos || arrow > eq) {
    throw Error(ErrorCode::invalid_argument, "expected FROM->TO=VALUE, got '" + text + "'");
  }
  auto from = std::string(detail::trim(std::string_view(text).substr(0, arrow)));
  auto to = std::string(detail::trim(std::string_view(text).substr(arrow + 2, eq - arrow - 2)));
  auto v = parse_number(std::string_view(text).substr(eq + 1));
  if (!v) throw Error(ErrorCode::invalid_argument, "bad coefficient in '" + text + "'");
  return {from + " -> " + to, *v};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survey pre-testing with LLM-simulated respondents"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "llm-mirror 0.1.0");

  std::string spec_ref = "builtin:study1";
  std::string responses;
  std::string continuous;
  std::vector<std::string> targets;
  std::vector<std::string> approaches{"all"};
  int bootstrap = 5000;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "markdown";
  unsigned threads = 0;
  unsigned workers = 8;
  std::string inner = "centroid";
  BackendFlags backend;

  // fit
  auto* fit = app.add_subcommand("fit", "PLS-SEM path coefficients with bootstrap standard deviations");
  fit->add_option("--spec", spec_ref, "Study spec: builtin:<name> or a JSON path");
  auto* fit_resp = fit->add_option("--responses", responses, "Likert response CSV");
  fit->add_option("--continuous", continuous, "Real-valued indicator CSV")->excludes(fit_resp);
  fit->add_option("--bootstrap", bootstrap, "Bootstrap samples")->check(CLI::Range(2, 1'000'000));
  fit->add_option("--seed", seed, "Bootstrap seed");
  fit->add_option("--threads", threads, "Bootstrap worker threads (0: all cores)");
  fit->add_option("--inner-scheme", inner, "Inner weighting")->check(CLI::IsMember({"centroid", "factorial", "path"}));
  fit->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
  fit->add_option("--out", out, "Output file (default stdout)");

  // generate
  auto* gen = app.add_subcommand("generate", "Collect LLM answers to the target items");
  gen->add_option("--spec", spec_ref, "Study spec");
  gen->add_option("--responses", responses, "Human response CSV")->required();
  gen->add_option("--targets", targets, "Target latents (default: outcome latents)");
  gen->add_option("--approach", approaches, "baseline, demo, omni, mirror or all");
  gen->add_option("--seed", seed, "Seed for the simulated backend");
  gen->add_option("--workers", workers, "Requests in flight")->check(CLI::PositiveNumber);
  gen->add_option("--out", out, "Output directory")->required();
  add_backend_flags(gen, backend);

  // metrics
  std::string generated;
  auto* met = app.add_subcommand("metrics", "Compare generated against human responses");
  met->add_option("--spec", spec_ref, "Study spec");
  met->add_option("--responses", responses, "Human response CSV")->required();
  met->add_option("--generated", generated, "Generated response CSV (same layout)")->required();
  met->add_option("--targets", targets, "Target latents (default: outcome latents)");
  met->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
  met->add_option("--out", out, "Output file (default stdout)");

  // persona
  std::string respondent_id;
  auto* per = app.add_subcommand("persona", "Generate and inspect personas");
  per->add_option("--spec", spec_ref, "Study spec");
  per->add_option("--responses", responses, "Human response CSV")->required();
  per->add_option("--targets", targets, "Target latents (default: outcome latents)");
  per->add_option("--respondent", respondent_id, "Only this respondent");
  per->add_option("--seed", seed, "Seed for the simulated backend");
  per->add_option("--workers", workers, "Requests in flight")->check(CLI::PositiveNumber);
  per->add_option("--out", out, "Output JSON file (default stdout)");
  add_backend_flags(per, backend);

  // run
  std::string config_path;
  auto* run = app.add_subcommand("run", "Full study: generate, fit, compare, report");
  run->add_option("--config", config_path, "Study config JSON");
  run->add_option("--spec", spec_ref, "Study spec");
  run->add_option("--responses", responses, "Human response CSV");
  run->add_option("--targets", targets, "Target latents");
  run->add_option("--approach", approaches, "baseline, demo, omni, mirror or all");
  run->add_option("--bootstrap", bootstrap, "Bootstrap samples")->check(CLI::Range(2, 1'000'000));
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--threads", threads, "Bootstrap worker threads (0: all cores)");
  run->add_option("--workers", workers, "Requests in flight")->check(CLI::PositiveNumber);
  run->add_option("--format", format, "markdown, csv or json")->check(CLI::IsMember({"markdown", "md", "csv", "json"}));
  run->add_option("--out", out, "Report directory")->required();
  add_backend_flags(run, backend);

  // synth
  std::vector<std::string> betas;
  double loading = 0.9;
  double noise_sd = 0.6;
  std::size_t n = 500;
  auto* syn = app.add_subcommand("synth", "Synthetic respondents from a planted path model");
  syn->add_option("--spec", spec_ref, "Study spec");
  syn->add_option("--beta", betas, "Planted coefficient FROM->TO=VALUE (one per path)")->required();
  syn->add_option("--loading", loading, "Indicator loading");
  syn->add_option("--noise", noise_sd, "Indicator noise sd")->check(CLI::NonNegativeNumber);
  syn->add_option("-n,--respondents", n, "Respondent count")->check(CLI::Range(2, 10'000'000));
  syn->add_option("--seed", seed, "Generator seed");
  syn->add_option("--out", out, "Likert response CSV (default stdout)");
  syn->add_option("--continuous", continuous, "Also write the pre-discretization indicators here");

  // spec
  auto* dump = app.add_subcommand("spec", "Print a study spec as JSON");
  dump->add_option("--spec", spec_ref, "Study spec");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) {
      auto spec = resolve_study_spec(spec_ref);
      pls::PlsOptions opts;
      opts.inner_scheme = pls::parse_inner_scheme(inner);
      pls::PlsResult res;
      if (!continuous.empty()) {
        const auto table = load_indicator_table(read_text_file(continuous), *spec);
        res = pls::fit(table.values, *spec, opts, bootstrap, seed, threads);
      } else if (!responses.empty()) {
        res = pls::fit(load_responses(read_text_file(responses), spec), opts, bootstrap, seed, threads);
      } else {
        throw Error(ErrorCode::invalid_argument, "fit needs --responses or --continuous");
      }
      write_or_print(out, format == "json" ? pls::to_json(res).dump(2) + "\n" : pls::render_text_table(res));
    } else if (*gen || *per) {
      auto spec = resolve_study_spec(spec_ref);
      auto human = load_responses(read_text_file(responses), spec);
      const auto tgt = resolve_targets(*spec, targets);
      const auto split = split_items(*spec, tgt);
      auto cfg = to_backend_config(backend);
      auto client = make_backend(cfg, *spec, tgt, seed);
      const auto& templates = prompting::default_templates();

      if (*per) {
        if (!respondent_id.empty()) human = human.select({respondent_id});
        const auto personas = generate_personas(human, split.prior, *client, templates, cfg.request, workers);
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& p : personas) j.push_back({{"respondent_id", p.respondent_id}, {"fingerprint", p.fingerprint}, {"text", p.text}});
        write_or_print(out, j.dump(2) + "\n");
      } else {
        const auto selected = parse_approaches(approaches);
        std::vector<prompting::PersonaText> personas;
        if (std::find(selected.begin(), selected.end(), Approach::mirror) != selected.end()) {
          personas = generate_personas(human, split.prior, *client, templates, cfg.request, workers);
        }
        fs::create_directories(out);
        for (auto a : selected) {
          const auto g = generate_responses(a, human, split.target, *client, &personas, templates, cfg.request, workers);
          const auto name = std::string(prompting::to_string(a));
          if (g.responses) write_text_file(fs::path(out) / ("generated_" + name + ".csv"),
                                           write_responses_csv(splice_generated(human, *g.responses)));
          std::cerr << name << ": " << g.succeeded.size() << " answered, " << g.failed.size() << " failed\n";
        }
      }
    } else if (*met) {
      auto spec = resolve_study_spec(spec_ref);
      const auto human = load_responses(read_text_file(responses), spec);
      const auto llm = load_responses(read_text_file(generated), spec);
      const auto tgt = resolve_targets(*spec, targets);
      const auto items = split_items(*spec, tgt).target;
      std::vector<std::string> ids;
      for (const auto& r : llm.respondents()) {
        if (human.find(r.id)) ids.push_back(r.id);
      }
      const auto rep = metrics::compare(human.select(ids).restrict(items), llm.select(ids).restrict(items), {std::nullopt, false});
      if (format == "json") {
        nlohmann::ordered_json j;
        for (const auto& c : rep.items) j["items"].push_back({{"item", c.item_id}, {"jsd", c.jsd}, {"wasserstein", c.wasserstein}});
        j["mean_jsd"] = rep.mean_jsd;
        j["mean_wasserstein"] = rep.mean_wasserstein;
        j["consistency"] = rep.consistency.percentage;
        j["respondents"] = ids.size();
        write_or_print(out, j.dump(2) + "\n");
      } else {
        std::string text = "item,jsd,wasserstein,consistency\n";
        for (std::size_t i = 0; i < rep.items.size(); ++i) {
          text += rep.items[i].item_id + "," + detail::fixed(rep.items[i].jsd) + "," + detail::fixed(rep.items[i].wasserstein) +
                  "," + detail::fixed(rep.consistency.per_item[i].second, 2) + "\n";
        }
        text += "mean," + detail::fixed(rep.mean_jsd) + "," + detail::fixed(rep.mean_wasserstein) + "," +
                detail::fixed(rep.consistency.percentage, 2) + "\n";
        write_or_print(out, text);
      }
    } else if (*run) {
      StudyConfig cfg;
      if (!config_path.empty()) cfg = StudyConfig::from_json(nlohmann::json::parse(read_text_file(config_path)));
      auto given = [&](const char* flag) { return run->count(flag) > 0; };
      if (given("--spec")) cfg.spec = spec_ref;
      if (given("--responses")) cfg.responses = responses;
      if (given("--targets")) cfg.targets = targets;
      if (given("--approach")) cfg.approaches = parse_approaches(approaches);
      if (given("--bootstrap")) cfg.bootstrap = bootstrap;
      if (given("--seed")) cfg.seed = seed;
      if (given("--threads")) cfg.bootstrap_threads = threads;
      if (given("--workers")) cfg.workers = workers;
      if (given("--format")) cfg.format = parse_report_format(format);
      cfg.out = out;
      if (config_path.empty() || given("--backend") || given("--noise") || given("--cache") || given("--model") ||
          given("--rule") || given("--base-url") || given("--temperature") || given("--max-tokens")) {
        auto b = to_backend_config(backend);
        if (!config_path.empty()) {
          if (!given("--backend")) b.kind = cfg.backend.kind;
          if (!given("--noise")) b.noise = cfg.backend.noise;
          if (!given("--cache")) b.cache_dir = cfg.backend.cache_dir;
          if (!given("--model")) b.request.model = cfg.backend.request.model;
          if (!given("--rule")) b.rule = cfg.backend.rule;
          if (!given("--base-url")) b.base_url = cfg.backend.base_url;
          if (!given("--temperature")) b.request.temperature = cfg.backend.request.temperature;
          if (!given("--max-tokens")) b.request.max_tokens = cfg.backend.request.max_tokens;
          b.seed = cfg.backend.seed;
          b.request.max_retries = cfg.backend.request.max_retries;
          b.http_retries = cfg.backend.http_retries;
        }
        cfg.backend = b;
      }
      const auto bundle = run_study(cfg);
      for (const auto& p : emit_report(bundle, cfg.format, cfg.out)) std::cerr << "wrote " << p.string() << "\n";
      for (const auto& a : bundle.approaches) {
        if (a.degraded) std::cerr << "warning: " << prompting::to_string(a.approach) << " is degraded\n";
      }
    } else if (*syn) {
      auto spec = resolve_study_spec(spec_ref);
      SyntheticModel model;
      for (const auto& b : betas) model.betas.insert(parse_beta(b));
      model.loading = loading;
      model.noise_sd = noise_sd;
      model.respondents = n;
      model.seed = seed;
      const auto study = generate_synthetic_study(spec, model);
      if (!continuous.empty()) write_text_file(continuous, write_indicator_csv(study));
      write_or_print(out, write_responses_csv(study.responses));
    } else if (*dump) {
      std::cout << to_json(*resolve_study_spec(spec_ref)).dump(2) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
