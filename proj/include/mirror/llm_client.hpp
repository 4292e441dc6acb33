#pragma once

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mirror/detail/hash.hpp"
#include "mirror/error.hpp"
#include "mirror/prompting.hpp"
#include "mirror/survey.hpp"

namespace mirror::llm {

using prompting::PromptBundle;
using prompting::PromptContext;

enum class RequestKind { answer, persona };

struct RequestTag {
  std::string respondent_id;
  std::string approach;  // approach name, or "persona"
  std::string template_version;
};

struct CompletionRequest {
  std::string model = "gpt-4o";
  std::string system_prompt;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  RequestTag tag;
  RequestKind kind = RequestKind::answer;
  // Structured ingredients of the prompt. Network backends ignore it; the
  // simulated respondent reads it instead of parsing prose.
  std::optional<PromptContext> context;

  void validate() const {
    if (prompt.empty()) throw Error(ErrorCode::invalid_argument, "completion prompt is empty");
    if (!(temperature >= 0)) throw Error(ErrorCode::invalid_argument, "temperature must be >= 0");
    if (max_tokens < 1) throw Error(ErrorCode::invalid_argument, "max_tokens must be positive");
  }
};

/// A completion service. Implementations must be safe for concurrent calls.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  /// Stable description used in cache keys, persona fingerprints and run manifests.
  virtual std::string identity() const = 0;
};

// ---------------------------------------------------------------------------
// Simulated respondent

/// Offline respondent model. Answers depend only on what the prompt carries:
/// no respondent facts give the scale midpoint, demographics give a fixed
/// shift, prior answers (directly or through a persona) feed a weighted rule
/// over per-factor mean answers.
struct SimulatedRespondentConfig {
  double noise = 0.0;
  std::uint64_t seed = 0;
  double demographic_shift = 0.5;
  // target latent -> (prior latent -> weight); answer = midpoint +
  // sum_L weight_L * (mean answer on L - midpoint).
  std::map<std::string, std::map<std::string, double>> rule;

  void validate(const std::vector<std::string>& target_latents = {}) const {
    if (!(noise >= 0) || !std::isfinite(noise)) throw Error(ErrorCode::invalid_argument, "noise must be finite and >= 0");
    for (const auto& [target, weights] : rule) {
      for (const auto& [prior, w] : weights) {
        if (!std::isfinite(w)) throw Error(ErrorCode::invalid_argument, "non-finite weight " + prior + " -> " + target);
      }
    }
    for (const auto& t : target_latents) {
      if (!rule.count(t)) throw Error(ErrorCode::invalid_argument, "simulated rule does not cover target latent '" + t + "'");
    }
  }

  /// Every target latent takes the plain average of the prior factors.
  static std::map<std::string, std::map<std::string, double>> identity_rule(const SurveySpec& spec,
                                                                            const std::vector<std::string>& targets) {
    const auto split = split_items(spec, targets);
    std::vector<std::string> priors;
    for (const auto& id : split.prior) {
      const auto& name = spec.latent_of(id).name;
      if (priors.empty() || priors.back() != name) priors.push_back(name);
    }
    std::map<std::string, std::map<std::string, double>> rule;
    for (const auto& t : targets) {
      for (const auto& p : priors) rule[t][p] = 1.0 / static_cast<double>(priors.size());
    }
    return rule;
  }
};

namespace detail {

inline std::string lean_phrase(double mean, const LikertScale& scale) {
  const double mid = scale.midpoint();
  if (mean >= mid + 1.5) return "clearly agree";
  if (mean >= mid + 0.5) return "mostly agree";
  if (mean > mid - 0.5) return "are undecided";
  if (mean > mid - 1.5) return "mostly disagree";
  return "clearly disagree";
}

inline std::vector<std::pair<std::string, double>> factor_means(const std::vector<prompting::PriorAnswer>& prior) {
  std::vector<std::pair<std::string, double>> out;
  std::vector<int> counts;
  for (const auto& p : prior) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == p.latent; });
    if (it == out.end()) {
      out.emplace_back(p.latent, 0.0);
      counts.push_back(0);
      it = out.end() - 1;
    }
    it->second += p.answer;
    ++counts[static_cast<std::size_t>(it - out.begin())];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].second /= counts[i];
  return out;
}

inline char fixed1_buf(double v, char (&buf)[32]) {
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf[0];
}

// Persona sentences carry one "(<latent>) sits at about <mean>" clause per
// factor; the mirror regime reads the stances back from these clauses.
inline const std::regex& stance_pattern() {
  static const std::regex re(R"(\(([A-Za-z0-9_]+)\) sits at about ([0-9]+(?:\.[0-9]+)?))");
  return re;
}

inline std::map<std::string, double> parse_persona_stances(const std::string& persona) {
  std::map<std::string, double> out;
  for (auto it = std::sregex_iterator(persona.begin(), persona.end(), stance_pattern()); it != std::sregex_iterator();
       ++it) {
    out[(*it)[1]] = std::stod((*it)[2]);
  }
  return out;
}

}  // namespace detail

/// Deterministic persona sketch written from demographics and prior answers.
/// Names every prior factor; never names demographic fields or quotes items.
inline std::string simulated_persona(const PromptContext& context) {
  if (!context.prior_qa) throw Error(ErrorCode::invalid_argument, "persona request without prior answers");
  std::string text = "You are a survey respondent";
  if (context.demographics) {
    std::string facts;
    for (const auto& [name, value] : *context.demographics) {
      if (!value) continue;
      facts += (facts.empty() ? "" : ", ") + *value;
    }
    if (!facts.empty()) text += " (" + facts + ")";
  }
  text += ".";
  std::map<std::string, std::string> labels;
  for (const auto& p : *context.prior_qa) labels.emplace(p.latent, p.latent_label);
  for (const auto& [latent, mean] : detail::factor_means(*context.prior_qa)) {
    char buf[32];
    detail::fixed1_buf(mean, buf);
    text += " Your view of " + labels[latent] + " (" + latent + ") sits at about " + buf + " on the " +
            std::to_string(context.scale.min) + "-to-" + std::to_string(context.scale.max) + " agreement scale, so you " +
            detail::lean_phrase(mean, context.scale) + ".";
  }
  return text;
}

/// Answers for one prompt context under the simulated respondent model.
/// Noise is drawn from a stream keyed by (seed, respondent, regime, item).
inline std::vector<int> simulated_answers(const PromptContext& context, std::string_view respondent_id,
                                          const SimulatedRespondentConfig& config) {
  const auto& scale = context.scale;
  const double mid = scale.midpoint();
  const auto ing = context.ingredients();

  std::string regime = "baseline";
  std::map<std::string, double> stances;
  double shift = 0;
  if (ing.persona) {
    regime = "mirror";
    stances = detail::parse_persona_stances(*context.persona);
  } else if (ing.prior_qa) {
    regime = "omni";
    for (const auto& [latent, mean] : detail::factor_means(*context.prior_qa)) stances[latent] = mean;
  } else if (ing.demographics) {
    regime = "demo";
    for (const auto& [name, value] : *context.demographics) {
      if (!value) continue;
      const auto h = ::mirror::detail::fnv1a(name + "=" + *value);
      shift += (static_cast<double>(h % 3) - 1.0) * config.demographic_shift;
    }
    shift = std::clamp(shift, -(scale.max - mid), scale.max - mid);
  }

  std::vector<int> out;
  for (const auto& q : context.questions) {
    double v = mid + shift;
    if (regime == "mirror" || regime == "omni") {
      auto rule = config.rule.find(q.latent);
      if (rule != config.rule.end()) {
        for (const auto& [prior, w] : rule->second) {
          auto s = stances.find(prior);
          if (s != stances.end()) v += w * (s->second - mid);
        }
      }
    }
    if (config.noise > 0) {
      const auto key = std::string(respondent_id) + '\x1f' + regime + '\x1f' + q.item_id;
      std::mt19937_64 rng(::mirror::detail::stream_seed(config.seed, ::mirror::detail::fnv1a(key)));
      std::normal_distribution<double> normal(0.0, config.noise);
      v += normal(rng);
    }
    v = std::clamp(v, static_cast<double>(scale.min), static_cast<double>(scale.max));
    out.push_back(static_cast<int>(std::lround(v)));
  }
  return out;
}

inline std::string simulated_respond(const PromptBundle& bundle, const Respondent& respondent,
                                     const SimulatedRespondentConfig& config) {
  if (bundle.respondent_id != respondent.id) {
    throw Error(ErrorCode::invalid_argument, "bundle for '" + bundle.respondent_id + "' answered as '" + respondent.id + "'");
  }
  return prompting::format_likert_answers(simulated_answers(bundle.context, bundle.respondent_id, config));
}

class SimulatedBackend final : public CompletionBackend {
 public:
  explicit SimulatedBackend(SimulatedRespondentConfig config) : config_(std::move(config)) { config_.validate(); }

  std::string complete(const CompletionRequest& request) override {
    request.validate();
    calls_.fetch_add(1);
    if (!request.context) throw Error(ErrorCode::invalid_argument, "simulated backend needs the structured prompt context");
    if (request.kind == RequestKind::persona) return simulated_persona(*request.context);
    return prompting::format_likert_answers(simulated_answers(*request.context, request.tag.respondent_id, config_));
  }

  std::string identity() const override {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", config_.noise);
    return "simulated(noise=" + std::string(buf) + ",seed=" + std::to_string(config_.seed) + ")";
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  SimulatedRespondentConfig config_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// HTTP chat-completion backend

struct HttpConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  int max_retries = 5;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{30'000};
  double backoff_multiplier = 2.0;
  std::chrono::seconds timeout{120};

  static HttpConfig from_environment() {
    HttpConfig c;
    if (const char* key = std::getenv("LLM_API_KEY")) c.api_key = key;
    return c;
  }
};

/// POSTs `{base_url}/chat/completions` with a system and a user message.
/// Connection failures, 429 and 5xx are retried with capped exponential
/// backoff; 401/403 fail immediately.
class HttpBackend final : public CompletionBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpBackend(HttpConfig config, Sleeper sleeper = default_sleeper())
      : config_(std::move(config)), sleeper_(std::move(sleeper)) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.base_url, m, url)) {
      throw Error(ErrorCode::invalid_argument, "base URL must look like http(s)://host[/path]: " + config_.base_url);
    }
    host_ = m[1];
    prefix_ = m[2].matched ? std::string(m[2]) : std::string();
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  std::string complete(const CompletionRequest& request) override {
    request.validate();
    if (config_.api_key.empty()) throw Error(ErrorCode::authentication, "no API key (set LLM_API_KEY)");

    nlohmann::json body{{"model", request.model},
                        {"temperature", request.temperature},
                        {"max_tokens", request.max_tokens},
                        {"messages", nlohmann::json::array()}};
    if (!request.system_prompt.empty()) body["messages"].push_back({{"role", "system"}, {"content", request.system_prompt}});
    body["messages"].push_back({{"role", "user"}, {"content", request.prompt}});
    const auto payload = body.dump();
    const httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};

    std::string last_failure;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) sleeper_(backoff(attempt));
      attempts_.fetch_add(1);
      httplib::Client client(host_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      auto res = client.Post(prefix_ + "/chat/completions", headers, payload, "application/json");
      if (!res) {
        last_failure = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 401 || res->status == 403) {
        throw Error(ErrorCode::authentication, "endpoint rejected the credential (HTTP " + std::to_string(res->status) + ")");
      }
      if (res->status == 429 || res->status >= 500) {
        last_failure = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw Error(ErrorCode::http_status, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
      return extract_content(res->body);
    }
    throw Error(ErrorCode::retries_exhausted, "gave up after " + std::to_string(config_.max_retries + 1) +
                                                  " attempts; last failure: " + last_failure);
  }

  std::string identity() const override { return "http(" + host_ + prefix_ + ")"; }

  std::chrono::milliseconds backoff(int attempt) const {
    const double ms = static_cast<double>(config_.initial_backoff.count()) *
                      std::pow(config_.backoff_multiplier, static_cast<double>(attempt - 1));
    return std::min(config_.max_backoff, std::chrono::milliseconds(static_cast<long long>(ms)));
  }

  std::size_t attempts() const { return attempts_.load(); }

  static Sleeper default_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

 private:
  static std::string extract_content(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      const auto& content = j.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) throw Error(ErrorCode::malformed_response, "message content is not a string");
      return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::malformed_response, std::string("unexpected completion payload: ") + e.what());
    }
  }

  HttpConfig config_;
  Sleeper sleeper_;
  std::string host_;
  std::string prefix_;
  std::atomic<std::size_t> attempts_{0};
};

// ---------------------------------------------------------------------------
// Response cache

/// Content hash over everything that determines a reply. The respondent id
/// is included so identical baseline prompts still get one call each.
inline std::string cache_key(const CompletionRequest& r, std::string_view backend_identity) {
  nlohmann::ordered_json j{{"backend", backend_identity},
                           {"model", r.model},
                           {"system", r.system_prompt},
                           {"prompt", r.prompt},
                           {"temperature", r.temperature},
                           {"template_version", r.tag.template_version},
                           {"respondent_id", r.tag.respondent_id}};
  return ::mirror::detail::sha256_hex(j.dump());
}

/// One JSON file per content hash: {fingerprint, reply, timestamp}.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  std::optional<std::string> lookup(const std::string& key) const {
    const auto path = dir_ / (key + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
      const auto j = nlohmann::json::parse(read_text_file(path));
      return j.at("reply").get<std::string>();
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable entries are treated as misses and overwritten
    }
  }

  void store(const std::string& key, const nlohmann::ordered_json& fingerprint, const std::string& reply) {
    nlohmann::ordered_json j{{"fingerprint", fingerprint}, {"reply", reply}, {"timestamp", utc_now()}};
    std::lock_guard lock(write_mutex_);
    const auto tmp = dir_ / (key + ".json.tmp");
    write_text_file(tmp, j.dump(2) + "\n");
    std::filesystem::rename(tmp, dir_ / (key + ".json"));
  }

  const std::filesystem::path& directory() const { return dir_; }

 private:
  static std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::filesystem::path dir_;
  std::mutex write_mutex_;
};

class CachedBackend final : public CompletionBackend {
 public:
  CachedBackend(std::shared_ptr<CompletionBackend> inner, std::filesystem::path dir)
      : inner_(std::move(inner)), cache_(std::move(dir)) {
    if (!inner_) throw Error(ErrorCode::invalid_argument, "cached backend needs an inner backend");
  }

  std::string complete(const CompletionRequest& request) override {
    request.validate();
    const auto identity = inner_->identity();
    const auto key = cache_key(request, identity);
    if (auto hit = cache_.lookup(key)) {
      hits_.fetch_add(1);
      return *hit;
    }
    misses_.fetch_add(1);
    auto reply = inner_->complete(request);
    cache_.store(key,
                 {{"backend", identity},
                  {"model", request.model},
                  {"temperature", request.temperature},
                  {"template_version", request.tag.template_version},
                  {"respondent_id", request.tag.respondent_id},
                  {"approach", request.tag.approach}},
                 reply);
    return reply;
  }

  std::string identity() const override { return inner_->identity(); }

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  const ResponseCache& cache() const { return cache_; }

 private:
  std::shared_ptr<CompletionBackend> inner_;
  ResponseCache cache_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace mirror::llm
