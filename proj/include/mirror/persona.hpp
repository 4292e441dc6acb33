#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "mirror/detail/hash.hpp"
#include "mirror/error.hpp"
#include "mirror/llm_client.hpp"
#include "mirror/prompting.hpp"
#include "mirror/survey.hpp"

namespace mirror {

/// Per-request sampling settings shared by persona and answer calls.
struct RequestSettings {
  std::string model = "gpt-4o";
  double temperature = 0.0;
  int max_tokens = 512;
  int max_retries = 3;  // extra attempts after an unusable reply

  void validate() const {
    if (model.empty()) throw Error(ErrorCode::invalid_argument, "model identifier is empty");
    if (!(temperature >= 0)) throw Error(ErrorCode::invalid_argument, "temperature must be >= 0");
    if (max_tokens < 1) throw Error(ErrorCode::invalid_argument, "max_tokens must be positive");
    if (max_retries < 0) throw Error(ErrorCode::invalid_argument, "max_retries must be >= 0");
  }
};

inline std::string persona_fingerprint(const prompting::PromptContext& context, std::string_view template_version,
                                       std::string_view backend_identity) {
  nlohmann::ordered_json j;
  j["demographics"] = nlohmann::ordered_json::array();
  for (const auto& [name, value] : *context.demographics) {
    j["demographics"].push_back({name, value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json()});
  }
  j["prior"] = nlohmann::ordered_json::array();
  for (const auto& p : *context.prior_qa) j["prior"].push_back({p.item_id, p.answer});
  j["template_version"] = template_version;
  j["backend"] = backend_identity;
  return detail::sha256_hex(j.dump());
}

/// Asks the backend for a second-person sketch of the respondent built from
/// demographics and prior answers. Empty replies are retried.
inline prompting::PersonaText generate_persona(const Respondent& respondent, const SurveySpec& spec,
                                               const std::vector<std::string>& prior_items,
                                               llm::CompletionBackend& backend,
                                               const prompting::PromptTemplates& templates = prompting::default_templates(),
                                               const RequestSettings& settings = {}) {
  settings.validate();
  const auto prompt = prompting::build_persona_prompt(respondent, spec, prior_items, templates);
  llm::CompletionRequest req;
  req.model = settings.model;
  req.system_prompt = prompt.system_text;
  req.prompt = prompt.rendered_text;
  req.temperature = settings.temperature;
  req.max_tokens = settings.max_tokens;
  req.tag = {respondent.id, "persona", prompt.template_version};
  req.kind = llm::RequestKind::persona;
  req.context = prompt.context;

  for (int attempt = 0; attempt <= settings.max_retries; ++attempt) {
    auto reply = std::string(detail::trim(backend.complete(req)));
    if (!reply.empty()) {
      return {respondent.id, std::move(reply),
              persona_fingerprint(prompt.context, prompt.template_version, backend.identity())};
    }
  }
  throw Error(ErrorCode::empty_reply, "persona for '" + respondent.id + "' came back empty " +
                                          std::to_string(settings.max_retries + 1) + " times");
}

struct AnswerOutcome {
  std::optional<std::vector<int>> answers;  // absent when every attempt failed to parse
  int attempts = 0;
  std::optional<ErrorCode> last_error;
  std::string last_reply;
};

/// Sends one answering prompt and parses the reply. Unparseable replies are
/// retried with the format reminder appended; backend errors propagate.
inline AnswerOutcome ask_likert(llm::CompletionBackend& backend, const prompting::PromptBundle& bundle,
                                const RequestSettings& settings = {},
                                const prompting::PromptTemplates& templates = prompting::default_templates()) {
  settings.validate();
  const auto n = bundle.context.questions.size();
  llm::CompletionRequest req;
  req.model = settings.model;
  req.system_prompt = bundle.system_text;
  req.prompt = bundle.rendered_text;
  req.temperature = settings.temperature;
  req.max_tokens = settings.max_tokens;
  req.tag = {bundle.respondent_id, std::string(prompting::to_string(bundle.approach)), bundle.template_version};
  req.context = bundle.context;

  AnswerOutcome out;
  for (int attempt = 0; attempt <= settings.max_retries; ++attempt) {
    if (attempt == 1) req.prompt = bundle.rendered_text + "\n" + prompting::render_reminder(templates, n, bundle.context.scale);
    ++out.attempts;
    out.last_reply = backend.complete(req);
    try {
      out.answers = prompting::parse_likert_reply(out.last_reply, n, bundle.context.scale);
      out.last_error.reset();
      return out;
    } catch (const Error& e) {
      out.last_error = e.code();
    }
  }
  return out;
}

}  // namespace mirror
