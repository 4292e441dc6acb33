#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mirror/bundled_assets.hpp"
#include "mirror/detail/csv.hpp"
#include "mirror/error.hpp"
#include "mirror/survey.hpp"

namespace mirror::prompting {

/// Information regimes: what respondent facts a prompt carries.
enum class Approach { baseline, demo, mirror, omni };

inline constexpr std::array kAllApproaches{Approach::baseline, Approach::demo, Approach::mirror, Approach::omni};

inline std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::baseline: return "baseline";
    case Approach::demo: return "demo";
    case Approach::mirror: return "mirror";
    case Approach::omni: return "omni";
  }
  return "?";
}

inline std::string_view display_name(Approach a) {
  switch (a) {
    case Approach::baseline: return "Baseline prompt";
    case Approach::demo: return "Demo prompt";
    case Approach::mirror: return "LLM-Mirror";
    case Approach::omni: return "Omni prompt";
  }
  return "?";
}

inline Approach parse_approach(std::string_view s) {
  for (auto a : kAllApproaches) {
    if (s == to_string(a)) return a;
  }
  if (s == "llm-mirror") return Approach::mirror;
  throw Error(ErrorCode::invalid_argument, "unknown approach '" + std::string(s) + "'");
}

struct Ingredients {
  bool survey_context = false;
  bool demographics = false;
  bool prior_qa = false;
  bool persona = false;
  bool questions = false;
  friend bool operator==(const Ingredients&, const Ingredients&) = default;
};

/// What each approach must carry, and nothing more.
constexpr Ingredients required_ingredients(Approach a) {
  switch (a) {
    case Approach::baseline: return {true, false, false, false, true};
    case Approach::demo: return {true, true, false, false, true};
    case Approach::mirror: return {true, false, false, true, true};
    case Approach::omni: return {true, true, true, false, true};
  }
  return {};
}

struct PriorAnswer {
  std::string item_id;
  std::string latent;
  std::string latent_label;
  std::string text;
  int answer = 0;
};

struct TargetQuestion {
  std::string item_id;
  std::string latent;
  std::string text;
};

/// Structured record of what a prompt actually contains.
struct PromptContext {
  std::string survey_context;
  std::optional<std::vector<std::pair<std::string, DemographicValue>>> demographics;
  std::optional<std::vector<PriorAnswer>> prior_qa;
  std::optional<std::string> persona;
  std::vector<TargetQuestion> questions;
  LikertScale scale;

  Ingredients ingredients() const {
    return {!survey_context.empty(), demographics.has_value(), prior_qa.has_value(), persona.has_value(),
            !questions.empty()};
  }
};

struct PromptBundle {
  Approach approach = Approach::baseline;
  std::string respondent_id;
  std::string template_version;
  std::string system_text;
  std::string rendered_text;
  PromptContext context;
};

struct PersonaText {
  std::string respondent_id;
  std::string text;
  std::string fingerprint;  // sha256 over (demographics, prior answers, template version, backend)
};

inline constexpr std::string_view kNotProvided = "not provided";

// ---------------------------------------------------------------------------
// Templates

namespace detail {

inline std::set<std::string> placeholders(std::string_view text) {
  std::set<std::string> out;
  static const std::regex re(R"(\{\{([a-z_]+)\}\})");
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) out.insert((*it)[1]);
  return out;
}

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

inline std::string render(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = text.find("}}", open);
    if (close == std::string_view::npos) break;
    const std::string key(text.substr(open + 2, close - open - 2));
    auto it = values.find(key);
    if (it == values.end()) throw Error(ErrorCode::template_mismatch, "no value for placeholder {{" + key + "}}");
    out.append(text.substr(pos, open - pos));
    out += it->second;
    pos = close + 2;
  }
  out.append(text.substr(pos));
  return std::string(::mirror::detail::trim(out)) + "\n";
}

inline const std::map<std::string, bool Ingredients::*>& ingredient_placeholders() {
  static const std::map<std::string, bool Ingredients::*> m{
      {"context", &Ingredients::survey_context}, {"demographics", &Ingredients::demographics},
      {"prior_qa", &Ingredients::prior_qa},      {"persona", &Ingredients::persona},
      {"questions", &Ingredients::questions}};
  return m;
}

}  // namespace detail

/// Versioned prompt text assets. Each approach template must reference
/// exactly the placeholders of its required ingredients, once each.
class PromptTemplates {
 public:
  PromptTemplates(std::string version, std::map<Approach, std::string> approach_texts, std::string persona_text,
                  std::string system_text, std::string reminder_text)
      : version_(std::move(version)),
        approach_texts_(std::move(approach_texts)),
        persona_(std::move(persona_text)),
        system_(std::move(system_text)),
        reminder_(std::move(reminder_text)) {
    for (auto a : kAllApproaches) {
      auto it = approach_texts_.find(a);
      if (it == approach_texts_.end()) {
        throw Error(ErrorCode::template_mismatch, "missing template for approach " + std::string(to_string(a)));
      }
      const auto required = required_ingredients(a);
      const auto found = detail::placeholders(it->second);
      for (const auto& [name, flag] : detail::ingredient_placeholders()) {
        const auto n = detail::count_occurrences(it->second, "{{" + name + "}}");
        if ((required.*flag && n != 1) || (!(required.*flag) && n != 0)) {
          throw Error(ErrorCode::template_mismatch, std::string(to_string(a)) + " template must contain {{" + name +
                                                        "}} " + (required.*flag ? "exactly once" : "zero times"));
        }
      }
      for (const auto& p : found) {
        if (!detail::ingredient_placeholders().count(p)) {
          throw Error(ErrorCode::template_mismatch, "unknown placeholder {{" + p + "}} in " + std::string(to_string(a)));
        }
      }
    }
    for (std::string_view p : {"context", "demographics", "prior_qa", "factors"}) {
      if (detail::count_occurrences(persona_, "{{" + std::string(p) + "}}") != 1) {
        throw Error(ErrorCode::template_mismatch, "persona template must contain {{" + std::string(p) + "}} once");
      }
    }
  }

  static PromptTemplates builtin() {
    auto get = [](std::string_view name) {
      auto t = assets::find("templates/v1/" + std::string(name) + ".txt");
      if (!t) throw Error(ErrorCode::io, "bundled template " + std::string(name) + " missing");
      return std::string(*t);
    };
    std::map<Approach, std::string> texts;
    for (auto a : kAllApproaches) texts[a] = get(to_string(a));
    return PromptTemplates("v1", std::move(texts), get("persona"), get("system"), get("reminder"));
  }

  /// Loads <dir>/{baseline,demo,mirror,omni,persona,system,reminder}.txt; the
  /// directory name is the template version.
  static PromptTemplates load(const std::filesystem::path& dir) {
    std::map<Approach, std::string> texts;
    for (auto a : kAllApproaches) texts[a] = read_text_file(dir / (std::string(to_string(a)) + ".txt"));
    auto version = dir.filename().string();
    if (version.empty()) version = dir.parent_path().filename().string();
    return PromptTemplates(version, std::move(texts), read_text_file(dir / "persona.txt"),
                           read_text_file(dir / "system.txt"), read_text_file(dir / "reminder.txt"));
  }

  const std::string& version() const { return version_; }
  const std::string& approach_text(Approach a) const { return approach_texts_.at(a); }
  const std::string& persona_text() const { return persona_; }
  const std::string& system_text() const { return system_; }
  const std::string& reminder_text() const { return reminder_; }

 private:
  std::string version_;
  std::map<Approach, std::string> approach_texts_;
  std::string persona_;
  std::string system_;
  std::string reminder_;
};

/// Process-wide bundled templates.
inline const PromptTemplates& default_templates() {
  static const PromptTemplates t = PromptTemplates::builtin();
  return t;
}

// ---------------------------------------------------------------------------
// Blocks

inline std::string render_context(const SurveySpec& spec) {
  if (!spec.context().empty()) return spec.context();
  return "This survey is titled \"" + spec.name() + "\".";
}

inline std::string scale_phrase(const LikertScale& scale) {
  return std::to_string(scale.min) + " (strongly disagree) to " + std::to_string(scale.max) + " (strongly agree)";
}

inline std::string render_demographics(const std::vector<std::pair<std::string, DemographicValue>>& demo) {
  std::string out = "About you:";
  for (const auto& [name, value] : demo) out += "\n- " + name + ": " + (value ? *value : std::string(kNotProvided));
  return out;
}

inline std::string render_prior_qa(const std::vector<PriorAnswer>& prior, const LikertScale& scale) {
  std::string out = "Your answers to earlier statements in this survey, on a scale from " + scale_phrase(scale) + ":";
  for (const auto& p : prior) out += "\n- " + p.text + " Answer: " + std::to_string(p.answer);
  return out;
}

inline std::string example_answer_block(std::size_t n, const LikertScale& scale) {
  std::string out = "[";
  const int mid = (scale.min + scale.max) / 2;
  for (std::size_t i = 0; i < n; ++i) out += (i ? ", " : "") + std::to_string(mid);
  return out + "]";
}

inline std::string render_questions(const std::vector<TargetQuestion>& questions, const LikertScale& scale) {
  const auto n = std::to_string(questions.size());
  std::string out = "Rate each of the following " + n + " statements on a scale from " + scale_phrase(scale) +
                    ". Reply with a single bracketed list of " + n + " integers in the order shown, for example " +
                    example_answer_block(questions.size(), scale) + ".\n";
  for (std::size_t i = 0; i < questions.size(); ++i) out += "\n" + std::to_string(i + 1) + ". " + questions[i].text;
  return out;
}

inline std::vector<std::pair<std::string, DemographicValue>> collect_demographics(const Respondent& r,
                                                                                  const SurveySpec& spec) {
  std::vector<std::pair<std::string, DemographicValue>> out;
  for (const auto& d : spec.demographics()) {
    auto it = r.demographics.find(d.name);
    out.emplace_back(d.name, it == r.demographics.end() ? std::nullopt : it->second);
  }
  return out;
}

inline std::vector<PriorAnswer> collect_prior_answers(const Respondent& r, const SurveySpec& spec,
                                                      const std::vector<std::string>& prior_items) {
  std::vector<PriorAnswer> out;
  for (const auto& id : prior_items) {
    auto it = r.answers.find(id);
    if (it == r.answers.end()) {
      throw Error(ErrorCode::missing_prior_answer, "respondent '" + r.id + "' has no answer for prior item '" + id + "'");
    }
    const auto& lv = spec.latent_of(id);
    out.push_back({id, lv.name, lv.label, spec.item(id).text, it->second});
  }
  return out;
}

/// Items of the spec not in target_items, in canonical order.
inline std::vector<std::string> complement_items(const SurveySpec& spec, const std::vector<std::string>& target_items) {
  const std::set<std::string> targets(target_items.begin(), target_items.end());
  std::vector<std::string> out;
  for (const auto& id : spec.item_ids()) {
    if (!targets.count(id)) out.push_back(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt assembly

/// Assembles the answering prompt for one respondent under one approach.
/// Sections appear in fixed order: context, demographics, prior answers,
/// persona, answer-format instruction with numbered target statements.
inline PromptBundle build_prompt(Approach approach, const Respondent& respondent, const SurveySpec& spec,
                                 const std::vector<std::string>& target_items,
                                 const std::optional<PersonaText>& persona = std::nullopt,
                                 const PromptTemplates& templates = default_templates()) {
  if (target_items.empty()) throw Error(ErrorCode::invalid_argument, "no target items");
  if (approach == Approach::mirror && !persona) {
    throw Error(ErrorCode::persona_required, "mirror prompt for '" + respondent.id + "' needs a persona");
  }
  if (approach != Approach::mirror && persona) {
    throw Error(ErrorCode::persona_forbidden, std::string(to_string(approach)) + " prompts must not carry a persona");
  }
  if (persona && persona->respondent_id != respondent.id) {
    throw Error(ErrorCode::invalid_argument, "persona belongs to '" + persona->respondent_id + "', not '" + respondent.id + "'");
  }

  const auto need = required_ingredients(approach);
  PromptBundle b;
  b.approach = approach;
  b.respondent_id = respondent.id;
  b.template_version = templates.version();
  b.system_text = std::string(::mirror::detail::trim(templates.system_text()));
  b.context.scale = spec.scale();
  b.context.survey_context = render_context(spec);
  for (const auto& id : target_items) {
    b.context.questions.push_back({id, spec.latent_of(id).name, spec.item(id).text});
  }
  if (need.demographics) b.context.demographics = collect_demographics(respondent, spec);
  if (need.prior_qa) b.context.prior_qa = collect_prior_answers(respondent, spec, complement_items(spec, target_items));
  if (need.persona) b.context.persona = std::string(::mirror::detail::trim(persona->text));

  std::map<std::string, std::string> values{{"context", b.context.survey_context},
                                            {"questions", render_questions(b.context.questions, spec.scale())}};
  if (b.context.demographics) values["demographics"] = render_demographics(*b.context.demographics);
  if (b.context.prior_qa) values["prior_qa"] = render_prior_qa(*b.context.prior_qa, spec.scale());
  if (b.context.persona) values["persona"] = *b.context.persona;
  b.rendered_text = detail::render(templates.approach_text(approach), values);
  return b;
}

/// Persona-construction request: demographics and prior answers go in, a
/// second-person sketch comes out.
struct PersonaPrompt {
  std::string respondent_id;
  std::string template_version;
  std::string system_text;
  std::string rendered_text;
  PromptContext context;
};

inline PersonaPrompt build_persona_prompt(const Respondent& respondent, const SurveySpec& spec,
                                          const std::vector<std::string>& prior_items,
                                          const PromptTemplates& templates = default_templates()) {
  if (prior_items.empty()) throw Error(ErrorCode::invalid_argument, "persona needs at least one prior item");
  PersonaPrompt p;
  p.respondent_id = respondent.id;
  p.template_version = templates.version();
  p.system_text = std::string(::mirror::detail::trim(templates.system_text()));
  p.context.scale = spec.scale();
  p.context.survey_context = render_context(spec);
  p.context.demographics = collect_demographics(respondent, spec);
  p.context.prior_qa = collect_prior_answers(respondent, spec, prior_items);

  std::string factors;
  std::set<std::string> seen;
  for (const auto& pa : *p.context.prior_qa) {
    if (!seen.insert(pa.latent).second) continue;
    if (!factors.empty()) factors += "; ";
    factors += pa.latent_label;
  }
  p.rendered_text = detail::render(templates.persona_text(),
                                   {{"context", p.context.survey_context},
                                    {"demographics", render_demographics(*p.context.demographics)},
                                    {"prior_qa", render_prior_qa(*p.context.prior_qa, spec.scale())},
                                    {"factors", factors}});
  return p;
}

inline std::string render_reminder(const PromptTemplates& templates, std::size_t n, const LikertScale& scale) {
  return detail::render(templates.reminder_text(), {{"count", std::to_string(n)},
                                                    {"min", std::to_string(scale.min)},
                                                    {"max", std::to_string(scale.max)},
                                                    {"example", example_answer_block(n, scale)}});
}

// ---------------------------------------------------------------------------
// Reply parsing

inline std::string format_likert_answers(std::span<const int> answers) {
  std::string out = "[";
  for (std::size_t i = 0; i < answers.size(); ++i) out += (i ? ", " : "") + std::to_string(answers[i]);
  return out + "]";
}

/// Extracts the bracketed integer list from a model reply. The last
/// well-formed bracketed list wins; count and range are then checked.
inline std::vector<int> parse_likert_reply(std::string_view reply, std::size_t n_questions, const LikertScale& scale) {
  if (n_questions == 0) throw Error(ErrorCode::invalid_argument, "n_questions must be positive");
  std::optional<std::vector<int>> block;
  for (auto close = reply.rfind(']'); close != std::string_view::npos && !block;
       close = close == 0 ? std::string_view::npos : reply.rfind(']', close - 1)) {
    const auto open = reply.rfind('[', close);
    if (open == std::string_view::npos) break;
    const auto inner = reply.substr(open + 1, close - open - 1);
    std::vector<int> values;
    bool ok = !::mirror::detail::trim(inner).empty();
    std::size_t start = 0;
    while (ok && start <= inner.size()) {
      auto comma = inner.find(',', start);
      if (comma == std::string_view::npos) comma = inner.size();
      auto v = parse_int(inner.substr(start, comma - start));
      if (!v) {
        ok = false;
      } else {
        values.push_back(*v);
      }
      start = comma + 1;
    }
    if (ok) block = std::move(values);
  }
  if (!block) throw Error(ErrorCode::no_answer_block, "reply contains no bracketed integer list");
  if (block->size() != n_questions) {
    throw Error(ErrorCode::wrong_count, "expected " + std::to_string(n_questions) + " answers, got " +
                                            std::to_string(block->size()));
  }
  for (std::size_t i = 0; i < block->size(); ++i) {
    if (!scale.contains((*block)[i])) {
      throw Error(ErrorCode::out_of_range, "answer " + std::to_string((*block)[i]) + " at position " +
                                               std::to_string(i + 1) + " outside [" + std::to_string(scale.min) + ", " +
                                               std::to_string(scale.max) + "]");
    }
  }
  return *block;
}

}  // namespace mirror::prompting
