#include <catch_amalgamated.hpp>

#include <cctype>
#include <deque>
#include <filesystem>
#include <mutex>
#include <random>
#include <regex>

#include "mirror/mirror.hpp"

using namespace mirror;
using namespace mirror::prompting;
using Catch::Matchers::ContainsSubstring;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

ResponseMatrix population(const std::string& study, std::size_t n, std::uint64_t seed) {
  auto spec = std::make_shared<const SurveySpec>(builtin_study(study));
  SyntheticModel m;
  for (const auto& p : spec->paths()) m.betas[to_string(p)] = 0.3;
  m.respondents = n;
  m.seed = seed;
  auto rows = generate_synthetic_study(spec, m).responses.respondents();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution blank(0.15);
  for (auto& r : rows)
    for (auto& [k, v] : r.demographics)
      if (blank(rng)) v.reset();
  return ResponseMatrix(spec, spec->item_ids(), rows);
}

bool contains_word_ci(const std::string& text, const std::string& word) {
  const std::regex re("(^|[^A-Za-z0-9_])" + word + "($|[^A-Za-z0-9_])", std::regex::icase);
  return std::regex_search(text, re);
}

class ScriptedBackend final : public llm::CompletionBackend {
 public:
  explicit ScriptedBackend(std::deque<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const llm::CompletionRequest& r) override {
    std::lock_guard lock(m_);
    requests.push_back(r);
    if (replies_.empty()) return "";
    auto s = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    return s;
  }
  std::string identity() const override { return "scripted"; }
  std::vector<llm::CompletionRequest> requests;

 private:
  std::deque<std::string> replies_;
  std::mutex m_;
};

llm::SimulatedBackend simulated_for(const SurveySpec& spec, const std::vector<std::string>& targets) {
  llm::SimulatedRespondentConfig c;
  c.rule = llm::SimulatedRespondentConfig::identity_rule(spec, targets);
  return llm::SimulatedBackend(c);
}

}  // namespace

TEST_CASE("ingredient pattern per approach") {
  CHECK(required_ingredients(Approach::baseline) == Ingredients{true, false, false, false, true});
  CHECK(required_ingredients(Approach::demo) == Ingredients{true, true, false, false, true});
  CHECK(required_ingredients(Approach::omni) == Ingredients{true, true, true, false, true});
  CHECK(required_ingredients(Approach::mirror) == Ingredients{true, false, false, true, true});
  for (auto a : kAllApproaches) CHECK(parse_approach(to_string(a)) == a);
  CHECK(parse_approach("llm-mirror") == Approach::mirror);
  CHECK_THROWS_AS(parse_approach("telepathy"), Error);
}

TEST_CASE("bundles match the ingredient pattern across random respondents") {
  for (const std::string study : {"study1", "study2_case2"}) {
    const auto pop = population(study, 100, 17);
    const auto& spec = pop.spec();
    const auto targets = outcome_latents(spec);
    const auto split = split_items(spec, targets);
    auto sim = simulated_for(spec, targets);
    std::set<std::string> fields;
    for (const auto& d : spec.demographics()) fields.insert(d.name);

    for (const auto& r : pop.respondents()) {
      const auto persona = generate_persona(r, spec, split.prior, sim);
      for (auto a : kAllApproaches) {
        const auto b = build_prompt(a, r, spec, split.target, a == Approach::mirror ? std::optional(persona) : std::nullopt);
        CHECK(b.context.ingredients() == required_ingredients(a));
        CHECK(b.approach == a);
        CHECK(b.respondent_id == r.id);
        CHECK(b.template_version == "v1");
        for (const auto& id : split.target) {
          CHECK(prompting::detail::count_occurrences(b.rendered_text, spec.item(id).text) == 1);
        }
        if (a == Approach::mirror) {
          CHECK_THAT(b.rendered_text, ContainsSubstring(persona.text));
          for (const auto& f : fields) CHECK_FALSE(contains_word_ci(b.rendered_text, f));
          for (const auto& id : split.prior) CHECK(b.rendered_text.find(spec.item(id).text) == std::string::npos);
        }
      }
    }
  }
}

TEST_CASE("baseline bundle carries no respondent facts") {
  const auto pop = population("study1", 3, 2);
  const auto split = split_items(pop.spec(), {"attitude"});
  const auto b = build_prompt(Approach::baseline, pop.respondents()[0], pop.spec(), split.target);
  CHECK_FALSE(b.context.demographics.has_value());
  CHECK_FALSE(b.context.prior_qa.has_value());
  CHECK_FALSE(b.context.persona.has_value());
  CHECK(b.context.questions.size() == 4);
  CHECK(b.rendered_text.find("About you") == std::string::npos);
}

TEST_CASE("build_prompt is deterministic and ordered") {
  const auto pop = population("study2_case1", 5, 3);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"LOY"});
  const auto& r = pop.respondents()[1];
  const auto a = build_prompt(Approach::omni, r, spec, split.target);
  const auto b = build_prompt(Approach::omni, r, spec, split.target);
  CHECK(a.rendered_text == b.rendered_text);

  const auto ctx = a.rendered_text.find(spec.context());
  const auto demo = a.rendered_text.find("About you:");
  const auto prior = a.rendered_text.find("Your answers to earlier statements");
  const auto instr = a.rendered_text.find("Rate each of the following");
  const auto q1 = a.rendered_text.find("1. " + spec.item(split.target[0]).text);
  REQUIRE(ctx != std::string::npos);
  CHECK(ctx < demo);
  CHECK(demo < prior);
  CHECK(prior < instr);
  CHECK(instr < q1);
}

TEST_CASE("omni prompts round-trip every prior answer") {
  const auto pop = population("study1", 40, 8);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  for (const auto& r : pop.respondents()) {
    const auto b = build_prompt(Approach::omni, r, spec, split.target);
    for (const auto& id : split.prior) {
      const auto& text = spec.item(id).text;
      REQUIRE(prompting::detail::count_occurrences(b.rendered_text, text) == 1);
      const auto pos = b.rendered_text.find(text) + text.size();
      const auto line_end = b.rendered_text.find('\n', pos);
      const auto tail = b.rendered_text.substr(pos, line_end - pos);
      std::smatch m;
      REQUIRE(std::regex_match(tail, m, std::regex(R"( Answer: (\d+))")));
      CHECK(std::stoi(m[1]) == r.answers.at(id));
    }
  }
}

TEST_CASE("missing demographics render as not provided") {
  auto pop = population("study1", 2, 4);
  auto r = pop.respondents()[0];
  r.demographics["gender"].reset();
  const auto b = build_prompt(Approach::demo, r, pop.spec(), split_items(pop.spec(), {"attitude"}).target);
  CHECK_THAT(b.rendered_text, ContainsSubstring("- gender: not provided"));
}

TEST_CASE("build_prompt preconditions") {
  const auto pop = population("study1", 2, 5);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  const auto& r = pop.respondents()[0];
  const PersonaText p{r.id, "You are a careful reader.", "f"};
  CHECK(code_of([&] { build_prompt(Approach::mirror, r, spec, split.target); }) == ErrorCode::persona_required);
  CHECK(code_of([&] { build_prompt(Approach::omni, r, spec, split.target, p); }) == ErrorCode::persona_forbidden);
  auto partial = r;
  partial.answers.erase(split.prior.front());
  CHECK(code_of([&] { build_prompt(Approach::omni, partial, spec, split.target); }) == ErrorCode::missing_prior_answer);
  CHECK_NOTHROW(build_prompt(Approach::demo, partial, spec, split.target));
  const PersonaText other{"someone-else", "You are.", "f"};
  CHECK(code_of([&] { build_prompt(Approach::mirror, r, spec, split.target, other); }) == ErrorCode::invalid_argument);
}

TEST_CASE("templates enforce the ingredient contract") {
  const auto& t = default_templates();
  CHECK(t.version() == "v1");
  auto texts = std::map<Approach, std::string>{};
  for (auto a : kAllApproaches) texts[a] = t.approach_text(a);

  auto broken = texts;
  broken[Approach::mirror] += "\n{{demographics}}";
  CHECK(code_of([&] { PromptTemplates("x", broken, t.persona_text(), t.system_text(), t.reminder_text()); }) ==
        ErrorCode::template_mismatch);
  broken = texts;
  broken[Approach::demo] = "{{context}}\n{{questions}}";
  CHECK(code_of([&] { PromptTemplates("x", broken, t.persona_text(), t.system_text(), t.reminder_text()); }) ==
        ErrorCode::template_mismatch);
  broken = texts;
  broken[Approach::baseline] += "{{mystery}}";
  CHECK(code_of([&] { PromptTemplates("x", broken, t.persona_text(), t.system_text(), t.reminder_text()); }) ==
        ErrorCode::template_mismatch);
  broken = texts;
  broken[Approach::omni] += "{{prior_qa}}";
  CHECK(code_of([&] { PromptTemplates("x", broken, t.persona_text(), t.system_text(), t.reminder_text()); }) ==
        ErrorCode::template_mismatch);

  const auto dir = std::filesystem::temp_directory_path() / "mirror_tpl_test" / "v9";
  std::filesystem::create_directories(dir);
  for (auto a : kAllApproaches) write_text_file(dir / (std::string(to_string(a)) + ".txt"), texts[a]);
  write_text_file(dir / "persona.txt", t.persona_text());
  write_text_file(dir / "system.txt", t.system_text());
  write_text_file(dir / "reminder.txt", t.reminder_text());
  CHECK(PromptTemplates::load(dir).version() == "v9");
  std::filesystem::remove_all(dir.parent_path());
}

TEST_CASE("parse_likert_reply") {
  const LikertScale k7{1, 7};
  CHECK(parse_likert_reply("[5, 3, 7, 1]", 4, k7) == std::vector<int>{5, 3, 7, 1});
  CHECK(parse_likert_reply("Sure. [1,2] Final answer: [ 6 , 7 ]", 2, k7) == std::vector<int>{6, 7});
  CHECK(parse_likert_reply("[4, 4] and a stray [note]", 2, k7) == std::vector<int>{4, 4});
  try {
    parse_likert_reply("[5, 3, 8, 1]", 4, k7);
    FAIL("accepted 8");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::out_of_range);
    CHECK_THAT(e.what(), ContainsSubstring("position 3"));
  }
  CHECK(code_of([&] { parse_likert_reply("I think mostly agree overall.", 4, k7); }) == ErrorCode::no_answer_block);
  CHECK(code_of([&] { parse_likert_reply("[1, 2, 3]", 4, k7); }) == ErrorCode::wrong_count);
  CHECK(code_of([&] { parse_likert_reply("[]", 1, k7); }) == ErrorCode::no_answer_block);
  CHECK(code_of([&] { parse_likert_reply("[1.5]", 1, k7); }) == ErrorCode::no_answer_block);
}

TEST_CASE("format then parse is the identity") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const int lo = std::uniform_int_distribution<int>(1, 3)(rng);
    const LikertScale s{lo, lo + std::uniform_int_distribution<int>(1, 9)(rng)};
    std::vector<int> v(std::uniform_int_distribution<std::size_t>(1, 12)(rng));
    for (auto& x : v) x = std::uniform_int_distribution<int>(s.min, s.max)(rng);
    CHECK(parse_likert_reply(format_likert_answers(v), v.size(), s) == v);
  }
}

TEST_CASE("reminder text") {
  const auto r = render_reminder(default_templates(), 3, {1, 7});
  CHECK_THAT(r, ContainsSubstring("exactly 3 integers between 1 and 7"));
  CHECK_THAT(r, ContainsSubstring("[4, 4, 4]"));
}

TEST_CASE("generate_persona with the simulated backend") {
  const auto pop = population("study2_case1", 4, 6);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"LOY"});
  auto sim = simulated_for(spec, {"LOY"});
  const auto& r = pop.respondents()[0];
  const auto a = generate_persona(r, spec, split.prior, sim);
  const auto b = generate_persona(r, spec, split.prior, sim);
  CHECK_FALSE(a.text.empty());
  CHECK(a.text == b.text);
  CHECK(a.fingerprint == b.fingerprint);
  CHECK(a.fingerprint.size() == 64);
  CHECK(a.respondent_id == r.id);
  for (const auto& lv : spec.latents()) {
    if (lv.name != "LOY") CHECK_THAT(a.text, ContainsSubstring("(" + lv.name + ")"));
  }
  CHECK(generate_persona(pop.respondents()[1], spec, split.prior, sim).fingerprint != a.fingerprint);

  auto partial = r;
  partial.answers.erase(split.prior.back());
  CHECK(code_of([&] { generate_persona(partial, spec, split.prior, sim); }) == ErrorCode::missing_prior_answer);
}

TEST_CASE("persona request carries demographics and prior answers") {
  const auto pop = population("study1", 2, 6);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  ScriptedBackend be({"You are thoughtful."});
  const auto p = generate_persona(pop.respondents()[0], spec, split.prior, be);
  REQUIRE(be.requests.size() == 1);
  const auto& req = be.requests[0];
  CHECK(req.kind == llm::RequestKind::persona);
  CHECK(req.tag.approach == "persona");
  CHECK_THAT(req.prompt, ContainsSubstring("About you:"));
  for (const auto& id : split.prior) CHECK_THAT(req.prompt, ContainsSubstring(spec.item(id).text));
  CHECK_THAT(req.prompt, ContainsSubstring("second person"));
  CHECK(p.text == "You are thoughtful.");
}

TEST_CASE("empty persona replies are retried then fail") {
  const auto pop = population("study1", 2, 6);
  const auto split = split_items(pop.spec(), {"attitude"});
  ScriptedBackend recovers({"", "  ", "You are fine."});
  CHECK(generate_persona(pop.respondents()[0], pop.spec(), split.prior, recovers).text == "You are fine.");
  CHECK(recovers.requests.size() == 3);
  ScriptedBackend silent({""});
  CHECK(code_of([&] { generate_persona(pop.respondents()[0], pop.spec(), split.prior, silent); }) == ErrorCode::empty_reply);
  CHECK(silent.requests.size() == 4);
}

TEST_CASE("ask_likert retries with the format reminder") {
  const auto pop = population("study1", 2, 6);
  const auto split = split_items(pop.spec(), {"attitude"});
  const auto bundle = build_prompt(Approach::baseline, pop.respondents()[0], pop.spec(), split.target);

  ScriptedBackend fixes({"I agree.", "[1, 2, 3]", "[4, 5, 6, 7]"});
  const auto ok = ask_likert(fixes, bundle);
  REQUIRE(ok.answers);
  CHECK(*ok.answers == std::vector<int>{4, 5, 6, 7});
  CHECK(ok.attempts == 3);
  CHECK(fixes.requests[0].prompt == bundle.rendered_text);
  CHECK_THAT(fixes.requests[1].prompt, ContainsSubstring("Reminder: reply with exactly 4 integers"));

  ScriptedBackend hopeless({"[9, 9, 9, 9]"});
  const auto bad = ask_likert(hopeless, bundle);
  CHECK_FALSE(bad.answers);
  CHECK(bad.attempts == 4);
  CHECK(*bad.last_error == ErrorCode::out_of_range);
}
