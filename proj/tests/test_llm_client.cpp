#include <catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <random>
#include <set>
#include <thread>

#include "mirror/mirror.hpp"

using namespace mirror;
using namespace mirror::llm;
using prompting::Approach;
using Catch::Matchers::ContainsSubstring;

namespace fs = std::filesystem;

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

std::shared_ptr<const SurveySpec> study1() { return std::make_shared<const SurveySpec>(builtin_study("study1")); }

ResponseMatrix population(std::size_t n, std::uint64_t seed) {
  const auto spec = study1();
  SyntheticModel m;
  m.betas = {{"pleasure -> attitude", 0.5},
             {"credibility -> attitude", 0.3},
             {"economic -> attitude", 0.2},
             {"intrusiveness -> attitude", -0.2},
             {"clutter -> attitude", -0.1}};
  m.respondents = n;
  m.seed = seed;
  return generate_synthetic_study(spec, m).responses;
}

Respondent uniform_respondent(const SurveySpec& spec, int value) {
  Respondent r{"u1", {}, {}};
  for (const auto& d : spec.demographics()) r.demographics[d.name] = d.values.empty() ? "40" : d.values.front();
  for (const auto& id : spec.item_ids()) r.answers[id] = value;
  return r;
}

CompletionRequest request_for(const prompting::PromptBundle& b) {
  CompletionRequest req;
  req.system_prompt = b.system_text;
  req.prompt = b.rendered_text;
  req.tag = {b.respondent_id, std::string(prompting::to_string(b.approach)), b.template_version};
  req.context = b.context;
  return req;
}

SimulatedRespondentConfig identity_config(double noise = 0.0, std::uint64_t seed = 0) {
  SimulatedRespondentConfig c;
  c.noise = noise;
  c.seed = seed;
  c.rule = SimulatedRespondentConfig::identity_rule(builtin_study("study1"), {"attitude"});
  return c;
}

std::vector<int> parse(const std::string& reply, std::size_t n) { return prompting::parse_likert_reply(reply, n, {1, 7}); }

double variance(const std::vector<int>& v) {
  double m = 0;
  for (int x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (int x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("mirror_llm_" + name);
  fs::remove_all(d);
  return d;
}

std::size_t file_count(const fs::path& d) {
  if (!fs::exists(d)) return 0;
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(d), fs::directory_iterator{}));
}

struct LocalServer {
  httplib::Server svr;
  int port = 0;
  std::thread thread;

  LocalServer() = default;
  void start() {
    port = svr.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }
  ~LocalServer() {
    svr.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

std::string completion_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

CompletionRequest plain_request(const std::string& prompt = "Rate this.") {
  CompletionRequest req;
  req.system_prompt = "Answer as asked.";
  req.prompt = prompt;
  req.tag = {"r1", "baseline", "v1"};
  return req;
}

}  // namespace

TEST_CASE("simulated respondent regimes") {
  const auto spec = study1();
  const auto split = split_items(*spec, {"attitude"});
  const auto r = uniform_respondent(*spec, 6);
  SimulatedBackend sim(identity_config());

  const auto omni = build_prompt(Approach::omni, r, *spec, split.target);
  CHECK(parse(sim.complete(request_for(omni)), 4) == std::vector<int>{6, 6, 6, 6});

  const auto base = build_prompt(Approach::baseline, r, *spec, split.target);
  CHECK(parse(sim.complete(request_for(base)), 4) == std::vector<int>{4, 4, 4, 4});

  const auto persona = generate_persona(r, *spec, split.prior, sim);
  CHECK_THAT(persona.text, ContainsSubstring("sits at about 6.0"));
  const auto mirror_b = build_prompt(Approach::mirror, r, *spec, split.target, persona);
  CHECK(parse(sim.complete(request_for(mirror_b)), 4) == std::vector<int>{6, 6, 6, 6});

  const auto demo = build_prompt(Approach::demo, r, *spec, split.target);
  const auto d = parse(sim.complete(request_for(demo)), 4);
  CHECK(std::set<int>(d.begin(), d.end()).size() == 1);
  CHECK(sim.calls() == 5);
}

TEST_CASE("simulated replies are seeded and deterministic") {
  const auto pop = population(30, 2);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  SimulatedBackend a(identity_config(0.8, 11)), b(identity_config(0.8, 11)), c(identity_config(0.8, 12));
  int differs = 0;
  for (const auto& r : pop.respondents()) {
    const auto req = request_for(build_prompt(Approach::omni, r, spec, split.target));
    const auto ra = a.complete(req);
    CHECK(ra == b.complete(req));
    CHECK(ra == a.complete(req));
    differs += ra != c.complete(req);
  }
  CHECK(differs > 0);
  CHECK(a.identity() == "simulated(noise=0.8,seed=11)");
}

TEST_CASE("baseline variance collapses while omni varies") {
  const auto pop = population(150, 4);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  SimulatedBackend sim(identity_config());
  std::map<std::string, std::vector<int>> base, omni;
  for (const auto& r : pop.respondents()) {
    const auto rb = parse(sim.complete(request_for(build_prompt(Approach::baseline, r, spec, split.target))), 4);
    const auto ro = parse(sim.complete(request_for(build_prompt(Approach::omni, r, spec, split.target))), 4);
    for (std::size_t k = 0; k < 4; ++k) {
      base[split.target[k]].push_back(rb[k]);
      omni[split.target[k]].push_back(ro[k]);
    }
  }
  for (const auto& id : split.target) {
    CHECK(variance(base[id]) == 0.0);
    CHECK(variance(omni[id]) > 0.0);
  }
}

TEST_CASE("mirror answers depend only on the persona") {
  const auto pop = population(60, 5);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  SimulatedBackend sim(identity_config());
  int agree = 0;
  for (const auto& r : pop.respondents()) {
    const auto persona = generate_persona(r, spec, split.prior, sim);
    auto shuffled = r;
    for (const auto& id : split.prior) shuffled.answers[id] = 1;
    const auto m1 = sim.complete(request_for(build_prompt(Approach::mirror, r, spec, split.target, persona)));
    const auto m2 = sim.complete(request_for(build_prompt(Approach::mirror, shuffled, spec, split.target, persona)));
    CHECK(m1 == m2);
    agree += m1 == sim.complete(request_for(build_prompt(Approach::omni, r, spec, split.target)));
  }
  // Stances are rounded to one decimal in the persona; rounding may move an answer across a .5 boundary.
  CHECK(agree >= 54);
}

TEST_CASE("persona names every prior factor") {
  const auto pop = population(5, 6);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  SimulatedBackend sim(identity_config());
  const auto p = generate_persona(pop.respondents()[0], spec, split.prior, sim);
  const auto stances = llm::detail::parse_persona_stances(p.text);
  CHECK(stances.size() == 5);
  for (const auto& lv : spec.latents())
    if (lv.name != "attitude") CHECK(stances.count(lv.name) == 1);

  auto req = plain_request();
  req.kind = RequestKind::persona;
  req.context = build_prompt(Approach::baseline, pop.respondents()[0], spec, split.target).context;
  CHECK(code_of([&] { sim.complete(req); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { sim.complete(plain_request()); }) == ErrorCode::invalid_argument);
}

TEST_CASE("simulated_respond and config validation") {
  const auto pop = population(3, 7);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  const auto b = build_prompt(Approach::omni, pop.respondents()[0], spec, split.target);
  const auto cfg = identity_config();
  CHECK(parse(simulated_respond(b, pop.respondents()[0], cfg), 4).size() == 4);
  CHECK(code_of([&] { simulated_respond(b, pop.respondents()[1], cfg); }) == ErrorCode::invalid_argument);

  auto bad = cfg;
  bad.noise = -1;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { cfg.validate({"attitude", "clutter"}); }) == ErrorCode::invalid_argument);
  CHECK_NOTHROW(cfg.validate({"attitude"}));
  auto req = plain_request("");
  CHECK(code_of([&] { req.validate(); }) == ErrorCode::invalid_argument);
}

TEST_CASE("cache round trip") {
  const auto dir = fresh_dir("cache");
  const auto pop = population(20, 8);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  auto inner = std::make_shared<SimulatedBackend>(identity_config(0.5, 3));
  CachedBackend cached(inner, dir);

  std::vector<std::string> first;
  for (const auto& r : pop.respondents()) first.push_back(cached.complete(request_for(build_prompt(Approach::baseline, r, spec, split.target))));
  CHECK(cached.misses() == 20);
  CHECK(inner->calls() == 20);
  CHECK(file_count(dir) == 20);

  for (std::size_t i = 0; i < pop.size(); ++i) {
    CHECK(cached.complete(request_for(build_prompt(Approach::baseline, pop.respondents()[i], spec, split.target))) == first[i]);
  }
  CHECK(cached.hits() == 20);
  CHECK(inner->calls() == 20);

  const auto entry = nlohmann::json::parse(read_text_file(fs::directory_iterator(dir)->path()));
  CHECK(entry.contains("fingerprint"));
  CHECK(entry.contains("reply"));
  CHECK(entry.contains("timestamp"));
  CHECK(entry["fingerprint"]["template_version"] == "v1");

  CachedBackend reopened(inner, dir);
  CHECK(reopened.complete(request_for(build_prompt(Approach::baseline, pop.respondents()[0], spec, split.target))) == first[0]);
  CHECK(reopened.hits() == 1);
  fs::remove_all(dir);
}

TEST_CASE("cache key covers the request content") {
  const auto base = plain_request();
  const auto k = cache_key(base, "x");
  CHECK(k.size() == 64);
  CHECK(cache_key(base, "x") == k);
  auto r = base;
  r.prompt += " ";
  CHECK(cache_key(r, "x") != k);
  r = base;
  r.model = "other";
  CHECK(cache_key(r, "x") != k);
  r = base;
  r.temperature = 0.7;
  CHECK(cache_key(r, "x") != k);
  r = base;
  r.tag.template_version = "v2";
  CHECK(cache_key(r, "x") != k);
  r = base;
  r.tag.respondent_id = "r2";
  CHECK(cache_key(r, "x") != k);
  CHECK(cache_key(base, "y") != k);
  r = base;
  r.max_tokens = 99;
  CHECK(cache_key(r, "x") == k);
}

TEST_CASE("corrupt cache entries are refetched") {
  const auto dir = fresh_dir("corrupt");
  const auto pop = population(2, 9);
  const auto req = request_for(build_prompt(Approach::omni, pop.respondents()[0], pop.spec(), split_items(pop.spec(), {"attitude"}).target));
  auto inner = std::make_shared<SimulatedBackend>(identity_config());
  CachedBackend cached(inner, dir);
  const auto reply = cached.complete(req);
  write_text_file(dir / (cache_key(req, inner->identity()) + ".json"), "{truncated");
  CHECK(cached.complete(req) == reply);
  CHECK(cached.misses() == 2);
  CHECK(cached.complete(req) == reply);
  CHECK(cached.hits() == 1);
  fs::remove_all(dir);
}

TEST_CASE("concurrent cached calls match sequential replies") {
  const auto dir = fresh_dir("parallel");
  const auto pop = population(120, 10);
  const auto& spec = pop.spec();
  const auto split = split_items(spec, {"attitude"});
  std::vector<CompletionRequest> reqs;
  for (const auto& r : pop.respondents())
    for (auto a : {Approach::baseline, Approach::demo, Approach::omni})
      reqs.push_back(request_for(build_prompt(a, r, spec, split.target)));

  SimulatedBackend plain(identity_config(0.4, 5));
  std::vector<std::string> expected;
  for (const auto& q : reqs) expected.push_back(plain.complete(q));

  CachedBackend cached(std::make_shared<SimulatedBackend>(identity_config(0.4, 5)), dir);
  std::vector<std::string> got(reqs.size());
  ::mirror::detail::parallel_for(reqs.size(), 8, [&](std::size_t i) { got[i] = cached.complete(reqs[i]); });
  CHECK(got == expected);
  ::mirror::detail::parallel_for(reqs.size(), 8, [&](std::size_t i) { got[i] = cached.complete(reqs[i]); });
  CHECK(got == expected);
  CHECK(cached.hits() == reqs.size());
  fs::remove_all(dir);
}

TEST_CASE("http backend sends a chat completion") {
  LocalServer s;
  std::string auth, body_seen, path_seen;
  s.svr.Post(R"(/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    body_seen = req.body;
    path_seen = req.path;
    res.set_content(completion_body("[4, 5]"), "application/json");
  });
  s.start();

  HttpConfig cfg;
  cfg.base_url = s.url();
  cfg.api_key = "k-123";
  HttpBackend http(cfg, [](auto) {});
  auto req = plain_request();
  req.temperature = 0.2;
  req.max_tokens = 64;
  CHECK(http.complete(req) == "[4, 5]");
  CHECK(auth == "Bearer k-123");
  CHECK(path_seen == "/v1/chat/completions");
  const auto j = nlohmann::json::parse(body_seen);
  CHECK(j["model"] == "gpt-4o");
  CHECK(j["temperature"] == 0.2);
  CHECK(j["max_tokens"] == 64);
  REQUIRE(j["messages"].size() == 2);
  CHECK(j["messages"][0]["role"] == "system");
  CHECK(j["messages"][1]["content"] == "Rate this.");
  CHECK(http.identity() == "http(http://127.0.0.1:" + std::to_string(s.port) + "/v1)");
}

TEST_CASE("http backend retries transient failures") {
  LocalServer s;
  std::atomic<int> hits{0};
  s.svr.Post(R"(/v1/chat/completions)", [&](const httplib::Request&, httplib::Response& res) {
    const int n = ++hits;
    if (n == 1) {
      res.status = 429;
    } else if (n == 2) {
      res.status = 503;
    } else {
      res.set_content(completion_body("ok"), "application/json");
    }
  });
  s.start();

  HttpConfig cfg;
  cfg.base_url = s.url();
  cfg.api_key = "k";
  std::vector<long long> slept;
  HttpBackend http(cfg, [&](std::chrono::milliseconds d) { slept.push_back(d.count()); });
  CHECK(http.complete(plain_request()) == "ok");
  CHECK(http.attempts() == 3);
  CHECK(slept == std::vector<long long>{500, 1000});
}

TEST_CASE("http backend error paths") {
  LocalServer s;
  std::atomic<int> hits{0};
  s.svr.Post(R"(/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const auto key = req.get_header_value("Authorization");
    if (key == "Bearer bad") {
      res.status = 401;
    } else if (key == "Bearer garbled") {
      res.set_content("<html>oops</html>", "text/html");
    } else if (key == "Bearer nocontent") {
      res.set_content(R"({"choices":[{"message":{"content":null}}]})", "application/json");
    } else if (key == "Bearer teapot") {
      res.status = 418;
    } else {
      res.status = 500;
    }
  });
  s.start();

  auto backend = [&](const std::string& key, int retries = 5) {
    HttpConfig cfg;
    cfg.base_url = s.url();
    cfg.api_key = key;
    cfg.max_retries = retries;
    return std::make_shared<HttpBackend>(cfg, [](auto) {});
  };

  SECTION("invalid credential: no retry, no cache write") {
    const auto dir = fresh_dir("auth");
    auto http = backend("bad");
    CachedBackend cached(http, dir);
    CHECK(code_of([&] { cached.complete(plain_request()); }) == ErrorCode::authentication);
    CHECK(http->attempts() == 1);
    CHECK(file_count(dir) == 0);
    fs::remove_all(dir);
  }
  SECTION("malformed payloads") {
    CHECK(code_of([&] { backend("garbled")->complete(plain_request()); }) == ErrorCode::malformed_response);
    CHECK(code_of([&] { backend("nocontent")->complete(plain_request()); }) == ErrorCode::malformed_response);
  }
  SECTION("non-retryable status") {
    auto http = backend("teapot");
    CHECK(code_of([&] { http->complete(plain_request()); }) == ErrorCode::http_status);
    CHECK(http->attempts() == 1);
  }
  SECTION("persistent server errors exhaust retries") {
    auto http = backend("fine", 2);
    CHECK(code_of([&] { http->complete(plain_request()); }) == ErrorCode::retries_exhausted);
    CHECK(http->attempts() == 3);
    CHECK(hits == 3);
  }
  SECTION("missing key fails before any request") {
    CHECK(code_of([&] { backend("")->complete(plain_request()); }) == ErrorCode::authentication);
    CHECK(hits == 0);
  }
}

TEST_CASE("http backend transport failure and backoff schedule") {
  int closed_port = 0;
  {
    httplib::Server probe;
    closed_port = probe.bind_to_any_port("127.0.0.1");
  }
  HttpConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(closed_port);
  cfg.api_key = "k";
  cfg.max_retries = 1;
  cfg.timeout = std::chrono::seconds(2);
  HttpBackend http(cfg, [](auto) {});
  CHECK(code_of([&] { http.complete(plain_request()); }) == ErrorCode::retries_exhausted);
  CHECK(http.attempts() == 2);

  HttpConfig sched;
  sched.base_url = "https://example.invalid";
  HttpBackend b(sched, [](auto) {});
  std::vector<long long> ms;
  for (int a = 1; a <= 9; ++a) ms.push_back(b.backoff(a).count());
  CHECK(ms == std::vector<long long>{500, 1000, 2000, 4000, 8000, 16000, 30000, 30000, 30000});

  sched.base_url = "ftp://nope";
  CHECK(code_of([&] { HttpBackend bad(sched); }) == ErrorCode::invalid_argument);
}
