#include <catch_amalgamated.hpp>

#include <random>
#include <set>

#include "mirror/mirror.hpp"

using namespace mirror;
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

std::string tiny_spec_json(const std::string& paths) {
  return R"({"name":"tiny","scale":{"min":1,"max":7},
    "latents":[{"name":"A","items":[{"id":"a1","text":"A one"},{"id":"a2","text":"A two"}]},
               {"name":"B","role":"outcome","items":[{"id":"b1","text":"B one"}]}],
    "paths":)" + paths + R"(,
    "demographics":[{"name":"gender","values":["female","male"]},{"name":"age","kind":"numeric"}]})";
}

std::shared_ptr<const SurveySpec> tiny_spec() {
  return std::make_shared<const SurveySpec>(load_study_spec(tiny_spec_json(R"([{"from":"A","to":"B"}])")));
}

}  // namespace

TEST_CASE("bundled study 1 spec") {
  const auto s = builtin_study("study1");
  CHECK(s.latents().size() == 6);
  CHECK(s.item_ids().size() == 23);
  CHECK(s.scale() == LikertScale{1, 7});
  std::set<std::string> from;
  for (const auto& p : s.paths()) {
    CHECK(p.to == "attitude");
    from.insert(p.from);
  }
  CHECK(from == std::set<std::string>{"pleasure", "credibility", "economic", "intrusiveness", "clutter"});
}

TEST_CASE("bundled study 2 specs") {
  const auto c1 = builtin_study("study2_case1");
  const auto c2 = builtin_study("study2_case2");
  CHECK(c1.latents().size() == 5);
  CHECK(c1.item_ids().size() == 15);
  CHECK(c1.paths().size() == 4);
  CHECK(c2.latents().size() == 5);
  CHECK(c2.paths().size() == 9);
  std::set<std::string> rows;
  for (const auto& p : c2.paths()) rows.insert(to_string(p));
  CHECK(rows == std::set<std::string>{"LIKE -> TRUST", "LIKE -> SAT", "LIKE -> LOY", "COMP -> TRUST", "COMP -> SAT",
                                      "COMP -> LOY", "TRUST -> SAT", "TRUST -> LOY", "SAT -> LOY"});
}

TEST_CASE("spec validation errors") {
  CHECK(code_of([] { load_study_spec(tiny_spec_json(R"([{"from":"A","to":"A"}])")); }) == ErrorCode::self_loop);
  CHECK(code_of([] { load_study_spec(tiny_spec_json(R"([{"from":"A","to":"Z"}])")); }) == ErrorCode::unknown_latent);
  CHECK(code_of([] { load_study_spec(tiny_spec_json(R"([{"from":"A","to":"B"},{"from":"B","to":"A"}])")); }) ==
        ErrorCode::cyclic_paths);
  CHECK(code_of([] { load_study_spec("{not json"); }) == ErrorCode::parse);
  CHECK(code_of([] {
          SurveySpec("dup", {1, 7}, {{"A", "", LatentRole::factor, {{"x", "t"}}}, {"B", "", LatentRole::factor, {{"x", "u"}}}},
                     {}, {});
        }) == ErrorCode::duplicate_item);
  CHECK(code_of([] { SurveySpec("empty", {1, 7}, {{"A", "", LatentRole::factor, {}}}, {}, {}); }) ==
        ErrorCode::invalid_spec);
  CHECK(code_of([] { SurveySpec("scale", {5, 3}, {{"A", "", LatentRole::factor, {{"x", "t"}}}}, {}, {}); }) ==
        ErrorCode::invalid_spec);
}

TEST_CASE("spec serialization round-trips") {
  for (const auto& name : builtin_study_names()) {
    const auto s = builtin_study(name);
    const auto again = load_study_spec(to_json(s).dump());
    CHECK(again == s);
    const SurveySpec copy = again;
    CHECK(copy.item(copy.item_ids().back()).text == s.item(s.item_ids().back()).text);
  }
}

TEST_CASE("load_responses") {
  const auto spec = tiny_spec();
  SECTION("valid rows") {
    const auto m = load_responses("respondent_id,gender,age,a1,a2,b1\nr1,female,30,1,2,3\nr2,male,,7,6,5\nr3,NA,41,4,4,4\n", spec);
    CHECK(m.size() == 3);
    CHECK(m.items() == std::vector<std::string>{"a1", "a2", "b1"});
    CHECK(m.find("r2")->answers.at("a1") == 7);
    CHECK_FALSE(m.find("r2")->demographics.at("age").has_value());
    CHECK_FALSE(m.find("r3")->demographics.at("gender").has_value());
  }
  SECTION("out of range cell names row and item") {
    try {
      load_responses("respondent_id,gender,age,a1,a2,b1\nr1,female,30,1,8,3\n", spec);
      FAIL("accepted out-of-range value");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::out_of_range);
      CHECK_THAT(e.what(), ContainsSubstring("row 1") && ContainsSubstring("a2"));
    }
  }
  SECTION("missing item column") {
    CHECK(code_of([&] { load_responses("respondent_id,gender,age,a1,b1\nr1,female,30,1,3\n", spec); }) ==
          ErrorCode::missing_column);
  }
  SECTION("missing demographic column") {
    CHECK(code_of([&] { load_responses("respondent_id,age,a1,a2,b1\nr1,30,1,2,3\n", spec); }) == ErrorCode::missing_column);
  }
  SECTION("non-integer and unknown column") {
    CHECK(code_of([&] { load_responses("respondent_id,gender,age,a1,a2,b1\nr1,female,30,1,2.5,3\n", spec); }) ==
          ErrorCode::non_integer);
    CHECK(code_of([&] { load_responses("respondent_id,gender,age,a1,a2,b1,zz\nr1,female,30,1,2,3,4\n", spec); }) ==
          ErrorCode::unknown_column);
  }
  SECTION("csv round trip") {
    const auto m = load_responses("respondent_id,gender,age,a1,a2,b1\nr1,\"female\",30,1,2,3\nr2,male,,7,6,5\n", spec);
    const auto again = load_responses(write_responses_csv(m), spec);
    CHECK(again.values() == m.values());
    CHECK(again.find("r2")->demographics == m.find("r2")->demographics);
  }
}

TEST_CASE("accepted matrices have no out-of-range cells") {
  const auto spec = tiny_spec();
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> cell(0, 9);
  int accepted = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::string csv = "respondent_id,gender,age,a1,a2,b1\n";
    for (int r = 0; r < 4; ++r) {
      csv += "r" + std::to_string(r) + ",female,30";
      for (int c = 0; c < 3; ++c) csv += "," + std::to_string(cell(rng));
      csv += "\n";
    }
    try {
      const auto m = load_responses(csv, spec);
      ++accepted;
      const auto v = m.values();
      CHECK(v.minCoeff() >= 1);
      CHECK(v.maxCoeff() <= 7);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::out_of_range);
      CHECK_THAT(e.what(), ContainsSubstring("row "));
    }
  }
  CHECK(accepted > 0);
}

TEST_CASE("split_items") {
  const auto s1 = builtin_study("study1");
  auto sp = split_items(s1, {"attitude"});
  CHECK(sp.target.size() == 4);
  CHECK(sp.prior.size() == 19);

  const auto c1 = builtin_study("study2_case1");
  sp = split_items(c1, {"LOY"});
  CHECK(sp.target.size() == 3);
  CHECK(sp.prior.size() == 12);

  const auto c2 = builtin_study("study2_case2");
  sp = split_items(c2, {"TRUST", "SAT", "LOY"});
  CHECK(sp.target.size() == 10);
  CHECK(sp.prior.size() == 5);

  CHECK(code_of([&] { split_items(c2, {}); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { split_items(c2, {"NOPE"}); }) == ErrorCode::unknown_latent);
  CHECK(code_of([&] { split_items(c2, {"LIKE", "COMP", "TRUST", "SAT", "LOY"}); }) == ErrorCode::invalid_argument);
}

TEST_CASE("split_items partitions the item set") {
  for (const auto& name : builtin_study_names()) {
    const auto s = builtin_study(name);
    const auto n = s.latents().size();
    for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
      std::vector<std::string> targets;
      for (std::size_t l = 0; l < n; ++l) {
        if (mask & (std::size_t{1} << l)) targets.push_back(s.latents()[l].name);
      }
      const auto sp = split_items(s, targets);
      std::vector<std::string> all = sp.prior;
      all.insert(all.end(), sp.target.begin(), sp.target.end());
      std::set<std::string> uniq(all.begin(), all.end());
      CHECK(uniq.size() == all.size());
      CHECK(uniq == std::set<std::string>(s.item_ids().begin(), s.item_ids().end()));
    }
  }
}

TEST_CASE("response matrix select and restrict") {
  const auto spec = tiny_spec();
  const auto m = load_responses("respondent_id,gender,age,a1,a2,b1\nr1,female,30,1,2,3\nr2,male,40,7,6,5\n", spec);
  const auto r = m.select({"r2"}).restrict({"b1"});
  CHECK(r.size() == 1);
  CHECK(r.column("b1") == std::vector<int>{5});
  CHECK(code_of([&] { m.select({"nobody"}); }) == ErrorCode::respondent_mismatch);
}

TEST_CASE("csv parsing") {
  const auto rows = detail::parse_csv("\xEF\xBB\xBF" "a,\"b,c\",\"d\"\"e\"\r\n\r\n1,2,3\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == detail::CsvRow{"a", "b,c", "d\"e"});
  CHECK(detail::csv_line({"x,y", "z"}) == "\"x,y\",z\n");
}
