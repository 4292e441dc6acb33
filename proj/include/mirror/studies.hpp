#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mirror/bundled_assets.hpp"
#include "mirror/survey.hpp"

namespace mirror {

// Bundled study definitions. Item wording is the published questionnaire
// subset; only those items are available.
inline const std::vector<std::string>& builtin_study_names() {
  static const std::vector<std::string> names{"study1", "study2_case1", "study2_case2"};
  return names;
}

inline SurveySpec builtin_study(std::string_view name) {
  auto text = assets::find("data/" + std::string(name) + ".json");
  if (!text) throw Error(ErrorCode::invalid_argument, "no bundled study named '" + std::string(name) + "'");
  return load_study_spec(*text);
}

/// Accepts `builtin:<name>` or a path to a study-spec JSON file.
inline std::shared_ptr<const SurveySpec> resolve_study_spec(std::string_view ref) {
  constexpr std::string_view kPrefix = "builtin:";
  if (ref.starts_with(kPrefix)) return std::make_shared<const SurveySpec>(builtin_study(ref.substr(kPrefix.size())));
  return std::make_shared<const SurveySpec>(load_study_spec(read_text_file(std::filesystem::path(ref))));
}

}  // namespace mirror
