#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mirror {

enum class ErrorCode {
  // survey_core
  parse,
  invalid_spec,
  duplicate_item,
  unknown_latent,
  self_loop,
  cyclic_paths,
  unknown_column,
  missing_column,
  out_of_range,
  non_integer,
  // plssem
  zero_variance,
  degenerate_block,
  not_converged,
  singular_predictors,
  bootstrap_failures,
  // metrics
  empty_input,
  scale_mismatch,
  respondent_mismatch,
  item_mismatch,
  // prompting
  persona_required,
  persona_forbidden,
  missing_prior_answer,
  template_mismatch,
  no_answer_block,
  wrong_count,
  empty_reply,
  // llm_client
  authentication,
  retries_exhausted,
  malformed_response,
  http_status,
  // shared
  invalid_argument,
  io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::invalid_spec: return "invalid_spec";
    case ErrorCode::duplicate_item: return "duplicate_item";
    case ErrorCode::unknown_latent: return "unknown_latent";
    case ErrorCode::self_loop: return "self_loop";
    case ErrorCode::cyclic_paths: return "cyclic_paths";
    case ErrorCode::unknown_column: return "unknown_column";
    case ErrorCode::missing_column: return "missing_column";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::non_integer: return "non_integer";
    case ErrorCode::zero_variance: return "zero_variance";
    case ErrorCode::degenerate_block: return "degenerate_block";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::singular_predictors: return "singular_predictors";
    case ErrorCode::bootstrap_failures: return "bootstrap_failures";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::scale_mismatch: return "scale_mismatch";
    case ErrorCode::respondent_mismatch: return "respondent_mismatch";
    case ErrorCode::item_mismatch: return "item_mismatch";
    case ErrorCode::persona_required: return "persona_required";
    case ErrorCode::persona_forbidden: return "persona_forbidden";
    case ErrorCode::missing_prior_answer: return "missing_prior_answer";
    case ErrorCode::template_mismatch: return "template_mismatch";
    case ErrorCode::no_answer_block: return "no_answer_block";
    case ErrorCode::wrong_count: return "wrong_count";
    case ErrorCode::empty_reply: return "empty_reply";
    case ErrorCode::authentication: return "authentication";
    case ErrorCode::retries_exhausted: return "retries_exhausted";
    case ErrorCode::malformed_response: return "malformed_response";
    case ErrorCode::http_status: return "http_status";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mirror
