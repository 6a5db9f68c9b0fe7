#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "protex/schema.hpp"
#include "protex/util.hpp"

namespace protex {

enum class Mode { rag, standalone };

std::string_view to_string(Mode m);
/// Throws InvalidArgument.
Mode parse_mode(std::string_view s);

/// A chunk id ("<doc>:c00012"), a page reference ("page:7") or "document"
/// for a whole-document prompt.
struct ProvenanceRef {
  std::string ref;
  int first_page = 0;
  int last_page = 0;
  std::optional<double> similarity;
};

struct ResultError {
  std::string code;
  std::string message;
};

struct ExtractionResult {
  std::string element_id;
  schema::Category category = schema::Category::gen;
  Mode mode = Mode::rag;
  std::optional<json> value;
  std::vector<ProvenanceRef> provenance;
  std::string model_config_id;
  std::string raw_model_output;
  schema::ValidationReport validation;
  bool needs_review = false;
  std::optional<ResultError> error;
  /// Free-form markers, e.g. "conflicting_visit_time", "heuristic_fallback".
  std::vector<std::string> flags;
  int attempts = 0;
  std::string created_at;

  json to_json() const;
  static ExtractionResult from_json(const json& j);
};

struct GenerationOutcome {
  /// Last response that parsed to a JSON object, valid or not.
  std::optional<json> parsed;
  schema::ValidationReport validation;
  std::string raw_output;
  int attempts = 0;
};

/// Calls `call` with `prompt` until the reply parses to a JSON object that
/// `validate` accepts, at most `max_attempts` times. Each retry appends the
/// repair template filled with {problems} and {previous}.
GenerationOutcome generate_json(const std::function<std::string(const std::string&)>& call, const std::string& prompt,
                                const std::function<schema::ValidationReport(const json&)>& validate,
                                int max_attempts, const std::string& repair_template);

}  // namespace protex
