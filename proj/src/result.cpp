#include "protex/result.hpp"

namespace protex {

std::string_view to_string(Mode m) { return m == Mode::rag ? "rag" : "standalone"; }

Mode parse_mode(std::string_view s) {
  if (s == "rag") return Mode::rag;
  if (s == "standalone") return Mode::standalone;
  throw Error(ErrorCode::InvalidArgument, "mode must be rag or standalone, got '" + std::string(s) + "'");
}

json ExtractionResult::to_json() const {
  json prov = json::array();
  for (const auto& p : provenance) {
    json e = {{"ref", p.ref}, {"first_page", p.first_page}, {"last_page", p.last_page}};
    if (p.similarity) e["similarity"] = *p.similarity;
    prov.push_back(std::move(e));
  }
  json j = {{"element_id", element_id},
            {"category", std::string(schema::to_string(category))},
            {"mode", std::string(protex::to_string(mode))},
            {"value", value ? *value : json(nullptr)},
            {"provenance", prov},
            {"model_config_id", model_config_id},
            {"raw_model_output", raw_model_output},
            {"validation", validation.to_json()},
            {"needs_review", needs_review},
            {"flags", flags},
            {"attempts", attempts},
            {"created_at", created_at}};
  if (error) j["error"] = {{"code", error->code}, {"message", error->message}};
  return j;
}

ExtractionResult ExtractionResult::from_json(const json& j) {
  ExtractionResult r;
  try {
    r.element_id = j.at("element_id").get<std::string>();
    r.category = schema::parse_category(j.at("category").get<std::string>());
    r.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("value") && !j["value"].is_null()) r.value = j["value"];
    for (const auto& p : j.value("provenance", json::array())) {
      ProvenanceRef ref{p.at("ref").get<std::string>(), p.value("first_page", 0), p.value("last_page", 0), std::nullopt};
      if (p.contains("similarity")) ref.similarity = p["similarity"].get<double>();
      r.provenance.push_back(std::move(ref));
    }
    r.model_config_id = j.value("model_config_id", "");
    r.raw_model_output = j.value("raw_model_output", "");
    if (j.contains("validation")) r.validation = schema::ValidationReport::from_json(j["validation"]);
    r.needs_review = j.value("needs_review", false);
    if (j.contains("error")) r.error = ResultError{j["error"].value("code", ""), j["error"].value("message", "")};
    r.flags = j.value("flags", std::vector<std::string>{});
    r.attempts = j.value("attempts", 0);
    r.created_at = j.value("created_at", "");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed extraction result: ") + e.what());
  }
  return r;
}

}  // namespace protex

namespace protex {

GenerationOutcome generate_json(const std::function<std::string(const std::string&)>& call, const std::string& prompt,
                                const std::function<schema::ValidationReport(const json&)>& validate,
                                int max_attempts, const std::string& repair_template) {
  GenerationOutcome out;
  std::string current = prompt;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    out.attempts = attempt;
    out.raw_output = call(current);
    std::vector<std::string> problems;
    const auto parsed = parse_embedded_json(out.raw_output);
    if (!parsed) {
      problems.push_back("no JSON object could be parsed from the reply");
    } else if (!parsed->is_object()) {
      problems.push_back("the reply must be a JSON object");
    } else {
      out.parsed = *parsed;
      out.validation = validate(*parsed);
      if (out.validation.valid()) return out;
      for (const auto& e : out.validation.errors) problems.push_back(e.path + ": " + e.message);
    }
    std::string listed;
    for (const auto& p : problems) listed += "- " + p + "\n";
    current = prompt + schema::fill_template(repair_template, {{"problems", listed}, {"previous", out.raw_output}});
  }
  return out;
}

}  // namespace protex
