#include "protex/schema.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "protex/bundled_data.hpp"

namespace protex::schema {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::gen: return "gen";
    case Category::ie: return "ie";
    case Category::ae: return "ae";
    case Category::inter: return "inter";
    case Category::site: return "site";
    case Category::soe: return "soe";
  }
  return "gen";
}

Category parse_category(std::string_view s) {
  for (Category c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorCode::UnknownCategory, "unknown category '" + std::string(s) + "'");
}

std::vector<Category> parse_category_list(std::string_view s) {
  const std::string text(trim(s));
  if (text.empty() || text == "all") return {std::begin(kAllCategories), std::end(kAllCategories)};
  std::vector<Category> out;
  for (const auto& part : split(text, ',')) {
    const Category c = parse_category(trim(part));
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

void ValidationReport::merge(const ValidationReport& other, const std::string& prefix) {
  for (auto issue : other.errors) {
    issue.path = prefix + issue.path;
    errors.push_back(std::move(issue));
  }
  for (auto issue : other.warnings) {
    issue.path = prefix + issue.path;
    warnings.push_back(std::move(issue));
  }
}

namespace {

json issues_to_json(const std::vector<ValidationIssue>& issues) {
  json out = json::array();
  for (const auto& i : issues) out.push_back({{"path", i.path}, {"kind", i.kind}, {"message", i.message}});
  return out;
}

std::vector<ValidationIssue> issues_from_json(const json& j) {
  std::vector<ValidationIssue> out;
  for (const auto& i : j) out.push_back({i.value("path", ""), i.value("kind", ""), i.value("message", "")});
  return out;
}

bool matches_type(const std::string& type, const json& v) {
  if (type == "string") return v.is_string();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "scalar") return v.is_string() || v.is_number();
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "null") return v.is_null();
  throw Error(ErrorCode::RegistryIntegrityError, "unsupported schema type '" + type + "'");
}

std::string type_name(const json& v) {
  if (v.is_string()) return "string";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_boolean()) return "boolean";
  if (v.is_object()) return "object";
  if (v.is_array()) return "array";
  return "null";
}

void check(const json& schema, const json& value, const std::string& path, ValidationReport& report) {
  if (!schema.is_object() || !schema.contains("type")) return;
  std::vector<std::string> types;
  if (schema["type"].is_array()) {
    types = schema["type"].get<std::vector<std::string>>();
  } else {
    types.push_back(schema["type"].get<std::string>());
  }
  bool ok = false;
  for (const auto& t : types) ok = ok || matches_type(t, value);
  if (!ok) {
    report.errors.push_back({path.empty() ? "/" : path, "type_mismatch",
                             "expected " + join(types, " or ") + ", got " + type_name(value)});
    return;
  }
  if (value.is_object()) {
    const json props = schema.value("properties", json::object());
    std::set<std::string> required;
    if (schema.contains("required")) required = schema["required"].get<std::set<std::string>>();
    for (const auto& name : required) {
      if (!value.contains(name) || value[name].is_null()) {
        report.errors.push_back({path + "/" + name, "missing_required", "required field '" + name + "' is missing"});
      }
    }
    for (const auto& [name, child] : value.items()) {
      if (!props.contains(name)) {
        report.warnings.push_back({path + "/" + name, "unexpected_field", "field '" + name + "' is not in the schema"});
        continue;
      }
      if (child.is_null() && !required.count(name)) continue;
      check(props[name], child, path + "/" + name, report);
    }
  } else if (value.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < value.size(); ++i) check(schema["items"], value[i], path + "/" + std::to_string(i), report);
  }
}

}  // namespace

json ValidationReport::to_json() const {
  return {{"valid", valid()}, {"errors", issues_to_json(errors)}, {"warnings", issues_to_json(warnings)}};
}

ValidationReport ValidationReport::from_json(const json& j) {
  ValidationReport r;
  if (j.contains("errors")) r.errors = issues_from_json(j["errors"]);
  if (j.contains("warnings")) r.warnings = issues_from_json(j["warnings"]);
  return r;
}

ValidationReport validate_value(const json& schema, const json& value, const std::string& path) {
  ValidationReport report;
  check(schema, value, path, report);
  return report;
}

// ---------------------------------------------------------------------------
// Registry

std::vector<std::string> ElementSpec::fields() const {
  std::vector<std::string> out;
  if (schema.contains("properties")) {
    for (const auto& [name, _] : schema["properties"].items()) out.push_back(name);
  }
  return out;
}

json ElementSpec::to_json() const {
  json j = {{"element_id", element_id},
            {"name", name},
            {"category", std::string(schema::to_string(category))},
            {"weight", weight},
            {"schema", schema},
            {"retrieval_queries", retrieval_queries},
            {"instructions", instructions}};
  if (group_id) j["group_id"] = *group_id;
  return j;
}

Registry::Registry(std::string version, std::vector<CategorySpec> categories, std::vector<ElementSpec> elements)
    : version_(std::move(version)), categories_(std::move(categories)), elements_(std::move(elements)) {
  for (std::size_t i = 0; i < elements_.size(); ++i) {
    if (!by_id_.emplace(elements_[i].element_id, i).second) {
      throw Error(ErrorCode::RegistryIntegrityError, "duplicate element id " + elements_[i].element_id);
    }
  }
  check_integrity();
}

const ElementSpec& Registry::element(const std::string& element_id) const {
  const auto it = by_id_.find(element_id);
  if (it == by_id_.end()) throw Error(ErrorCode::UnknownElement, "unknown element '" + element_id + "'");
  return elements_[it->second];
}

const CategorySpec& Registry::category(Category c) const {
  for (const auto& spec : categories_) {
    if (spec.category == c) return spec;
  }
  throw Error(ErrorCode::UnknownCategory, "category " + std::string(to_string(c)) + " is not in the registry");
}

const std::string& Registry::prompt(const std::string& name) const {
  const auto it = prompts_.find(name);
  if (it == prompts_.end()) throw Error(ErrorCode::NotFound, "no prompt template named '" + name + "'");
  return it->second;
}

std::vector<const ElementSpec*> Registry::category_elements(Category c) const {
  std::vector<const ElementSpec*> out;
  for (const auto& e : elements_) {
    if (e.category == c) out.push_back(&e);
  }
  return out;
}

std::vector<const ElementSpec*> Registry::group_of(const std::string& element_id) const {
  const ElementSpec& spec = element(element_id);
  if (!spec.group_id) return {&spec};
  std::vector<const ElementSpec*> out;
  for (const auto& e : elements_) {
    if (e.group_id == spec.group_id) out.push_back(&e);
  }
  return out;
}

ValidationReport Registry::validate_instance(const std::string& element_id, const json& value) const {
  return validate_value(element(element_id).schema, value);
}

void Registry::check_integrity() const {
  std::map<std::string, Category> group_category;
  std::map<Category, double> sums;
  std::map<Category, int> counts;
  for (const auto& e : elements_) {
    if (e.element_id.empty()) throw Error(ErrorCode::RegistryIntegrityError, "element with empty id");
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
      throw Error(ErrorCode::RegistryIntegrityError, e.element_id + ": weight must be >= 0");
    }
    if (!e.schema.is_object() || e.schema.value("type", "") != "object") {
      throw Error(ErrorCode::RegistryIntegrityError, e.element_id + ": element schema must be an object schema");
    }
    if (e.group_id) {
      auto [it, inserted] = group_category.emplace(*e.group_id, e.category);
      if (!inserted && it->second != e.category) {
        throw Error(ErrorCode::RegistryIntegrityError, "group " + *e.group_id + " spans categories");
      }
    }
    if (e.weight > 0.0) sums[e.category] += e.weight;
    ++counts[e.category];
  }
  for (const auto& [cat, n] : counts) {
    if (std::fabs(sums[cat] - 1.0) > 1e-9) {
      throw Error(ErrorCode::RegistryIntegrityError,
                  "positive weights of category " + std::string(to_string(cat)) + " sum to " + std::to_string(sums[cat]));
    }
  }
}

json Registry::to_json() const {
  json cats = json::array();
  for (const auto& c : categories_) {
    json elems = json::array();
    for (const auto* e : category_elements(c.category)) elems.push_back(e->to_json());
    cats.push_back({{"category", std::string(to_string(c.category))}, {"title", c.title}, {"elements", elems}});
  }
  return {{"version", version_}, {"categories", cats}};
}

Registry Registry::from_files(const std::map<std::string, std::string>& files) {
  const auto prompt = [&](const std::string& name) -> const std::string& {
    const auto it = files.find("prompts/" + name + ".txt");
    if (it == files.end()) throw Error(ErrorCode::RegistryIntegrityError, "missing prompt template " + name);
    return it->second;
  };
  std::string version;
  std::vector<CategorySpec> categories;
  std::vector<ElementSpec> elements;
  for (Category c : kAllCategories) {
    const std::string key = "registry/" + std::string(to_string(c)) + ".json";
    const auto it = files.find(key);
    if (it == files.end()) throw Error(ErrorCode::RegistryIntegrityError, "missing registry file " + key);
    try {
      const json doc = json::parse(it->second);
      if (doc.at("category").get<std::string>() != to_string(c)) {
        throw Error(ErrorCode::RegistryIntegrityError, key + ": category field does not match file name");
      }
      const std::string v = doc.at("version").get<std::string>();
      if (version.empty()) version = v;
      if (v != version) throw Error(ErrorCode::RegistryIntegrityError, key + ": version " + v + " differs from " + version);
      categories.push_back({c, doc.value("title", ""), doc.at("document_schema"), doc.value("standalone_instructions", "")});
      for (const auto& e : doc.at("elements")) {
        ElementSpec spec;
        spec.element_id = e.at("element_id").get<std::string>();
        if (spec.element_id.rfind(std::string(to_string(c)) + ".", 0) != 0) {
          throw Error(ErrorCode::RegistryIntegrityError, spec.element_id + ": id must start with its category");
        }
        spec.name = e.value("name", spec.element_id);
        spec.category = c;
        spec.schema = e.at("schema");
        spec.retrieval_queries = e.at("retrieval_queries").get<std::vector<std::string>>();
        if (spec.retrieval_queries.empty()) {
          throw Error(ErrorCode::RegistryIntegrityError, spec.element_id + ": needs at least one retrieval query");
        }
        spec.instructions = e.value("instructions", "");
        spec.prompt_template = prompt(e.value("prompt", "extract"));
        spec.weight = e.at("weight").get<double>();
        if (e.contains("group_id")) spec.group_id = e["group_id"].get<std::string>();
        elements.push_back(std::move(spec));
      }
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::RegistryIntegrityError, key + ": " + ex.what());
    }
  }
  Registry registry(version, std::move(categories), std::move(elements));
  for (const auto& [name, contents] : files) {
    if (name.rfind("prompts/", 0) == 0 && name.size() > 12 && name.substr(name.size() - 4) == ".txt") {
      registry.prompts_[name.substr(8, name.size() - 12)] = contents;
    }
  }
  for (const char* required : {"extract", "standalone", "repair", "soe", "judge", "adjudicate"}) {
    if (!registry.prompts_.count(required)) {
      throw Error(ErrorCode::RegistryIntegrityError, std::string("missing prompt template ") + required);
    }
  }
  return registry;
}

Registry Registry::load(const fs::path& dir, const fs::path& prompts_dir) {
  std::map<std::string, std::string> files;
  for (Category c : kAllCategories) {
    const std::string name = std::string(to_string(c)) + ".json";
    const fs::path p = dir / name;
    if (!fs::exists(p)) throw Error(ErrorCode::RegistryIntegrityError, "missing registry file " + p.string());
    files["registry/" + name] = read_file(p);
  }
  if (fs::is_directory(prompts_dir)) {
    for (const auto& entry : fs::directory_iterator(prompts_dir)) {
      if (entry.path().extension() == ".txt") files["prompts/" + entry.path().filename().string()] = read_file(entry.path());
    }
  }
  return from_files(files);
}

Registry Registry::load_default() {
  std::map<std::string, std::string> files;
  for (const auto& [name, contents] : bundled_files()) files[name] = std::string(contents);
  return from_files(files);
}

const Registry& default_registry() {
  static const Registry registry = Registry::load_default();
  return registry;
}

// ---------------------------------------------------------------------------
// Category documents

std::vector<json> find_key(const json& document, const std::string& key) {
  std::vector<json> out;
  std::vector<const json*> level{&document};
  while (!level.empty() && out.empty()) {
    std::vector<const json*> next;
    for (const json* node : level) {
      if (node->is_object()) {
        for (const auto& [name, child] : node->items()) {
          if (name == key) {
            out.push_back(child);
          } else {
            next.push_back(&child);
          }
        }
      } else if (node->is_array()) {
        for (const auto& child : *node) next.push_back(&child);
      }
    }
    level = std::move(next);
  }
  return out;
}

std::optional<json> element_value_from_document(const ElementSpec& spec, const json& document) {
  json value = json::object();
  for (const auto& field : spec.fields()) {
    const auto hits = find_key(document, field);
    if (hits.empty()) continue;
    bool all_arrays = true;
    for (const auto& h : hits) all_arrays = all_arrays && h.is_array();
    if (hits.size() > 1 && all_arrays) {
      json merged = json::array();
      for (const auto& h : hits) merged.insert(merged.end(), h.begin(), h.end());
      value[field] = merged;
    } else {
      value[field] = hits.front();
    }
  }
  if (value.empty()) return std::nullopt;
  return value;
}

ValidationReport validate_category_document(const Registry& registry, Category category, const json& document) {
  ValidationReport report = validate_value(registry.category(category).document_schema, document);
  for (const auto* spec : registry.category_elements(category)) {
    const auto value = element_value_from_document(*spec, document);
    if (!value) continue;
    ValidationReport r = registry.validate_instance(spec->element_id, *value);
    r.warnings.clear();
    report.merge(r, spec->element_id + ":");
  }
  return report;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

}  // namespace protex::schema
