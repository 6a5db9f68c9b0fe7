#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protex/error.hpp"
#include "protex/util.hpp"

namespace protex::schema {

enum class Category { gen, ie, ae, inter, site, soe };

inline constexpr Category kAllCategories[] = {Category::gen,   Category::ie,   Category::ae,
                                              Category::inter, Category::site, Category::soe};

std::string_view to_string(Category c);
/// Throws UnknownCategory.
Category parse_category(std::string_view s);
/// Comma-separated list; "all" or empty means every category.
std::vector<Category> parse_category_list(std::string_view s);

struct ValidationIssue {
  std::string path;  // JSON-pointer-like, e.g. "/schedule_of_events/0/procedures"
  std::string kind;  // missing_required, type_mismatch, unexpected_field
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;

  bool valid() const { return errors.empty(); }
  void merge(const ValidationReport& other, const std::string& prefix = {});
  json to_json() const;
  static ValidationReport from_json(const json& j);
};

/// Structural check of `value` against a JSON-Schema subset: type (string,
/// integer, number, boolean, scalar, object, array, null, or a list of
/// these), properties, required, items. Optional properties also accept
/// null. Unknown properties produce warnings.
ValidationReport validate_value(const json& schema, const json& value, const std::string& path = {});

struct ElementSpec {
  std::string element_id;
  std::string name;
  Category category = Category::gen;
  /// Schema of the element value: an object of the element's fields.
  json schema;
  std::vector<std::string> retrieval_queries;
  std::string instructions;
  std::string prompt_template;
  double weight = 0.0;
  std::optional<std::string> group_id;

  /// Top-level field names of the element value, in schema order.
  std::vector<std::string> fields() const;
  json to_json() const;
};

struct CategorySpec {
  Category category = Category::gen;
  std::string title;
  /// Shape of a whole-category output document (one JSON object per category).
  json document_schema;
  std::string standalone_instructions;
};

class Registry {
 public:
  Registry(std::string version, std::vector<CategorySpec> categories, std::vector<ElementSpec> elements);

  const std::string& version() const { return version_; }
  const std::vector<ElementSpec>& elements() const { return elements_; }
  /// Throws UnknownElement.
  const ElementSpec& element(const std::string& element_id) const;
  bool contains(const std::string& element_id) const { return by_id_.count(element_id) > 0; }
  const CategorySpec& category(Category c) const;
  /// Prompt template by name ("extract", "repair", "judge", ...). Throws
  /// NotFound.
  const std::string& prompt(const std::string& name) const;
  /// In table order.
  std::vector<const ElementSpec*> category_elements(Category c) const;
  /// Elements sharing a group_id (or the element alone), in table order.
  std::vector<const ElementSpec*> group_of(const std::string& element_id) const;

  /// Throws UnknownElement.
  ValidationReport validate_instance(const std::string& element_id, const json& value) const;

  /// Throws RegistryIntegrityError: duplicate ids, group spanning
  /// categories, negative weights, positive weights not summing to 1.
  void check_integrity() const;
  json to_json() const;

  /// Loads one category file per category from `dir` (gen.json, ...) with
  /// prompt templates from `prompts_dir`.
  static Registry load(const fs::path& dir, const fs::path& prompts_dir);
  /// Built from the registry and prompt files bundled into the library.
  static Registry load_default();
  /// `files` maps "registry/<cat>.json" and "prompts/<name>.txt" to contents.
  static Registry from_files(const std::map<std::string, std::string>& files);

 private:
  std::string version_;
  std::vector<CategorySpec> categories_;
  std::vector<ElementSpec> elements_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::string> prompts_;
};

const Registry& default_registry();

/// Values stored under `key` at the shallowest nesting depth where it
/// occurs, in document order.
std::vector<json> find_key(const json& document, const std::string& key);

/// Element value carved out of a whole-category document: each of the
/// element's fields is located by find_key(); multiple array occurrences are
/// concatenated, otherwise the first occurrence wins. Returns nullopt when
/// none of the fields appear.
std::optional<json> element_value_from_document(const ElementSpec& spec, const json& document);

/// Validates a whole-category document against the category shape and each
/// element carved from it.
ValidationReport validate_category_document(const Registry& registry, Category category, const json& document);

/// Fills `{name}` placeholders; unknown placeholders are left untouched.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

}  // namespace protex::schema
