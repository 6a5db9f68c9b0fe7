#include "protex/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "protex/error.hpp"

namespace protex::ingest {

std::string ProtocolPackage::document_text() const {
  std::string out;
  std::size_t total = 0;
  for (const auto& p : pages) total += p.text.size();
  out.reserve(total);
  for (const auto& p : pages) out += p.text;
  return out;
}

std::vector<std::size_t> ProtocolPackage::page_offsets() const {
  std::vector<std::size_t> offsets;
  offsets.reserve(pages.size());
  std::size_t at = 0;
  for (const auto& p : pages) {
    offsets.push_back(at);
    at += p.text.size();
  }
  return offsets;
}

int ProtocolPackage::page_at(std::size_t global_offset) const {
  if (pages.empty()) return 1;
  std::size_t at = 0;
  for (const auto& p : pages) {
    if (global_offset < at + p.text.size()) return p.page_index;
    at += p.text.size();
  }
  return pages.back().page_index;
}

const PageRecord& ProtocolPackage::page(int page_index) const {
  if (page_index < 1 || page_index > static_cast<int>(pages.size())) {
    throw Error(ErrorCode::InvalidArgument, "page " + std::to_string(page_index) + " out of range");
  }
  return pages[static_cast<std::size_t>(page_index - 1)];
}

std::string ProtocolPackage::content_digest() const {
  std::string material = doc_id;
  material.push_back('\0');
  for (const auto& p : pages) {
    material += std::to_string(p.page_index);
    material.push_back('\0');
    material += sha256_hex(p.text);
    material.push_back('\0');
    if (p.image_ref) material += p.image_ref->filename().string();
    material.push_back('\0');
  }
  return sha256_hex(material);
}

std::vector<CharSpan> compute_line_spans(std::string_view text) {
  std::vector<CharSpan> spans;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    spans.push_back({start, end});
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return spans;
}

void validate_package(const ProtocolPackage& pkg) {
  if (pkg.page_count <= 0) throw Error(ErrorCode::InvalidPackage, "page_count must be positive");
  if (static_cast<int>(pkg.pages.size()) != pkg.page_count) {
    throw Error(ErrorCode::PageCountMismatch,
                "page_count " + std::to_string(pkg.page_count) + " but " +
                    std::to_string(pkg.pages.size()) + " pages");
  }
  for (std::size_t i = 0; i < pkg.pages.size(); ++i) {
    const auto& page = pkg.pages[i];
    if (page.page_index != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::InvalidPackage, "page indices must be 1..page_count in order");
    }
    std::size_t prev_end = 0;
    for (const auto& span : page.line_spans) {
      if (span.start < prev_end || span.end < span.start || span.end > page.text.size()) {
        throw Error(ErrorCode::InvalidPackage,
                    "bad line span on page " + std::to_string(page.page_index));
      }
      prev_end = span.end;
    }
  }
}

namespace {

std::string page_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", index);
  return buf;
}

}  // namespace

ProtocolPackage load_package(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw Error(ErrorCode::MissingManifest, "no manifest.json in " + root.string());
  }
  json manifest;
  try {
    manifest = read_json_file(manifest_path);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidPackage, e.what());
  }
  if (!manifest.is_object() || !manifest.contains("doc_id") || !manifest["doc_id"].is_string() ||
      !manifest.contains("page_count") || !manifest["page_count"].is_number_integer()) {
    throw Error(ErrorCode::InvalidPackage, "manifest requires string doc_id and integer page_count");
  }

  ProtocolPackage pkg;
  pkg.root = root;
  pkg.doc_id = manifest["doc_id"].get<std::string>();
  if (manifest.contains("nct_id") && manifest["nct_id"].is_string()) {
    pkg.nct_id = manifest["nct_id"].get<std::string>();
  }
  pkg.page_count = manifest["page_count"].get<int>();
  pkg.source_label = manifest.value("source_label", root.filename().string());
  if (pkg.page_count <= 0) throw Error(ErrorCode::InvalidPackage, "page_count must be positive");

  struct Entry {
    int index;
    fs::path text_path;
    std::optional<fs::path> image_path;
  };
  std::vector<Entry> entries;
  if (manifest.contains("pages")) {
    if (!manifest["pages"].is_array()) throw Error(ErrorCode::InvalidPackage, "pages must be a list");
    for (const auto& p : manifest["pages"]) {
      if (!p.is_object() || !p.contains("index") || !p["index"].is_number_integer() ||
          !p.contains("text_path") || !p["text_path"].is_string()) {
        throw Error(ErrorCode::InvalidPackage, "page entries require index and text_path");
      }
      Entry e{p["index"].get<int>(), root / p["text_path"].get<std::string>(), std::nullopt};
      if (p.contains("image_path") && p["image_path"].is_string()) {
        e.image_path = root / p["image_path"].get<std::string>();
      }
      entries.push_back(std::move(e));
    }
  } else {
    for (int i = 1;; ++i) {
      const fs::path text_path = root / "pages" / (page_stem(i) + ".txt");
      if (!fs::exists(text_path)) break;
      entries.push_back({i, text_path, std::nullopt});
    }
  }

  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.index < b.index; });
  std::vector<Entry> present;
  for (auto& e : entries) {
    if (fs::exists(e.text_path)) present.push_back(std::move(e));
  }
  if (static_cast<int>(present.size()) != pkg.page_count) {
    throw Error(ErrorCode::PageCountMismatch,
                "manifest page_count " + std::to_string(pkg.page_count) + " but " +
                    std::to_string(present.size()) + " page files found");
  }

  for (std::size_t i = 0; i < present.size(); ++i) {
    auto& e = present[i];
    if (e.index != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::InvalidPackage, "page indices must be contiguous from 1");
    }
    PageRecord page;
    page.page_index = e.index;
    try {
      page.text = read_file(e.text_path);
    } catch (const Error&) {
      throw Error(ErrorCode::UnreadablePage, "cannot read page " + e.text_path.string());
    }
    if (!e.image_path) {
      const fs::path guess = root / "pages" / (page_stem(e.index) + ".png");
      if (fs::is_regular_file(guess)) e.image_path = guess;
    }
    if (e.image_path) {
      if (!fs::is_regular_file(*e.image_path)) {
        throw Error(ErrorCode::UnreadablePage, "missing page image " + e.image_path->string());
      }
      page.image_ref = *e.image_path;
    }
    page.line_spans = compute_line_spans(page.text);
    pkg.pages.push_back(std::move(page));
  }
  validate_package(pkg);
  return pkg;
}

ProtocolPackage make_package(std::string doc_id, const std::vector<std::string>& page_texts) {
  ProtocolPackage pkg;
  pkg.doc_id = std::move(doc_id);
  pkg.source_label = pkg.doc_id;
  pkg.page_count = static_cast<int>(page_texts.size());
  for (std::size_t i = 0; i < page_texts.size(); ++i) {
    PageRecord page;
    page.page_index = static_cast<int>(i) + 1;
    page.text = page_texts[i];
    page.line_spans = compute_line_spans(page.text);
    pkg.pages.push_back(std::move(page));
  }
  return pkg;
}

// ---------------------------------------------------------------------------
// Section tree

namespace {

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::optional<int> numbered_level(std::string_view t) {
  std::size_t i = 0;
  int depth = 0;
  while (true) {
    const std::size_t digits_start = i;
    while (i < t.size() && is_digit(t[i])) ++i;
    const std::size_t ndigits = i - digits_start;
    if (ndigits == 0 || ndigits > 3) return std::nullopt;
    ++depth;
    if (i + 1 < t.size() && t[i] == '.' && is_digit(t[i + 1])) {
      ++i;
      continue;
    }
    break;
  }
  bool trailing_dot = false;
  if (i < t.size() && t[i] == '.') {
    trailing_dot = true;
    ++i;
  }
  // A single number must be written "3." to count as a heading.
  if (depth == 1 && !trailing_dot) return std::nullopt;
  if (i >= t.size() || (t[i] != ' ' && t[i] != '\t')) return std::nullopt;
  const std::string_view title = trim(t.substr(i));
  if (title.empty() || !is_upper(title.front())) return std::nullopt;
  const char last = title.back();
  if (last == '.' || last == ';' || last == ',') return std::nullopt;
  return depth;
}

bool all_caps_title(std::string_view t) {
  if (t.find('\t') != std::string_view::npos || t.find('|') != std::string_view::npos ||
      t.find("  ") != std::string_view::npos) {
    return false;
  }
  std::size_t letters = 0;
  std::size_t non_space = 0;
  std::size_t run = 0;
  std::size_t best_run = 0;
  for (char c : t) {
    if (is_lower(c)) return false;
    if (c != ' ') ++non_space;
    if (is_upper(c)) {
      ++letters;
      best_run = std::max(best_run, ++run);
    } else {
      run = 0;
    }
  }
  return letters >= 3 && best_run >= 2 && letters * 2 >= non_space;
}

struct FlatNode {
  std::string heading;
  int nominal = 0;
  int level = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  int parent = -1;
};

SectionNode assemble(const std::vector<FlatNode>& flat, const std::vector<std::vector<int>>& kids,
                     int index, const ProtocolPackage& pkg) {
  const auto& f = flat[static_cast<std::size_t>(index)];
  SectionNode node;
  node.heading_text = f.heading;
  node.level = f.level;
  node.char_span = {f.start, f.end};
  node.page_index = pkg.page_at(f.start);
  for (int child : kids[static_cast<std::size_t>(index)]) {
    node.children.push_back(assemble(flat, kids, child, pkg));
  }
  return node;
}

}  // namespace

std::optional<int> classify_heading(std::string_view line, const HeadingRules& rules) {
  const std::string_view t = trim(line);
  if (t.empty() || t.size() > rules.max_heading_chars) return std::nullopt;
  if (rules.numbered) {
    if (auto level = numbered_level(t)) return level;
  }
  if (rules.all_caps && all_caps_title(t)) return 1;
  return std::nullopt;
}

SectionNode build_section_tree(const ProtocolPackage& pkg, const HeadingRules& rules) {
  const std::string text = pkg.document_text();
  std::vector<FlatNode> flat;
  flat.push_back({"", 0, 0, 0, text.size(), -1});
  std::vector<int> open{0};

  for (const auto& span : compute_line_spans(text)) {
    const std::string_view line(text.data() + span.start, span.size());
    const auto nominal = classify_heading(line, rules);
    if (!nominal) continue;
    while (open.size() > 1 && flat[static_cast<std::size_t>(open.back())].nominal >= *nominal) {
      flat[static_cast<std::size_t>(open.back())].end = span.start;
      open.pop_back();
    }
    const int parent = open.back();
    FlatNode node;
    node.heading = std::string(trim(line));
    node.nominal = *nominal;
    node.level = flat[static_cast<std::size_t>(parent)].level + 1;
    node.start = span.start;
    node.end = text.size();
    node.parent = parent;
    flat.push_back(std::move(node));
    open.push_back(static_cast<int>(flat.size()) - 1);
  }

  std::vector<std::vector<int>> kids(flat.size());
  for (std::size_t i = 1; i < flat.size(); ++i) {
    kids[static_cast<std::size_t>(flat[i].parent)].push_back(static_cast<int>(i));
  }
  return assemble(flat, kids, 0, pkg);
}

namespace {
void flatten_into(const SectionNode& node, std::vector<const SectionNode*>& out) {
  out.push_back(&node);
  for (const auto& c : node.children) flatten_into(c, out);
}
}  // namespace

std::vector<const SectionNode*> flatten(const SectionNode& root) {
  std::vector<const SectionNode*> out;
  flatten_into(root, out);
  return out;
}

json to_json(const SectionNode& node) {
  json j = {{"heading_text", node.heading_text},
            {"level", node.level},
            {"page_index", node.page_index},
            {"char_span", {node.char_span.start, node.char_span.end}}};
  json children = json::array();
  for (const auto& c : node.children) children.push_back(to_json(c));
  j["children"] = std::move(children);
  return j;
}

// ---------------------------------------------------------------------------
// Study metadata

bool StudyMetadata::complete() const {
  return interventions && primary_purpose && location_countries &&
         primary_disease_or_condition && nct_id;
}

bool passes_filter(const StudyMetadata& r) {
  if (!r.interventions || !r.primary_purpose || !r.location_countries) return false;
  const std::string_view interventions = *r.interventions;
  const std::string_view countries = *r.location_countries;
  return interventions.starts_with("intervention_type:Drug") && *r.primary_purpose == "Treatment" &&
         (countries.find("Canada") != std::string_view::npos ||
          countries.find("United States") != std::string_view::npos);
}

std::vector<StudyMetadata> filter_studies(const std::vector<StudyMetadata>& records,
                                          FilterReport* report) {
  FilterReport local;
  local.input = records.size();
  std::vector<StudyMetadata> kept;
  for (const auto& r : records) {
    if (!r.complete()) {
      ++local.malformed;
      ++local.dropped;
      continue;
    }
    if (passes_filter(r)) {
      kept.push_back(r);
    } else {
      ++local.dropped;
    }
  }
  local.kept = kept.size();
  if (report) *report = local;
  return kept;
}

namespace {

enum class MetaField { interventions, purpose, countries, disease, nct };

std::optional<MetaField> field_for_column(std::string_view name) {
  const std::string n = to_lower_ascii(trim(name));
  if (n == "interventions") return MetaField::interventions;
  if (n == "primary_purpose" || n == "study_design_primary_purpose") return MetaField::purpose;
  if (n == "location_countries") return MetaField::countries;
  if (n == "primary_disease_or_condition") return MetaField::disease;
  if (n == "nct_id" || n == "nct_number") return MetaField::nct;
  return std::nullopt;
}

void assign(StudyMetadata& r, MetaField f, std::string value) {
  switch (f) {
    case MetaField::interventions: r.interventions = std::move(value); break;
    case MetaField::purpose: r.primary_purpose = std::move(value); break;
    case MetaField::countries: r.location_countries = std::move(value); break;
    case MetaField::disease: r.primary_disease_or_condition = std::move(value); break;
    case MetaField::nct: r.nct_id = std::move(value); break;
  }
}

}  // namespace

std::vector<StudyMetadata> parse_study_metadata_json(const json& records) {
  if (!records.is_array()) throw Error(ErrorCode::InvalidArgument, "study metadata JSON must be a list");
  std::vector<StudyMetadata> out;
  for (const auto& rec : records) {
    StudyMetadata r;
    if (rec.is_object()) {
      for (const auto& [key, value] : rec.items()) {
        const auto f = field_for_column(key);
        if (f && value.is_string()) assign(r, *f, value.get<std::string>());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      row_has_content = true;
    } else if (c == delimiter) {
      row.push_back(std::move(field));
      field.clear();
      row_has_content = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (row_has_content || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      row_has_content = false;
    } else {
      field.push_back(c);
      row_has_content = true;
    }
  }
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<StudyMetadata> parse_study_metadata_table(std::string_view text, char delimiter) {
  const auto rows = parse_delimited(text, delimiter);
  std::vector<StudyMetadata> out;
  if (rows.empty()) return out;
  std::vector<std::optional<MetaField>> columns;
  for (const auto& h : rows.front()) columns.push_back(field_for_column(h));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    StudyMetadata rec;
    for (std::size_t c = 0; c < rows[r].size() && c < columns.size(); ++c) {
      if (columns[c]) assign(rec, *columns[c], rows[r][c]);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<StudyMetadata> load_study_metadata(const fs::path& path) {
  const std::string text = read_file(path);
  const std::string_view body = trim(text);
  if (!body.empty() && (body.front() == '[' || body.front() == '{')) {
    json parsed = json::parse(body, nullptr, false);
    if (parsed.is_discarded()) throw Error(ErrorCode::InvalidArgument, "malformed JSON in " + path.string());
    if (parsed.is_object() && parsed.contains("records")) parsed = parsed["records"];
    return parse_study_metadata_json(parsed);
  }
  const std::string ext = to_lower_ascii(path.extension().string());
  char delimiter = ',';
  if (ext == ".tsv" || ext == ".tab") {
    delimiter = '\t';
  } else if (ext != ".csv") {
    const auto first_line = body.substr(0, body.find('\n'));
    if (first_line.find('\t') != std::string_view::npos) delimiter = '\t';
  }
  return parse_study_metadata_table(text, delimiter);
}

json to_json(const StudyMetadata& r) {
  json j = json::object();
  const auto put = [&](const char* key, const std::optional<std::string>& v) {
    if (v) j[key] = *v;
  };
  put("interventions", r.interventions);
  put("primary_purpose", r.primary_purpose);
  put("location_countries", r.location_countries);
  put("primary_disease_or_condition", r.primary_disease_or_condition);
  put("nct_id", r.nct_id);
  return j;
}

}  // namespace protex::ingest
