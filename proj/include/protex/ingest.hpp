#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protex/util.hpp"

/// Protocol document packages, their section tree, and the study-metadata
/// corpus filter.
namespace protex::ingest {

/// Half-open byte range [start, end).
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool operator==(const CharSpan&) const = default;
};

struct PageRecord {
  int page_index = 0;  // 1-based
  std::string text;
  std::optional<fs::path> image_ref;
  /// Lines of `text`, excluding the '\n' terminator; ordered and disjoint.
  std::vector<CharSpan> line_spans;
};

struct ProtocolPackage {
  std::string doc_id;
  std::optional<std::string> nct_id;
  int page_count = 0;
  std::vector<PageRecord> pages;
  std::string source_label;
  fs::path root;

  /// Page texts concatenated in page order. All global char spans index
  /// into this string.
  std::string document_text() const;
  /// Global offset of the first byte of each page; one entry per page.
  std::vector<std::size_t> page_offsets() const;
  /// 1-based page containing the global offset (offsets past the end map to
  /// the last page).
  int page_at(std::size_t global_offset) const;
  const PageRecord& page(int page_index) const;
  /// Digest of doc id plus every page text and image reference.
  std::string content_digest() const;
};

std::vector<CharSpan> compute_line_spans(std::string_view text);

/// Loads `<root>/manifest.json` and the referenced page files.
/// Throws MissingManifest, PageCountMismatch, UnreadablePage, InvalidPackage.
ProtocolPackage load_package(const fs::path& root);

/// In-memory package with pages 1..n; used for synthetic inputs.
ProtocolPackage make_package(std::string doc_id, const std::vector<std::string>& page_texts);

/// Checks the package invariants (page numbering, line spans).
void validate_package(const ProtocolPackage& pkg);

struct SectionNode {
  std::string heading_text;
  int level = 0;  // 0 for the synthetic root
  int page_index = 1;
  CharSpan char_span;
  std::vector<SectionNode> children;
};

/// Heading detection. A line is a heading when it is a numbered title
/// ("3. X", "3.1 X", "3.1.2 X"; level = numbering depth) or an ALL-CAPS
/// title (level 1).
struct HeadingRules {
  bool numbered = true;
  bool all_caps = true;
  std::size_t max_heading_chars = 80;
};

/// Nominal heading level for one line, or nullopt when it is body text.
std::optional<int> classify_heading(std::string_view line, const HeadingRules& rules = {});

/// Builds the section tree of the document. The synthetic root spans the
/// whole text and owns any preamble before the first heading. Section spans
/// run from the heading line to the next heading of the same or a shallower
/// level. A child is always exactly one level below its parent; skipped
/// numbering depths are clamped.
SectionNode build_section_tree(const ProtocolPackage& pkg, const HeadingRules& rules = {});

/// Flattens the tree in document (pre-)order, root first.
std::vector<const SectionNode*> flatten(const SectionNode& root);

struct StudyMetadata {
  std::optional<std::string> interventions;
  std::optional<std::string> primary_purpose;
  std::optional<std::string> location_countries;
  std::optional<std::string> primary_disease_or_condition;
  std::optional<std::string> nct_id;

  bool complete() const;
};

struct FilterReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t malformed = 0;
};

/// Interventional drug studies with treatment purpose located in Canada or
/// the United States. Records missing any field are dropped and counted as
/// malformed.
std::vector<StudyMetadata> filter_studies(const std::vector<StudyMetadata>& records,
                                          FilterReport* report = nullptr);
bool passes_filter(const StudyMetadata& record);

/// Reads study metadata from a JSON list of records or a delimited table
/// (comma or tab separated, header row required). Column names may be the
/// snake_case field names or the registry export names
/// (Interventions, Study_Design_Primary_Purpose, Location_Countries,
/// Primary_Disease_or_Condition, NCT_Number).
std::vector<StudyMetadata> load_study_metadata(const fs::path& path);
std::vector<StudyMetadata> parse_study_metadata_json(const json& records);
std::vector<StudyMetadata> parse_study_metadata_table(std::string_view text, char delimiter);
json to_json(const StudyMetadata& record);

/// RFC 4180 style parsing: quoted fields, doubled quotes, embedded newlines.
std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter);

json to_json(const SectionNode& node);

}  // namespace protex::ingest
