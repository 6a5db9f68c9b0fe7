#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "protex/gateway.hpp"
#include "protex/ingest.hpp"
#include "protex/result.hpp"
#include "protex/schema.hpp"

/// Schedule-of-events extraction: table page detection followed by
/// multimodal transcription of the page images.
namespace protex::soe {

inline constexpr double kDefaultTableThreshold = 0.3;

struct TableRegion {
  int page_index = 0;
  /// (x0, y0, x1, y1) in page-normalized coordinates.
  std::optional<std::array<double, 4>> bbox;
  double confidence = 0.0;
  std::string detector_id;

  json to_json() const;
};

/// Fraction of non-blank lines with at least three interior separator runs
/// (a tab, a pipe, or two or more spaces), plus 0.2 times the fraction of
/// lines holding an X or check-mark token; clamped to [0, 1].
double heuristic_page_score(std::string_view page_text);

class Detector {
 public:
  virtual ~Detector() = default;
  /// Regions found on one page (empty when none).
  virtual std::vector<TableRegion> detect(const ingest::PageRecord& page) = 0;
  virtual std::string id() const = 0;
  /// Warnings accumulated since construction (fallbacks and the like).
  virtual std::vector<std::string> warnings() const { return {}; }
};

class HeuristicDetector : public Detector {
 public:
  explicit HeuristicDetector(double threshold = kDefaultTableThreshold) : threshold_(threshold) {}
  std::vector<TableRegion> detect(const ingest::PageRecord& page) override;
  std::string id() const override { return "layout-heuristic"; }

 private:
  double threshold_;
};

/// Posts each page PNG to an external detector. The endpoint answers with a
/// JSON list of {"bbox": [x0, y0, x1, y1], "confidence": c}. On failure it
/// throws DetectorUnavailable, or falls back to the heuristic when allowed.
class HttpDetector : public Detector {
 public:
  explicit HttpDetector(std::string url, bool fallback = true, double threshold = kDefaultTableThreshold);
  std::vector<TableRegion> detect(const ingest::PageRecord& page) override;
  std::string id() const override { return "http:" + url_; }
  std::vector<std::string> warnings() const override { return warnings_; }

 private:
  std::string url_;
  bool fallback_;
  double threshold_;
  HeuristicDetector heuristic_;
  std::vector<std::string> warnings_;
};

/// Detector from PROTEX_TABLE_DETECTOR_URL when set, else the heuristic.
std::unique_ptr<Detector> detector_from_environment(double threshold = kDefaultTableThreshold);

/// Regions sorted by page index.
std::vector<TableRegion> detect_tables(const ingest::ProtocolPackage& pkg, Detector& detector);

struct Visit {
  json visit_number;  // integer or label
  std::string visit_time;
  std::vector<std::string> procedures;
};

struct SoeSchedule {
  std::vector<Visit> visits;

  /// {"schedule_of_events": [...]} in the category document shape.
  json to_json() const;
  /// Accepts the category document shape or a bare visit list. Throws InvalidArgument.
  static SoeSchedule from_json(const json& j);
};

struct MergeOutcome {
  SoeSchedule schedule;
  /// Visit numbers seen with two different non-empty times.
  std::vector<json> conflicts;
};

/// Merges page-ordered partial schedules. Visits match on normalized
/// visit_number and visit_time, where an empty time matches any time of the
/// same visit number. Matched visits union their procedures in first-seen
/// order; visit order is first occurrence.
MergeOutcome merge_partials(const std::vector<SoeSchedule>& parts);

struct SoeOptions {
  std::string provider_id;
  int parse_attempts = 3;
  std::string created_at;
};

/// Consecutive table pages are sent together, at most the provider's image
/// batch limit per request. Throws NoPageImages when a region's page has no
/// image. With no regions, returns a NoTablesDetected result flagged for
/// review.
ExtractionResult extract_soe(const ingest::ProtocolPackage& pkg, const std::vector<TableRegion>& regions,
                             gateway::Gateway& gw, const schema::Registry& registry, const SoeOptions& options);

/// Page batches used by extract_soe: runs of consecutive pages cut to at
/// most `batch_limit` pages.
std::vector<std::vector<int>> batch_pages(std::vector<int> pages, std::size_t batch_limit);

}  // namespace protex::soe
