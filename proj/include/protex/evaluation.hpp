#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "protex/extraction.hpp"
#include "protex/gateway.hpp"
#include "protex/schema.hpp"

namespace protex::eval {

inline constexpr std::array<double, 8> kScoreSet{0.0, 1.0, 2.0, 3.0, 3.5, 4.0, 4.5, 5.0};

bool is_allowed_score(double value);

struct JudgeScore {
  std::string element_id;
  double value = 0.0;
  std::string rationale;
  std::string judge_config_id;

  json to_json() const;
  /// Throws JudgeOutputInvalid when the score is outside kScoreSet.
  static JudgeScore from_json(const json& j);
};

/// Parses a judge reply: a JSON object with a score from kScoreSet.
/// Returns nullopt when the reply is unusable.
std::optional<std::pair<double, std::string>> parse_judge_reply(std::string_view reply);

/// An absent submission scores 0 without a provider call. Otherwise one
/// corrective retry is allowed before JudgeOutputInvalid.
JudgeScore judge_element(const std::optional<json>& submitted, const json& ground_truth,
                         const schema::ElementSpec& spec, const schema::Registry& registry, gateway::Gateway& gw,
                         const std::string& provider_id);

struct ElementScore {
  std::string element_id;
  double weight = 0.0;
  std::optional<JudgeScore> score;  // nullopt: no submission, counted as 0
};

struct CategoryScore {
  schema::Category category = schema::Category::gen;
  double percent = 0.0;
  std::vector<ElementScore> element_scores;
  int n_scored = 0;

  /// Weighted mean on the 0-5 scale (percent / 20).
  double mean_score() const { return percent / 20.0; }
  json to_json() const;
};

/// percent = 20 * sum(w * s) / sum(w) over the listed elements with w > 0;
/// absent scores count as 0. Zero-weight elements are reported only.
/// Throws UnknownElement (element not in the category) and
/// NoPositiveWeightScores.
CategoryScore aggregate_category(const std::vector<std::pair<std::string, std::optional<JudgeScore>>>& scores,
                                 const schema::Registry& registry, schema::Category category);

/// Category scores of one protocol under one extraction approach.
struct ProtocolScores {
  std::string doc_id;
  std::vector<CategoryScore> categories;
};

struct CategoryCell {
  double mean_percent = 0.0;
  int n = 0;
};

struct RunAggregate {
  std::map<schema::Category, CategoryCell> cells;
  /// Mean of the category means.
  double unweighted_mean = 0.0;
  /// Category means weighted by their protocol counts.
  double protocol_weighted_mean = 0.0;

  json to_json() const;
};

RunAggregate aggregate_run(const std::vector<ProtocolScores>& protocols);

/// Plain-text comparison table: one row per category with "mean (N)" per
/// column, then both average rows.
std::string render_comparison(const std::vector<std::pair<std::string, RunAggregate>>& columns);

struct RunEvaluation {
  std::string run_id;
  std::string doc_id;
  std::vector<JudgeScore> judgments;
  std::vector<std::string> skipped;  // elements without ground truth
  ProtocolScores scores;

  json to_json() const;
};

/// Ground truth lives in `<truth_dir>/<element_id>.json`. Elements without a
/// ground-truth file are skipped; categories left without positive-weight
/// elements are omitted.
RunEvaluation evaluate_run(const extraction::ExtractionRun& run, const fs::path& truth_dir,
                           const schema::Registry& registry, gateway::Gateway& gw, const std::string& provider_id,
                           int parallelism = 4);

struct BenchmarkPair {
  std::string element_id;
  std::optional<json> submitted;
  json ground_truth;
  double human_score = 0.0;
};

/// Reads a JSON list of {element_id, submitted, ground_truth, human_score}.
std::vector<BenchmarkPair> load_benchmark(const fs::path& path);

struct CalibrationReport {
  double mae = 0.0;
  /// Mean of (judge - human).
  double mean_signed_error = 0.0;
  std::size_t n = 0;
  std::size_t excluded = 0;
  double bias_threshold = 0.05;
  std::vector<json> per_pair;

  bool no_significant_bias() const;
  json to_json() const;
};

CalibrationReport calibrate_judge(const std::vector<BenchmarkPair>& bench, const schema::Registry& registry,
                                  gateway::Gateway& gw, const std::string& provider_id, double bias_threshold = 0.05);

/// Rounds half away from zero to `digits` decimals.
double round_to(double value, int digits);

}  // namespace protex::eval
