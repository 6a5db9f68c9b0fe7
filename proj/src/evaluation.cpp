#include "protex/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>

namespace protex::eval {

bool is_allowed_score(double value) {
  for (double s : kScoreSet) {
    if (value == s) return true;
  }
  return false;
}

json JudgeScore::to_json() const {
  if (!is_allowed_score(value)) {
    throw Error(ErrorCode::JudgeOutputInvalid, element_id + ": score " + std::to_string(value) + " is not allowed");
  }
  return {{"element_id", element_id}, {"score", value}, {"rationale", rationale}, {"judge_config_id", judge_config_id}};
}

JudgeScore JudgeScore::from_json(const json& j) {
  JudgeScore s;
  s.element_id = j.value("element_id", "");
  if (!j.contains("score") || !j["score"].is_number() || !is_allowed_score(j["score"].get<double>())) {
    throw Error(ErrorCode::JudgeOutputInvalid, s.element_id + ": stored score is not in the allowed set");
  }
  s.value = j["score"].get<double>();
  s.rationale = j.value("rationale", "");
  s.judge_config_id = j.value("judge_config_id", "");
  return s;
}

namespace {

std::optional<double> score_of(const json& reply) {
  if (!reply.is_object() || !reply.contains("score")) return std::nullopt;
  const json& s = reply["score"];
  double v = 0.0;
  if (s.is_number()) {
    v = s.get<double>();
  } else if (s.is_string()) {
    try {
      std::size_t used = 0;
      const std::string text(trim(s.get<std::string>()));
      v = std::stod(text, &used);
      if (used != text.size()) return std::nullopt;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  } else {
    return std::nullopt;
  }
  if (!is_allowed_score(v)) return std::nullopt;
  return v;
}

std::string rationale_of(const json& reply) {
  if (reply.contains("rationale") && reply["rationale"].is_string()) return reply["rationale"].get<std::string>();
  return "";
}

}  // namespace

std::optional<std::pair<double, std::string>> parse_judge_reply(std::string_view reply) {
  const auto parsed = parse_embedded_json(reply);
  if (!parsed) return std::nullopt;
  const auto score = score_of(*parsed);
  if (!score) return std::nullopt;
  return std::make_pair(*score, rationale_of(*parsed));
}

JudgeScore judge_element(const std::optional<json>& submitted, const json& ground_truth,
                         const schema::ElementSpec& spec, const schema::Registry& registry, gateway::Gateway& gw,
                         const std::string& provider_id) {
  JudgeScore out;
  out.element_id = spec.element_id;
  out.judge_config_id = gw.provider(provider_id).config_id();
  if (ground_truth.is_null()) throw Error(ErrorCode::InvalidArgument, spec.element_id + ": ground truth is null");
  if (!submitted || submitted->is_null()) {
    out.value = 0.0;
    out.rationale = "no submission";
    return out;
  }
  const std::string prompt = schema::fill_template(registry.prompt("judge"),
                                                   {{"element_id", spec.element_id},
                                                    {"element_name", spec.name},
                                                    {"schema", spec.schema.dump(2)},
                                                    {"ground_truth", ground_truth.dump(2)},
                                                    {"submission", submitted->dump(2)}});
  const auto outcome = generate_json(
      [&](const std::string& p) { return gw.complete(provider_id, p).text; }, prompt,
      [](const json& reply) {
        schema::ValidationReport r;
        if (!score_of(reply)) {
          r.errors.push_back({"/score", "type_mismatch", "score must be one of 0, 1, 2, 3, 3.5, 4, 4.5, 5"});
        }
        return r;
      },
      2, registry.prompt("repair"));
  const auto score = outcome.parsed ? score_of(*outcome.parsed) : std::nullopt;
  if (!score) {
    throw Error(ErrorCode::JudgeOutputInvalid, spec.element_id + ": judge reply has no valid score after " +
                                                   std::to_string(outcome.attempts) + " attempts");
  }
  out.value = *score;
  out.rationale = rationale_of(*outcome.parsed);
  return out;
}

json CategoryScore::to_json() const {
  json elements = json::array();
  for (const auto& e : element_scores) {
    elements.push_back({{"element_id", e.element_id},
                        {"weight", e.weight},
                        {"score", e.score ? json(e.score->value) : json(nullptr)},
                        {"rationale", e.score ? json(e.score->rationale) : json(nullptr)}});
  }
  return {{"category", std::string(schema::to_string(category))},
          {"percent", percent},
          {"mean_score", mean_score()},
          {"n_scored", n_scored},
          {"elements", elements}};
}

CategoryScore aggregate_category(const std::vector<std::pair<std::string, std::optional<JudgeScore>>>& scores,
                                 const schema::Registry& registry, schema::Category category) {
  CategoryScore out;
  out.category = category;
  double numerator = 0.0;
  double denominator = 0.0;
  std::set<std::string> seen;
  for (const auto& [element_id, score] : scores) {
    const auto& spec = registry.element(element_id);
    if (spec.category != category) {
      throw Error(ErrorCode::UnknownElement, element_id + " is not in category " + std::string(schema::to_string(category)));
    }
    if (!seen.insert(element_id).second) throw Error(ErrorCode::InvalidArgument, "duplicate score for " + element_id);
    if (score && !is_allowed_score(score->value)) {
      throw Error(ErrorCode::JudgeOutputInvalid, element_id + ": score outside the allowed set");
    }
    out.element_scores.push_back({element_id, spec.weight, score});
    if (score) ++out.n_scored;
    if (spec.weight > 0.0) {
      denominator += spec.weight;
      if (score) numerator += spec.weight * score->value;
    }
  }
  if (denominator <= 0.0) {
    throw Error(ErrorCode::NoPositiveWeightScores,
                "category " + std::string(schema::to_string(category)) + " has no positive-weight elements to score");
  }
  out.percent = 20.0 * numerator / denominator;
  return out;
}

json RunAggregate::to_json() const {
  json cats = json::object();
  for (const auto& [c, cell] : cells) cats[std::string(schema::to_string(c))] = {{"mean_percent", cell.mean_percent}, {"n", cell.n}};
  return {{"categories", cats}, {"unweighted_mean", unweighted_mean}, {"protocol_weighted_mean", protocol_weighted_mean}};
}

RunAggregate aggregate_run(const std::vector<ProtocolScores>& protocols) {
  std::map<schema::Category, std::pair<double, int>> sums;
  for (const auto& p : protocols) {
    for (const auto& c : p.categories) {
      sums[c.category].first += c.percent;
      sums[c.category].second += 1;
    }
  }
  RunAggregate out;
  double mean_sum = 0.0;
  double weighted_sum = 0.0;
  int total_n = 0;
  for (const auto& [c, s] : sums) {
    const CategoryCell cell{s.first / s.second, s.second};
    out.cells[c] = cell;
    mean_sum += cell.mean_percent;
    weighted_sum += cell.mean_percent * cell.n;
    total_n += cell.n;
  }
  if (!out.cells.empty()) {
    out.unweighted_mean = mean_sum / static_cast<double>(out.cells.size());
    out.protocol_weighted_mean = weighted_sum / total_n;
  }
  return out;
}

double round_to(double value, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::round(value * scale) / scale;
}

std::string render_comparison(const std::vector<std::pair<std::string, RunAggregate>>& columns) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  const int label_width = 30;
  const int col_width = 16;
  out << std::left << std::setw(label_width) << "Category";
  for (const auto& [label, _] : columns) out << std::right << std::setw(col_width) << label;
  out << "\n";
  for (schema::Category c : schema::kAllCategories) {
    out << std::left << std::setw(label_width) << schema::to_string(c);
    for (const auto& [_, agg] : columns) {
      const auto it = agg.cells.find(c);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1);
      if (it == agg.cells.end()) {
        cell << "-";
      } else {
        cell << it->second.mean_percent << " (" << it->second.n << ")";
      }
      out << std::right << std::setw(col_width) << cell.str();
    }
    out << "\n";
  }
  out << std::left << std::setw(label_width) << "Average (unweighted)";
  for (const auto& [_, agg] : columns) out << std::right << std::setw(col_width) << agg.unweighted_mean;
  out << "\n" << std::left << std::setw(label_width) << "Average (protocol-weighted)";
  for (const auto& [_, agg] : columns) out << std::right << std::setw(col_width) << agg.protocol_weighted_mean;
  out << "\n";
  return out.str();
}

json RunEvaluation::to_json() const {
  json judged = json::array();
  for (const auto& j : judgments) judged.push_back(j.to_json());
  json cats = json::array();
  for (const auto& c : scores.categories) cats.push_back(c.to_json());
  return {{"run_id", run_id}, {"doc_id", doc_id}, {"judgments", judged}, {"skipped", skipped}, {"categories", cats}};
}

RunEvaluation evaluate_run(const extraction::ExtractionRun& run, const fs::path& truth_dir,
                           const schema::Registry& registry, gateway::Gateway& gw, const std::string& provider_id,
                           int parallelism) {
  RunEvaluation out;
  out.run_id = run.run_id;
  out.doc_id = run.doc_id;
  out.scores.doc_id = run.doc_id;
  struct Item {
    const ExtractionResult* result;
    json truth;
  };
  std::vector<Item> items;
  for (const auto& r : run.results) {
    const fs::path truth_path = truth_dir / (r.element_id + ".json");
    if (!fs::is_regular_file(truth_path)) {
      out.skipped.push_back(r.element_id);
      continue;
    }
    items.push_back({&r, read_json_file(truth_path)});
  }
  std::vector<JudgeScore> judged(items.size());
  parallel_for(items.size(), parallelism, [&](std::size_t i) {
    const auto& r = *items[i].result;
    judged[i] = judge_element(r.value, items[i].truth, registry.element(r.element_id), registry, gw, provider_id);
  });
  out.judgments = judged;
  for (schema::Category c : schema::kAllCategories) {
    std::vector<std::pair<std::string, std::optional<JudgeScore>>> scores;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].result->category != c) continue;
      std::optional<JudgeScore> s = judged[i];
      if (!items[i].result->value) s.reset();
      scores.emplace_back(items[i].result->element_id, s);
    }
    if (scores.empty()) continue;
    try {
      out.scores.categories.push_back(aggregate_category(scores, registry, c));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoPositiveWeightScores) throw;
    }
  }
  return out;
}

std::vector<BenchmarkPair> load_benchmark(const fs::path& path) {
  const json doc = read_json_file(path);
  const json& list = doc.is_object() && doc.contains("pairs") ? doc["pairs"] : doc;
  if (!list.is_array()) throw Error(ErrorCode::InvalidArgument, path.string() + ": benchmark must be a list");
  std::vector<BenchmarkPair> out;
  for (const auto& p : list) {
    try {
      BenchmarkPair pair;
      pair.element_id = p.at("element_id").get<std::string>();
      if (p.contains("submitted") && !p["submitted"].is_null()) pair.submitted = p["submitted"];
      pair.ground_truth = p.at("ground_truth");
      pair.human_score = p.at("human_score").get<double>();
      if (!is_allowed_score(pair.human_score)) {
        throw Error(ErrorCode::InvalidArgument, pair.element_id + ": human score outside the allowed set");
      }
      out.push_back(std::move(pair));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, path.string() + ": malformed pair: " + e.what());
    }
  }
  return out;
}

bool CalibrationReport::no_significant_bias() const { return std::fabs(mean_signed_error) < bias_threshold; }

json CalibrationReport::to_json() const {
  return {{"mae", mae},
          {"mean_signed_error", mean_signed_error},
          {"n", n},
          {"excluded", excluded},
          {"bias_threshold", bias_threshold},
          {"no_significant_bias", no_significant_bias()},
          {"per_pair", per_pair}};
}

CalibrationReport calibrate_judge(const std::vector<BenchmarkPair>& bench, const schema::Registry& registry,
                                  gateway::Gateway& gw, const std::string& provider_id, double bias_threshold) {
  if (bench.empty()) throw Error(ErrorCode::InvalidArgument, "calibration benchmark is empty");
  CalibrationReport report;
  report.bias_threshold = bias_threshold;
  double abs_sum = 0.0;
  double signed_sum = 0.0;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const auto& pair = bench[i];
    json row = {{"index", i}, {"element_id", pair.element_id}, {"human_score", pair.human_score}};
    try {
      const auto s = judge_element(pair.submitted, pair.ground_truth, registry.element(pair.element_id), registry, gw,
                                   provider_id);
      const double diff = s.value - pair.human_score;
      abs_sum += std::fabs(diff);
      signed_sum += diff;
      ++report.n;
      row["judge_score"] = s.value;
      row["error"] = diff;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::JudgeOutputInvalid) throw;
      ++report.excluded;
      row["excluded"] = e.what();
    }
    report.per_pair.push_back(std::move(row));
  }
  if (report.n > 0) {
    report.mae = abs_sum / static_cast<double>(report.n);
    report.mean_signed_error = signed_sum / static_cast<double>(report.n);
  }
  return report;
}

}  // namespace protex::eval
