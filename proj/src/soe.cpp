#include "protex/soe.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace protex::soe {

json TableRegion::to_json() const {
  json j = {{"page_index", page_index}, {"confidence", confidence}, {"detector_id", detector_id}};
  j["bbox"] = bbox ? json(*bbox) : json(nullptr);
  return j;
}

namespace {

bool is_marker(std::string_view token) {
  return token == "X" || token == "x" || token == "\xE2\x9C\x93" || token == "\xE2\x9C\x94";
}

bool is_sep(char c) { return c == ' ' || c == '\t' || c == '|'; }

}  // namespace

double heuristic_page_score(std::string_view page_text) {
  std::size_t lines = 0;
  std::size_t table_lines = 0;
  std::size_t marker_lines = 0;
  for (const auto& raw : split(page_text, '\n')) {
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!has_non_space(line)) continue;
    ++lines;
    // Runs touching either end of the line are not column separators.
    std::size_t begin = 0;
    std::size_t end = line.size();
    while (begin < end && (line[begin] == ' ' || line[begin] == '\t')) ++begin;
    while (end > begin && (line[end - 1] == ' ' || line[end - 1] == '\t')) --end;
    int runs = 0;
    bool marker = false;
    std::size_t i = begin;
    std::size_t token_start = begin;
    while (i < end) {
      if (!is_sep(line[i])) {
        ++i;
        continue;
      }
      if (is_marker(line.substr(token_start, i - token_start))) marker = true;
      const std::size_t run_start = i;
      bool strong = false;
      while (i < end && is_sep(line[i])) {
        strong = strong || line[i] != ' ';
        ++i;
      }
      const bool interior = run_start > begin && i < end;
      if (interior && (strong || i - run_start >= 2)) ++runs;
      token_start = i;
    }
    if (is_marker(line.substr(token_start, end - token_start))) marker = true;
    if (runs >= 3) ++table_lines;
    if (marker) ++marker_lines;
  }
  if (lines == 0) return 0.0;
  const double score = static_cast<double>(table_lines) / lines + 0.2 * static_cast<double>(marker_lines) / lines;
  return std::clamp(score, 0.0, 1.0);
}

std::vector<TableRegion> HeuristicDetector::detect(const ingest::PageRecord& page) {
  const double score = heuristic_page_score(page.text);
  if (score < threshold_) return {};
  return {TableRegion{page.page_index, std::nullopt, score, id()}};
}

HttpDetector::HttpDetector(std::string url, bool fallback, double threshold)
    : url_(std::move(url)), fallback_(fallback), threshold_(threshold), heuristic_(threshold) {}

std::unique_ptr<Detector> detector_from_environment(double threshold) {
  if (auto url = get_env("PROTEX_TABLE_DETECTOR_URL"); url && !url->empty()) {
    return std::make_unique<HttpDetector>(*url, true, threshold);
  }
  return std::make_unique<HeuristicDetector>(threshold);
}

std::vector<TableRegion> detect_tables(const ingest::ProtocolPackage& pkg, Detector& detector) {
  std::vector<TableRegion> regions;
  for (const auto& page : pkg.pages) {
    auto found = detector.detect(page);
    for (auto& r : found) {
      if (r.page_index < 1 || r.page_index > pkg.page_count) {
        throw Error(ErrorCode::InvalidArgument, "detector returned page " + std::to_string(r.page_index));
      }
      r.confidence = std::clamp(r.confidence, 0.0, 1.0);
      regions.push_back(std::move(r));
    }
  }
  std::stable_sort(regions.begin(), regions.end(),
                   [](const TableRegion& a, const TableRegion& b) { return a.page_index < b.page_index; });
  return regions;
}

// ---------------------------------------------------------------------------
// Schedules

json SoeSchedule::to_json() const {
  json visits_json = json::array();
  for (const auto& v : visits) {
    json procs = json::array();
    for (const auto& p : v.procedures) procs.push_back({{"procedure_name", p}});
    visits_json.push_back({{"visit_number", v.visit_number}, {"visit_time", v.visit_time}, {"procedures", procs}});
  }
  return {{"schedule_of_events", visits_json}};
}

SoeSchedule SoeSchedule::from_json(const json& j) {
  const json* list = &j;
  if (j.is_object()) {
    if (!j.contains("schedule_of_events")) throw Error(ErrorCode::InvalidArgument, "no schedule_of_events field");
    list = &j["schedule_of_events"];
  }
  if (!list->is_array()) throw Error(ErrorCode::InvalidArgument, "schedule_of_events must be a list");
  SoeSchedule s;
  for (const auto& v : *list) {
    if (!v.is_object() || !v.contains("visit_number")) {
      throw Error(ErrorCode::InvalidArgument, "visit entry needs a visit_number");
    }
    Visit visit;
    visit.visit_number = v["visit_number"];
    if (v.contains("visit_time") && v["visit_time"].is_string()) visit.visit_time = v["visit_time"].get<std::string>();
    if (v.contains("procedures") && v["procedures"].is_array()) {
      for (const auto& p : v["procedures"]) {
        if (p.is_string()) {
          visit.procedures.push_back(p.get<std::string>());
        } else if (p.is_object() && p.contains("procedure_name") && p["procedure_name"].is_string()) {
          visit.procedures.push_back(p["procedure_name"].get<std::string>());
        }
      }
    }
    s.visits.push_back(std::move(visit));
  }
  return s;
}

namespace {

std::string visit_key(const json& number) {
  if (number.is_string()) return normalize_key(number.get<std::string>());
  if (number.is_number_integer()) return std::to_string(number.get<long long>());
  return normalize_key(number.dump());
}

}  // namespace

MergeOutcome merge_partials(const std::vector<SoeSchedule>& parts) {
  MergeOutcome out;
  struct Slot {
    std::string number_key;
    std::string time_key;
    std::set<std::string> seen;
  };
  std::vector<Slot> slots;
  std::set<std::string> conflicted;
  for (const auto& part : parts) {
    for (const auto& visit : part.visits) {
      const std::string nk = visit_key(visit.visit_number);
      const std::string tk = normalize_key(visit.visit_time);
      std::size_t target = slots.size();
      bool conflict = false;
      for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].number_key != nk) continue;
        if (tk.empty() || slots[i].time_key.empty() || slots[i].time_key == tk) {
          target = i;
          break;
        }
        conflict = true;
      }
      if (target == slots.size()) {
        if (conflict && conflicted.insert(nk).second) out.conflicts.push_back(visit.visit_number);
        slots.push_back({nk, tk, {}});
        out.schedule.visits.push_back({visit.visit_number, visit.visit_time, {}});
      }
      Slot& slot = slots[target];
      Visit& merged = out.schedule.visits[target];
      if (slot.time_key.empty() && !tk.empty()) {
        slot.time_key = tk;
        merged.visit_time = visit.visit_time;
      }
      for (const auto& proc : visit.procedures) {
        if (slot.seen.insert(normalize_key(proc)).second) merged.procedures.push_back(proc);
      }
    }
  }
  return out;
}

std::vector<std::vector<int>> batch_pages(std::vector<int> pages, std::size_t batch_limit) {
  if (batch_limit < 1) throw Error(ErrorCode::InvalidArgument, "batch limit must be >= 1");
  std::sort(pages.begin(), pages.end());
  pages.erase(std::unique(pages.begin(), pages.end()), pages.end());
  std::vector<std::vector<int>> batches;
  for (int p : pages) {
    if (batches.empty() || batches.back().back() + 1 != p || batches.back().size() >= batch_limit) {
      batches.push_back({p});
    } else {
      batches.back().push_back(p);
    }
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Extraction

ExtractionResult extract_soe(const ingest::ProtocolPackage& pkg, const std::vector<TableRegion>& regions,
                             gateway::Gateway& gw, const schema::Registry& registry, const SoeOptions& options) {
  const std::string element_id = "soe.schedule_of_events";
  const schema::ElementSpec& spec = registry.element(element_id);
  ExtractionResult result;
  result.element_id = element_id;
  result.category = schema::Category::soe;
  result.mode = Mode::rag;
  result.model_config_id = gw.provider(options.provider_id).config_id();
  result.created_at = options.created_at;

  if (regions.empty()) {
    result.needs_review = true;
    result.error = ResultError{"NoTablesDetected", "no schedule-of-events table pages were detected"};
    return result;
  }
  std::vector<int> pages;
  for (const auto& r : regions) {
    if (!pkg.page(r.page_index).image_ref) {
      throw Error(ErrorCode::NoPageImages, "page " + std::to_string(r.page_index) + " of " + pkg.doc_id + " has no image");
    }
    pages.push_back(r.page_index);
  }
  const auto batches = batch_pages(pages, gw.provider(options.provider_id).batch_limit);

  std::vector<SoeSchedule> partials;
  std::vector<std::string> raw_outputs;
  std::vector<std::string> failed_batches;
  for (const auto& batch : batches) {
    std::vector<gateway::Image> images;
    for (int p : batch) images.push_back(gateway::Image::from_file(*pkg.page(p).image_ref));
    const std::string label = batch.size() == 1 ? std::to_string(batch.front())
                                                : std::to_string(batch.front()) + "-" + std::to_string(batch.back());
    const std::string prompt = schema::fill_template(registry.prompt("soe"), {{"pages", label}, {"schema", spec.schema.dump(2)}});
    const auto outcome = generate_json(
        [&](const std::string& p) { return gw.complete_multimodal(options.provider_id, p, images).text; }, prompt,
        [&](const json& v) { return registry.validate_instance(element_id, v); }, options.parse_attempts,
        registry.prompt("repair"));
    result.attempts += outcome.attempts;
    raw_outputs.push_back(outcome.raw_output);
    if (!outcome.parsed) {
      failed_batches.push_back(label);
      continue;
    }
    try {
      partials.push_back(SoeSchedule::from_json(*outcome.parsed));
    } catch (const Error&) {
      failed_batches.push_back(label);
    }
  }
  result.raw_model_output = raw_outputs.size() == 1 ? raw_outputs.front() : json(raw_outputs).dump();
  for (int p : pages) {
    if (result.provenance.empty() || result.provenance.back().first_page != p) {
      result.provenance.push_back({"page:" + std::to_string(p), p, p, std::nullopt});
    }
  }
  if (!failed_batches.empty()) {
    result.needs_review = true;
    result.error = ResultError{"ParseFailure", "unparseable output for page batch(es) " + join(failed_batches, ", ")};
  }
  if (partials.empty()) return result;

  const MergeOutcome merged = merge_partials(partials);
  result.value = merged.schedule.to_json();
  result.validation = registry.validate_instance(element_id, *result.value);
  if (!result.validation.valid()) result.needs_review = true;
  if (!merged.conflicts.empty()) {
    result.needs_review = true;
    result.flags.push_back("conflicting_visit_time");
    for (const auto& n : merged.conflicts) {
      result.validation.warnings.push_back({"/schedule_of_events", "conflicting_visit_time",
                                            "visit " + n.dump() + " appears with different visit times"});
    }
  }
  return result;
}

}  // namespace protex::soe
