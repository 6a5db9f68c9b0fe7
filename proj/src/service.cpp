#include "protex/service.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include "protex/ingest.hpp"

namespace protex::service {

std::string_view to_string(ReviewAction a) { return a == ReviewAction::approve ? "approve" : "edit"; }

ReviewAction parse_review_action(std::string_view s) {
  if (s == "approve") return ReviewAction::approve;
  if (s == "edit") return ReviewAction::edit;
  throw Error(ErrorCode::InvalidArgument, "unknown review action '" + std::string(s) + "'");
}

json ReviewDecisionRecord::to_json() const {
  json j = {{"element_id", element_id}, {"run_id", run_id},       {"reviewer_id", reviewer_id},
            {"action", std::string(service::to_string(action))}, {"timestamp", timestamp}, {"note", note}};
  if (edited_value) j["edited_value"] = *edited_value;
  return j;
}

ReviewDecisionRecord ReviewDecisionRecord::from_json(const json& j) {
  ReviewDecisionRecord r;
  try {
    r.element_id = j.at("element_id").get<std::string>();
    r.run_id = j.at("run_id").get<std::string>();
    r.reviewer_id = j.at("reviewer_id").get<std::string>();
    r.action = parse_review_action(j.at("action").get<std::string>());
    if (j.contains("edited_value")) r.edited_value = j["edited_value"];
    r.timestamp = j.value("timestamp", "");
    r.note = j.value("note", "");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::StorageError, std::string("malformed review record: ") + e.what());
  }
  if (r.action == ReviewAction::edit && !r.edited_value) {
    throw Error(ErrorCode::StorageError, "edit record for " + r.element_id + " has no value");
  }
  return r;
}

std::string review_status(const ReviewDecisionRecord* latest) {
  if (!latest) return "unreviewed";
  return latest->action == ReviewAction::approve ? "approved" : "edited";
}

// ---------------------------------------------------------------------------
// RunStore

RunStore::RunStore(fs::path runs_root, const schema::Registry& registry, Clock clock)
    : root_(std::move(runs_root)), registry_(registry), clock_(std::move(clock)) {
  if (!fs::is_directory(root_)) throw Error(ErrorCode::StorageError, "runs root " + root_.string() + " is not a directory");
}

std::vector<std::string> RunStore::run_ids() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && fs::is_regular_file(entry.path() / "manifest.json")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

fs::path RunStore::run_dir(const std::string& run_id) const {
  static const std::regex safe("[A-Za-z0-9._-]+");
  if (!std::regex_match(run_id, safe) || run_id == "." || run_id == "..") {
    throw Error(ErrorCode::UnknownRun, "no run '" + run_id + "'");
  }
  const fs::path dir = root_ / run_id;
  if (!fs::is_regular_file(dir / "manifest.json")) throw Error(ErrorCode::UnknownRun, "no run '" + run_id + "'");
  return dir;
}

extraction::ExtractionRun RunStore::load(const std::string& run_id) const { return extraction::load_run(run_dir(run_id)); }

json RunStore::summary(const std::string& run_id) const {
  const auto run = load(run_id);
  const auto latest = latest_decisions(run_id);
  std::map<std::string, int> review_counts = {{"unreviewed", 0}, {"approved", 0}, {"edited", 0}};
  int needs_review = 0;
  for (const auto& r : run.results) {
    const auto it = latest.find(r.element_id);
    ++review_counts[review_status(it == latest.end() ? nullptr : &it->second)];
    if (r.needs_review) ++needs_review;
  }
  return {{"run_id", run.run_id},
          {"doc_id", run.doc_id},
          {"mode", std::string(protex::to_string(run.mode))},
          {"registry_version", run.registry_version},
          {"created_at", run.created_at},
          {"element_count", run.results.size()},
          {"needs_review", needs_review},
          {"review_counts", review_counts}};
}

std::vector<ReviewDecisionRecord> RunStore::reviews(const std::string& run_id) const {
  const fs::path log = review_log(run_id);
  std::vector<ReviewDecisionRecord> out;
  if (!fs::exists(log)) return out;
  for (const auto& line : split(read_file(log), '\n')) {
    if (!has_non_space(line)) continue;
    try {
      out.push_back(ReviewDecisionRecord::from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::StorageError, log.string() + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, ReviewDecisionRecord> RunStore::latest_decisions(const std::string& run_id) const {
  std::map<std::string, ReviewDecisionRecord> latest;
  for (auto& r : reviews(run_id)) latest.insert_or_assign(r.element_id, std::move(r));
  return latest;
}

ReviewDecisionRecord RunStore::record_review(const std::string& run_id, const std::string& element_id,
                                             const std::string& reviewer_id, ReviewAction action,
                                             std::optional<json> edited_value, const std::string& note) {
  const auto run = load(run_id);
  if (!run.find(element_id)) throw Error(ErrorCode::UnknownElement, "run " + run_id + " has no element " + element_id);
  if (!has_non_space(reviewer_id)) throw Error(ErrorCode::InvalidArgument, "reviewer_id is required");
  ReviewDecisionRecord rec{element_id, run_id, reviewer_id, action, std::nullopt, clock_.now_iso8601(), note};
  if (action == ReviewAction::edit) {
    if (!edited_value) throw Error(ErrorCode::InvalidArgument, "an edit needs a value");
    const auto report = registry_.validate_instance(element_id, *edited_value);
    if (!report.valid()) {
      std::string msg = element_id + ": edited value rejected";
      for (const auto& e : report.errors) msg += "; " + e.path + " " + e.message;
      throw Error(ErrorCode::ValidationFailed, msg);
    }
    rec.edited_value = std::move(edited_value);
  }
  std::lock_guard lock(write_mu_);
  append_line(review_log(run_id), rec.to_json().dump());
  return rec;
}

namespace {

std::optional<std::string> provenance_link(const std::string& doc_id, const ProvenanceRef& p) {
  if (p.ref.rfind("page:", 0) == 0) return "/api/docs/" + doc_id + "/pages/" + p.ref.substr(5) + "/image";
  if (p.ref == "document") return std::nullopt;
  return "/api/docs/" + doc_id + "/chunks/" + p.ref;
}

}  // namespace

json RunStore::element_json(const ExtractionResult& r, const ReviewDecisionRecord* latest,
                            bool with_schema) const {
  json j = r.to_json();
  j["review_status"] = review_status(latest);
  j["review"] = latest ? latest->to_json() : json(nullptr);
  j["final_value"] = latest && latest->edited_value ? *latest->edited_value : j["value"];
  if (with_schema && registry_.contains(r.element_id)) {
    const auto& spec = registry_.element(r.element_id);
    j["schema"] = spec.schema;
    j["element_name"] = spec.name;
  }
  return j;
}

json RunStore::element_view(const std::string& run_id, const std::string& element_id) const {
  const auto run = load(run_id);
  const auto* r = run.find(element_id);
  if (!r) throw Error(ErrorCode::UnknownElement, "run " + run_id + " has no element " + element_id);
  const auto latest = latest_decisions(run_id);
  const auto it = latest.find(element_id);
  json j = element_json(*r, it == latest.end() ? nullptr : &it->second, true);
  for (std::size_t i = 0; i < r->provenance.size(); ++i) {
    const auto link = provenance_link(run.doc_id, r->provenance[i]);
    j["provenance"][i]["link"] = link ? json(*link) : json(nullptr);
  }
  j["history"] = json::array();
  for (const auto& rec : reviews(run_id)) {
    if (rec.element_id == element_id) j["history"].push_back(rec.to_json());
  }
  return j;
}

json RunStore::elements_view(const std::string& run_id) const {
  const auto run = load(run_id);
  const auto latest = latest_decisions(run_id);
  json out = json::array();
  for (const auto& r : run.results) {
    const auto it = latest.find(r.element_id);
    json j = element_json(r, it == latest.end() ? nullptr : &it->second, false);
    for (std::size_t i = 0; i < r.provenance.size(); ++i) {
      const auto link = provenance_link(run.doc_id, r.provenance[i]);
      j["provenance"][i]["link"] = link ? json(*link) : json(nullptr);
    }
    j.erase("raw_model_output");
    out.push_back(std::move(j));
  }
  return out;
}

json RunStore::export_json(const std::string& run_id) const {
  const auto run = load(run_id);
  const auto latest = latest_decisions(run_id);
  json elements = json::array();
  for (const auto& r : run.results) {
    const auto it = latest.find(r.element_id);
    const ReviewDecisionRecord* d = it == latest.end() ? nullptr : &it->second;
    json prov = json::array();
    for (const auto& p : r.provenance) prov.push_back({{"ref", p.ref}, {"first_page", p.first_page}, {"last_page", p.last_page}});
    elements.push_back({{"element_id", r.element_id},
                        {"category", std::string(schema::to_string(r.category))},
                        {"value", d && d->edited_value ? *d->edited_value : (r.value ? *r.value : json(nullptr))},
                        {"extracted_value", r.value ? *r.value : json(nullptr)},
                        {"status", review_status(d)},
                        {"reviewer", d ? json(d->reviewer_id) : json(nullptr)},
                        {"reviewed_at", d ? json(d->timestamp) : json(nullptr)},
                        {"needs_review", r.needs_review},
                        {"provenance", prov}});
  }
  return {{"run_id", run.run_id},
          {"doc_id", run.doc_id},
          {"mode", std::string(protex::to_string(run.mode))},
          {"registry_version", run.registry_version},
          {"elements", elements}};
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string RunStore::export_table(const std::string& run_id) const {
  const json bundle = export_json(run_id);
  std::string out = "element_id,category,value,status,reviewer\n";
  for (const auto& e : bundle["elements"]) {
    const std::string value = e["value"].is_null() ? "" : e["value"].dump();
    const std::string reviewer = e["reviewer"].is_null() ? "" : e["reviewer"].get<std::string>();
    out += csv_field(e["element_id"].get<std::string>()) + "," + csv_field(e["category"].get<std::string>()) + "," +
           csv_field(value) + "," + csv_field(e["status"].get<std::string>()) + "," + csv_field(reviewer) + "\n";
  }
  return out;
}

chunking::Chunk RunStore::find_chunk(const std::string& doc_id, const std::string& chunk_id) const {
  for (const auto& id : run_ids()) {
    const fs::path dir = root_ / id;
    if (!fs::is_regular_file(dir / "chunks.jsonl")) continue;
    const json m = read_json_file(dir / "manifest.json");
    if (m.value("doc_id", "") != doc_id) continue;
    for (auto& c : chunking::read_chunks_jsonl(dir / "chunks.jsonl")) {
      if (c.chunk_id == chunk_id) return c;
    }
  }
  throw Error(ErrorCode::NotFound, "no chunk " + chunk_id + " for document " + doc_id);
}

fs::path RunStore::page_image(const std::string& doc_id, int page_index) const {
  for (const auto& id : run_ids()) {
    const json m = read_json_file(root_ / id / "manifest.json");
    if (m.value("doc_id", "") != doc_id) continue;
    const std::string pkg_root = m.value("/config/package/root"_json_pointer, std::string());
    if (pkg_root.empty() || !fs::is_directory(pkg_root)) continue;
    const auto pkg = ingest::load_package(pkg_root);
    if (page_index < 1 || page_index > pkg.page_count) break;
    const auto& page = pkg.page(page_index);
    if (page.image_ref && fs::is_regular_file(*page.image_ref)) return *page.image_ref;
  }
  throw Error(ErrorCode::NotFound, "no image for page " + std::to_string(page_index) + " of " + doc_id);
}

// ---------------------------------------------------------------------------
// Api

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownRun:
    case ErrorCode::UnknownElement:
    case ErrorCode::UnknownCategory:
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::ValidationFailed:
      return 422;
    case ErrorCode::AlreadyDecided:
      return 409;
    case ErrorCode::InvalidArgument:
      return 400;
    default:
      return 500;
  }
}

namespace {

ApiResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  return json_response(status, {{"code", code}, {"message", message}});
}

}  // namespace

Api::Api(RunStore& store, std::string bearer_token) : store_(store), token_(std::move(bearer_token)) {}

ApiResponse Api::handle(const ApiRequest& req) const {
  if (!token_.empty()) {
    const auto it = req.headers.find("authorization");
    if (it == req.headers.end() || it->second != "Bearer " + token_) {
      return error_response(401, "Unauthorized", "missing or invalid bearer token");
    }
  }
  try {
    return route(req);
  } catch (const Error& e) {
    return error_response(http_status(e.code()), to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_response(400, "InvalidArgument", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "StorageError", e.what());
  }
}

ApiResponse Api::route(const ApiRequest& req) const {
  static const std::regex runs_re("^/api/runs/?$");
  static const std::regex run_re("^/api/runs/([^/]+)$");
  static const std::regex elements_re("^/api/runs/([^/]+)/elements$");
  static const std::regex element_re("^/api/runs/([^/]+)/elements/([^/]+)$");
  static const std::regex review_re("^/api/runs/([^/]+)/elements/([^/]+)/review$");
  static const std::regex export_re("^/api/runs/([^/]+)/export$");
  static const std::regex chunk_re("^/api/docs/([^/]+)/chunks/([^/]+)$");
  static const std::regex image_re("^/api/docs/([^/]+)/pages/([0-9]+)/image$");

  std::smatch m;
  const std::string& path = req.path;
  if (req.method == "GET") {
    if (std::regex_match(path, runs_re)) {
      json out = json::array();
      for (const auto& id : store_.run_ids()) out.push_back(store_.summary(id));
      return json_response(200, out);
    }
    if (std::regex_match(path, m, run_re)) {
      json out = store_.summary(m[1]);
      out["manifest"] = store_.load(m[1]).manifest();
      return json_response(200, out);
    }
    if (std::regex_match(path, m, elements_re)) return json_response(200, store_.elements_view(m[1]));
    if (std::regex_match(path, m, element_re)) return json_response(200, store_.element_view(m[1], m[2]));
    if (std::regex_match(path, m, export_re)) {
      const auto it = req.query.find("format");
      const std::string format = it == req.query.end() ? "json" : it->second;
      if (format == "json") return json_response(200, store_.export_json(m[1]));
      if (format == "table") return {200, "text/csv", store_.export_table(m[1])};
      throw Error(ErrorCode::InvalidArgument, "format must be json or table");
    }
    if (std::regex_match(path, m, chunk_re)) return json_response(200, chunking::to_json(store_.find_chunk(m[1], m[2])));
    if (std::regex_match(path, m, image_re)) {
      const fs::path image = store_.page_image(m[1], std::stoi(m[2]));
      std::string type = "application/octet-stream";
      const std::string ext = to_lower_ascii(image.extension().string());
      if (ext == ".png") type = "image/png";
      if (ext == ".jpg" || ext == ".jpeg") type = "image/jpeg";
      return {200, type, read_file(image)};
    }
  } else if (req.method == "POST" && std::regex_match(path, m, review_re)) {
    const json body = json::parse(req.body.empty() ? "{}" : req.body);
    if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "review body must be an object");
    const auto action = parse_review_action(body.value("action", ""));
    std::optional<json> value;
    if (body.contains("edited_value")) value = body["edited_value"];
    const auto rec = store_.record_review(m[1], m[2], body.value("reviewer_id", ""), action, value, body.value("note", ""));
    return json_response(200, {{"decision", rec.to_json()}, {"element", store_.element_view(m[1], m[2])}});
  }
  return error_response(404, "NotFound", req.method + " " + path + " is not an endpoint");
}

}  // namespace protex::service
