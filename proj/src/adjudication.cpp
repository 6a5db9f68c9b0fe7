#include "protex/adjudication.hpp"

#include <algorithm>
#include <set>

#include "protex/chunker.hpp"

namespace protex::adjudication {

std::string AdjudicationRecord::key() const { return doc_id.empty() ? element_id : doc_id + "/" + element_id; }

json AdjudicationRecord::to_json() const {
  return {{"doc_id", doc_id},
          {"element_id", element_id},
          {"final_value", final_value},
          {"choice", choice},
          {"justification", justification},
          {"confidence", confidence},
          {"candidate_order", candidate_order},
          {"adjudicator_config_id", adjudicator_config_id},
          {"windowed", windowed}};
}

AdjudicationRecord AdjudicationRecord::from_json(const json& j) {
  AdjudicationRecord r;
  try {
    r.doc_id = j.value("doc_id", "");
    r.element_id = j.at("element_id").get<std::string>();
    r.final_value = j.value("final_value", json(nullptr));
    r.choice = j.value("choice", "");
    r.justification = j.value("justification", "");
    r.confidence = j.at("confidence").get<int>();
    r.candidate_order = j.value("candidate_order", std::vector<std::size_t>{});
    r.adjudicator_config_id = j.value("adjudicator_config_id", "");
    r.windowed = j.value("windowed", false);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed adjudication record: ") + e.what());
  }
  if (r.confidence < 0 || r.confidence > 100) {
    throw Error(ErrorCode::InvalidArgument, r.key() + ": confidence outside 0-100");
  }
  return r;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::InvalidArgument, "uniform_below needs a positive bound");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % bound;
  }
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::string candidate_label(std::size_t position) {
  std::string label;
  std::size_t k = position;
  do {
    label.insert(label.begin(), static_cast<char>('A' + k % 26));
    k = k / 26;
  } while (k-- > 0);
  return label;
}

namespace {

std::optional<int> confidence_of(const json& reply) {
  if (!reply.contains("confidence")) return std::nullopt;
  const json& c = reply["confidence"];
  if (c.is_number_integer()) {
    const auto v = c.get<long long>();
    if (v >= 0 && v <= 100) return static_cast<int>(v);
    return std::nullopt;
  }
  if (c.is_number_float()) {
    const double v = c.get<double>();
    if (v == static_cast<double>(static_cast<long long>(v)) && v >= 0 && v <= 100) return static_cast<int>(v);
  }
  return std::nullopt;
}

}  // namespace

AdjudicationRecord adjudicate_element(const std::string& protocol_text, const schema::ElementSpec& spec,
                                      const std::vector<AnnotationCandidate>& candidates,
                                      const schema::Registry& registry, gateway::Gateway& gw,
                                      const AdjudicateOptions& options) {
  if (candidates.size() < 2) throw Error(ErrorCode::InvalidArgument, spec.element_id + ": need at least two candidates");
  for (const auto& c : candidates) {
    if (c.element_id != spec.element_id) {
      throw Error(ErrorCode::InvalidArgument, "candidate for " + c.element_id + " passed for " + spec.element_id);
    }
  }
  AdjudicationRecord record;
  record.doc_id = options.doc_id;
  record.element_id = spec.element_id;
  record.adjudicator_config_id = gw.provider(options.provider_id).config_id();
  record.candidate_order = seeded_permutation(candidates.size(), seeded_hash64(spec.element_id, options.seed));

  std::map<std::string, std::size_t> by_label;
  std::string listed;
  for (std::size_t pos = 0; pos < record.candidate_order.size(); ++pos) {
    const auto& c = candidates[record.candidate_order[pos]];
    const std::string label = candidate_label(pos);
    by_label[label] = record.candidate_order[pos];
    listed += "Candidate " + label + ":\n" + (c.value ? c.value->dump(2) : std::string("null")) + "\n\n";
  }
  std::map<std::string, std::string> fields = {{"element_id", spec.element_id},
                                               {"element_name", spec.name},
                                               {"instructions", spec.instructions},
                                               {"schema", spec.schema.dump(2)},
                                               {"candidates", listed},
                                               {"context", protocol_text}};
  const auto& provider = gw.provider(options.provider_id);
  std::string prompt = schema::fill_template(registry.prompt("adjudicate"), fields);
  if (chunking::estimate_tokens(prompt, provider.token_estimator) > provider.max_context_tokens) {
    if (!options.window) {
      throw Error(ErrorCode::ContextLimitExceeded, spec.element_id + ": protocol text exceeds the adjudicator context");
    }
    fields["context"] = options.window(spec);
    prompt = schema::fill_template(registry.prompt("adjudicate"), fields);
    record.windowed = true;
  }

  const auto resolve_value = [&](const json& reply) -> std::optional<json> {
    if (reply.contains("value") && !reply["value"].is_null()) return reply["value"];
    if (reply.contains("choice") && reply["choice"].is_string()) {
      const auto it = by_label.find(std::string(trim(reply["choice"].get<std::string>())));
      if (it != by_label.end() && candidates[it->second].value) return *candidates[it->second].value;
    }
    return std::nullopt;
  };
  const auto outcome = generate_json(
      [&](const std::string& p) { return gw.complete(options.provider_id, p).text; }, prompt,
      [&](const json& reply) {
        schema::ValidationReport r;
        if (!confidence_of(reply)) {
          r.errors.push_back({"/confidence", "type_mismatch", "confidence must be an integer from 0 to 100"});
        }
        if (!resolve_value(reply)) {
          r.errors.push_back({"/value", "missing_required", "give the adjudicated value or a candidate label"});
        }
        return r;
      },
      options.attempts, registry.prompt("repair"));
  if (!outcome.parsed || !outcome.validation.valid()) {
    throw Error(ErrorCode::ParseFailure, spec.element_id + ": adjudicator reply invalid after " +
                                             std::to_string(outcome.attempts) + " attempts");
  }
  const json& reply = *outcome.parsed;
  record.final_value = *resolve_value(reply);
  record.confidence = *confidence_of(reply);
  record.choice = reply.value("choice", json("merged")).is_string() ? reply.value("choice", std::string("merged")) : "merged";
  if (reply.contains("rationale") && reply["rationale"].is_string()) {
    record.justification = reply["rationale"].get<std::string>();
  } else if (reply.contains("justification") && reply["justification"].is_string()) {
    record.justification = reply["justification"].get<std::string>();
  }
  return record;
}

std::string retrieval_window(const extraction::DocumentIndex& doc, retrieval::Embedder& embedder,
                             const schema::ElementSpec& spec, int k) {
  retrieval::RetrievalQuery q;
  q.query_texts = spec.retrieval_queries;
  q.top_k = k;
  q.reunion = false;
  q.order_by_document = false;
  auto bundle = retrieval::search(doc.index, q, embedder, doc.store);
  std::vector<std::size_t> idx(bundle.chunks.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (bundle.provenance[a].similarity != bundle.provenance[b].similarity) {
      return bundle.provenance[a].similarity > bundle.provenance[b].similarity;
    }
    return bundle.chunks[a].order_index < bundle.chunks[b].order_index;
  });
  if (idx.size() > static_cast<std::size_t>(k)) idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return bundle.chunks[a].order_index < bundle.chunks[b].order_index;
  });
  retrieval::ContextBundle window;
  for (std::size_t i : idx) {
    window.chunks.push_back(bundle.chunks[i]);
    window.provenance.push_back(bundle.provenance[i]);
  }
  return window.render();
}

std::vector<std::string> select_low_confidence(const std::vector<AdjudicationRecord>& records, std::size_t n) {
  if (n > records.size()) {
    throw Error(ErrorCode::NTooLarge, "asked for " + std::to_string(n) + " of " + std::to_string(records.size()) + " records");
  }
  std::vector<std::pair<int, std::string>> ranked;
  for (const auto& r : records) ranked.emplace_back(r.confidence, r.key());
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].second);
  return out;
}

std::vector<std::string> sample_random_qc(const std::vector<AdjudicationRecord>& records,
                                          const std::vector<std::string>& exclude, std::size_t n, std::uint64_t seed) {
  const std::set<std::string> excluded(exclude.begin(), exclude.end());
  std::set<std::string> pool_set;
  for (const auto& r : records) {
    if (!excluded.count(r.key())) pool_set.insert(r.key());
  }
  std::vector<std::string> pool(pool_set.begin(), pool_set.end());
  if (n > pool.size()) {
    throw Error(ErrorCode::NTooLarge, "asked for " + std::to_string(n) + " of " + std::to_string(pool.size()) + " eligible records");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

// ---------------------------------------------------------------------------
// Review

std::string_view to_string(ReviewReason r) { return r == ReviewReason::low_confidence ? "low_confidence" : "random_qc"; }

ReviewReason parse_review_reason(std::string_view s) {
  if (s == "low_confidence") return ReviewReason::low_confidence;
  if (s == "random_qc") return ReviewReason::random_qc;
  throw Error(ErrorCode::InvalidArgument, "unknown review reason '" + std::string(s) + "'");
}

json ReviewAssignment::to_json() const {
  json j = {{"item", item}, {"reviewer_id", reviewer_id}, {"reason", std::string(to_string(reason))}};
  if (decision) {
    j["decision"] = {{"outcome", decision->confirmed ? "confirmed" : "overridden"},
                     {"timestamp", decision->timestamp},
                     {"note", decision->note}};
    if (decision->override_value) j["decision"]["value"] = *decision->override_value;
  } else {
    j["decision"] = nullptr;
  }
  return j;
}

std::vector<ReviewAssignment> plan_reviews(std::vector<std::string> low_confidence,
                                           const std::vector<std::string>& random_qc,
                                           const std::vector<std::string>& reviewers) {
  if (reviewers.empty()) throw Error(ErrorCode::InvalidArgument, "at least one reviewer is required");
  std::sort(low_confidence.begin(), low_confidence.end());
  std::vector<ReviewAssignment> plan;
  for (std::size_t i = 0; i < low_confidence.size(); ++i) {
    plan.push_back({low_confidence[i], reviewers[i % reviewers.size()], ReviewReason::low_confidence, std::nullopt});
  }
  for (const auto& item : random_qc) {
    for (const auto& reviewer : reviewers) plan.push_back({item, reviewer, ReviewReason::random_qc, std::nullopt});
  }
  return plan;
}

double BucketReport::concordance_percent() const {
  const std::size_t total = confirmed + overridden;
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(confirmed) / static_cast<double>(total);
}

json BucketReport::to_json() const {
  return {{"assigned", assigned},
          {"decided", decided},
          {"pending", pending},
          {"confirmed", confirmed},
          {"overridden", overridden},
          {"concordance_percent", concordance_percent()}};
}

json ConcordanceReport::to_json() const {
  return {{"low_confidence", low_confidence.to_json()}, {"random_qc", random_qc.to_json()}};
}

ConcordanceReport concordance(const std::vector<ReviewAssignment>& assignments) {
  ConcordanceReport report;
  for (ReviewReason reason : {ReviewReason::low_confidence, ReviewReason::random_qc}) {
    std::map<std::string, std::vector<const ReviewAssignment*>> items;
    for (const auto& a : assignments) {
      if (a.reason == reason) items[a.item].push_back(&a);
    }
    BucketReport& b = reason == ReviewReason::low_confidence ? report.low_confidence : report.random_qc;
    for (const auto& [item, list] : items) {
      ++b.assigned;
      bool all_decided = true;
      bool all_confirmed = true;
      for (const auto* a : list) {
        all_decided = all_decided && a->decision.has_value();
        all_confirmed = all_confirmed && a->decision && a->decision->confirmed;
      }
      if (!all_decided) {
        ++b.pending;
        continue;
      }
      ++b.decided;
      if (all_confirmed) {
        ++b.confirmed;
      } else {
        ++b.overridden;
      }
    }
  }
  return report;
}

ReviewLog::ReviewLog(fs::path path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {
  if (!fs::exists(path_)) return;
  const std::string contents = read_file(path_);
  std::size_t line_no = 0;
  for (const auto& line : split(contents, '\n')) {
    ++line_no;
    if (!has_non_space(line)) continue;
    try {
      apply(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::StorageError, path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

ReviewAssignment* ReviewLog::find(const std::string& item, const std::string& reviewer_id) {
  for (auto& a : assignments_) {
    if (a.item == item && a.reviewer_id == reviewer_id) return &a;
  }
  return nullptr;
}

void ReviewLog::apply(const json& event) {
  const std::string kind = event.at("event").get<std::string>();
  const std::string item = event.at("item").get<std::string>();
  const std::string reviewer = event.at("reviewer_id").get<std::string>();
  if (kind == "assign") {
    if (!find(item, reviewer)) {
      assignments_.push_back({item, reviewer, parse_review_reason(event.at("reason").get<std::string>()), std::nullopt});
    }
    return;
  }
  if (kind != "decide") throw Error(ErrorCode::StorageError, "unknown review event '" + kind + "'");
  ReviewAssignment* a = find(item, reviewer);
  if (!a) throw Error(ErrorCode::StorageError, "decision for unassigned item " + item);
  if (a->decision) throw Error(ErrorCode::AlreadyDecided, item + " was already decided by " + reviewer);
  ReviewDecision d;
  d.confirmed = event.at("outcome").get<std::string>() == "confirmed";
  if (event.contains("value")) d.override_value = event["value"];
  d.timestamp = event.value("timestamp", "");
  d.note = event.value("note", "");
  a->decision = d;
}

void ReviewLog::assign(const std::vector<ReviewAssignment>& plan) {
  std::lock_guard lock(mu_);
  for (const auto& a : plan) {
    if (find(a.item, a.reviewer_id)) continue;
    const json event = {{"event", "assign"}, {"item", a.item}, {"reviewer_id", a.reviewer_id},
                        {"reason", std::string(to_string(a.reason))}};
    append_line(path_, event.dump());
    apply(event);
  }
}

const ReviewAssignment& ReviewLog::decide(const std::string& item, const std::string& reviewer_id, ReviewDecision decision) {
  std::lock_guard lock(mu_);
  ReviewAssignment* a = find(item, reviewer_id);
  if (!a) throw Error(ErrorCode::NotFound, "no assignment of " + item + " to " + reviewer_id);
  if (a->decision) throw Error(ErrorCode::AlreadyDecided, item + " was already decided by " + reviewer_id);
  if (!decision.confirmed && !decision.override_value) {
    throw Error(ErrorCode::InvalidArgument, "an override needs a replacement value");
  }
  if (decision.timestamp.empty()) decision.timestamp = clock_.now_iso8601();
  json event = {{"event", "decide"},
                {"item", item},
                {"reviewer_id", reviewer_id},
                {"outcome", decision.confirmed ? "confirmed" : "overridden"},
                {"timestamp", decision.timestamp},
                {"note", decision.note}};
  if (decision.override_value) event["value"] = *decision.override_value;
  append_line(path_, event.dump());
  apply(event);
  return *a;
}

std::vector<ReviewAssignment> ReviewLog::queue(const std::string& reviewer_id) const {
  std::lock_guard lock(mu_);
  std::vector<ReviewAssignment> out;
  for (const auto& a : assignments_) {
    if (!a.decision && (reviewer_id.empty() || a.reviewer_id == reviewer_id)) out.push_back(a);
  }
  return out;
}

std::map<std::string, std::vector<AnnotationCandidate>> load_candidates(const std::vector<fs::path>& source_dirs,
                                                                        const schema::Registry& registry) {
  std::map<std::string, std::vector<AnnotationCandidate>> out;
  for (const auto& spec : registry.elements()) {
    std::vector<AnnotationCandidate> cands;
    bool any = false;
    for (const auto& dir : source_dirs) {
      const fs::path file = dir / (spec.element_id + ".json");
      AnnotationCandidate c{spec.element_id, std::nullopt, fs::path(dir).lexically_normal().filename().string()};
      if (c.source_label.empty()) c.source_label = dir.parent_path().filename().string();
      if (fs::is_regular_file(file)) {
        json v = read_json_file(file);
        if (!v.is_null()) {
          c.value = std::move(v);
          any = true;
        }
      }
      cands.push_back(std::move(c));
    }
    if (any) out.emplace(spec.element_id, std::move(cands));
  }
  return out;
}

}  // namespace protex::adjudication
