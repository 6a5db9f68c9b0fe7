// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "protex/adjudication.hpp"
#include "protex/chunker.hpp"
#include "protex/evaluation.hpp"
#include "protex/extraction.hpp"
#include "protex/ingest.hpp"
#include "protex/retrieval.hpp"
#include "protex/schema.hpp"
#include "protex/soe.hpp"
#include "support.hpp"

using namespace protex;
using protex::testing::ScriptedTransport;
using protex::testing::TempDir;

namespace {

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw CheckFailed(what);
}

template <typename F>
void require_throws(ErrorCode code, F&& fn, const std::string& what) {
  try {
    fn();
  } catch (const Error& e) {
    require(e.code() == code, what + ": got " + std::string(to_string(e.code())));
    return;
  }
  throw CheckFailed(what + ": nothing thrown");
}

std::string str(double v) {
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files[fs::relative(entry.path(), root).string()] = read_file(entry.path());
  }
  return files;
}

// ---------------------------------------------------------------------------

void weight_table() {
  const auto start = std::chrono::steady_clock::now();
  const auto& reg = schema::default_registry();
  const auto& table = protex::testing::reference_weights();
  require(reg.elements().size() == table.size(), "element count " + std::to_string(reg.elements().size()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    require(reg.elements()[i].element_id == table[i].first, "element " + std::to_string(i) + " is " + reg.elements()[i].element_id);
    require(reg.elements()[i].weight == table[i].second, table[i].first + " weight " + str(reg.elements()[i].weight));
  }
  for (auto c : schema::kAllCategories) {
    double sum = 0;
    for (const auto* e : reg.category_elements(c)) sum += e->weight > 0 ? e->weight : 0;
    require(std::fabs(sum - 1.0) <= 1e-9, std::string(schema::to_string(c)) + " weights sum to " + str(sum));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  require(secs < 1.0, "took " + str(secs) + "s");
}

/// Registry copy where ie.inclusion and ie.exclusion carry weights w and 1-w.
schema::Registry two_weight_registry(double w) {
  std::map<std::string, std::string> files;
  const auto data = protex::testing::source_dir() / "data";
  for (const char* c : {"gen", "ie", "ae", "inter", "site", "soe"}) {
    files[std::string("registry/") + c + ".json"] = read_file(data / "registry" / (std::string(c) + ".json"));
  }
  for (const char* p : {"extract", "standalone", "repair", "soe", "judge", "adjudicate"}) {
    files[std::string("prompts/") + p + ".txt"] = read_file(data / "prompts" / (std::string(p) + ".txt"));
  }
  json ie = json::parse(files["registry/ie.json"]);
  for (auto& e : ie["elements"]) {
    if (e["element_id"] == "ie.inclusion") e["weight"] = w;
    if (e["element_id"] == "ie.exclusion") e["weight"] = 1.0 - w;
  }
  files["registry/ie.json"] = ie.dump();
  return schema::Registry::from_files(files);
}

void score_mapping() {
  const std::vector<std::pair<double, double>> pairs = {
      {3.8155, 76.31}, {4.0062, 80.12}, {4.7142, 94.28}, {3.3636, 67.27}, {2.5000, 50.00}, {3.4285, 68.57}};
  for (const auto& [mean, percent] : pairs) {
    // Two elements scored 5 and `low` with weights chosen so the weighted
    // mean equals `mean`.
    const double low = mean >= 3.0 ? 3.0 : 0.0;
    const double w = (mean - low) / (5.0 - low);
    const auto reg = two_weight_registry(w);
    const auto cat = eval::aggregate_category({{"ie.inclusion", eval::JudgeScore{"ie.inclusion", 5.0, "", ""}},
                                               {"ie.exclusion", eval::JudgeScore{"ie.exclusion", low, "", ""}}},
                                              reg, schema::Category::ie);
    require(std::fabs(cat.mean_score() - mean) < 1e-9, "mean " + str(cat.mean_score()) + " for " + str(mean));
    require(std::fabs(eval::round_to(cat.percent, 2) - percent) <= 0.005,
            str(mean) + " -> " + str(cat.percent) + ", expected " + str(percent));
  }
}

void judge_fixtures() {
  const json cases = read_json_file(protex::testing::fixture_path("judge_cases.json"));
  require(cases.size() == 3, "three judge fixtures");
  const std::vector<double> expected = {5.0, 4.0, 2.0};
  const auto& reg = schema::default_registry();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& item = cases[i];
    const std::string reply = item["reply"].dump();
    auto transport = std::make_shared<ScriptedTransport>([&](const gateway::Request&) { return reply; });
    auto gw = protex::testing::scripted_gateway(transport);
    const auto& spec = reg.element(item["element_id"].get<std::string>());
    const auto s = eval::judge_element(item["submission"], item["ground_truth"], spec, reg, *gw, gw->role("judge"));
    require(s.value == expected[i], spec.element_id + " scored " + str(s.value));
    std::vector<std::pair<std::string, std::optional<eval::JudgeScore>>> scores;
    for (const auto* e : reg.category_elements(spec.category)) {
      scores.emplace_back(e->element_id, e->element_id == spec.element_id ? std::optional(s) : std::nullopt);
    }
    const auto cat = eval::aggregate_category(scores, reg, spec.category);
    bool recorded = false;
    for (const auto& es : cat.element_scores) {
      if (es.element_id != spec.element_id) continue;
      recorded = es.score && es.score->value == expected[i] &&
                 es.score->rationale == item["reply"]["rationale"].get<std::string>() && es.weight == spec.weight;
    }
    require(recorded, spec.element_id + " element record");
    require(std::fabs(cat.percent - 20.0 * spec.weight * expected[i]) <= 1e-9, spec.element_id + " category percent");
  }
  for (double bad : {-1.0, 0.5, 2.5, 4.2, 6.0}) {
    require(!eval::is_allowed_score(bad), str(bad) + " accepted");
    require(!eval::parse_judge_reply(json({{"score", bad}}).dump()), str(bad) + " parsed");
    auto transport = std::make_shared<ScriptedTransport>(
        [&](const gateway::Request&) { return json({{"score", bad}, {"rationale", "r"}}).dump(); });
    auto gw = protex::testing::scripted_gateway(transport);
    require_throws(
        ErrorCode::JudgeOutputInvalid,
        [&] {
          eval::judge_element(json({{"phase", "x"}}), json({{"phase", "y"}}), reg.element("gen.phase"), reg, *gw,
                              gw->role("judge"));
        },
        "judge reply " + str(bad));
  }
}

void aggregation_oracle() {
  const auto& reg = schema::default_registry();
  std::mt19937_64 rng(31337);
  for (int i = 0; i < 1000; ++i) {
    const auto category = schema::kAllCategories[rng() % 6];
    const std::string prefix = std::string(schema::to_string(category)) + ".";
    std::vector<std::pair<std::string, std::optional<eval::JudgeScore>>> scores;
    double num = 0, den = 0;
    for (const auto& [id, w] : protex::testing::reference_weights()) {
      if (id.rfind(prefix, 0) != 0) continue;
      std::optional<eval::JudgeScore> s;
      if (rng() % 4 != 0) s = eval::JudgeScore{id, eval::kScoreSet[rng() % eval::kScoreSet.size()], "", ""};
      num += w * (s ? s->value : 0.0);
      den += w;
      scores.emplace_back(id, s);
    }
    const double got = eval::aggregate_category(scores, reg, category).percent;
    require(std::fabs(got - 20.0 * num / den) <= 1e-9, "instance " + std::to_string(i));
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (scores[k].second) continue;
      auto filled = scores;
      filled[k].second = eval::JudgeScore{scores[k].first, eval::kScoreSet[1 + rng() % 7], "", ""};
      require(eval::aggregate_category(filled, reg, category).percent >= got - 1e-12,
              "monotonicity, instance " + std::to_string(i));
    }
  }
}

void chunker_round_trip() {
  std::mt19937_64 rng(4096);
  int oversized = 0;
  for (int d = 0; d < 24; ++d) {
    const std::size_t words = d == 0 ? 0 : (d == 1 ? 37000 : rng() % 37000);
    const auto pkg = ingest::make_package("a" + std::to_string(d), protex::testing::synthetic_pages(rng, words));
    const std::string text = pkg.document_text();
    const auto tree = ingest::build_section_tree(pkg);
    chunking::ChunkConfig cfg;
    cfg.max_chunk_tokens = 64 + static_cast<int>(rng() % 600);
    const auto chunks = chunking::chunk_document(pkg, tree, cfg);
    const std::string tag = "document " + std::to_string(d);

    std::string covered;
    std::size_t prev = 0;
    std::map<std::string, std::vector<const chunking::Chunk*>> groups;
    for (const auto& c : chunks) {
      require(c.char_span.start >= prev && c.char_span.end <= text.size(), tag + ": span order");
      require(!has_non_space(std::string_view(text).substr(prev, c.char_span.start - prev)), tag + ": text lost");
      require(c.text == text.substr(c.char_span.start, c.char_span.size()), tag + ": chunk text");
      require(chunking::estimate_tokens(c.text) <= static_cast<std::size_t>(cfg.max_chunk_tokens), tag + ": over cap");
      if (c.split_group) groups[c.split_group->group_id].push_back(&c);
      covered += c.text;
      prev = c.char_span.end;
    }
    require(!has_non_space(std::string_view(text).substr(prev)), tag + ": tail lost");

    std::string expected;
    for (const auto* n : ingest::flatten(tree)) {
      const std::size_t end = n->children.empty() ? n->char_span.end : n->children.front().char_span.start;
      const std::string seg = text.substr(n->char_span.start, end - n->char_span.start);
      if (!has_non_space(seg)) continue;
      expected += seg;
      if (chunking::estimate_tokens(seg) <= static_cast<std::size_t>(cfg.max_chunk_tokens)) continue;
      ++oversized;
      bool reassembled = false;
      for (const auto& [gid, parts] : groups) {
        if (parts.front()->char_span.start != n->char_span.start) continue;
        std::string joined;
        for (const auto* p : parts) joined += p->text;
        reassembled = joined == seg && parts.size() == static_cast<std::size_t>(parts.front()->split_group->part_count);
      }
      require(reassembled, tag + ": oversized section not reassembled");
    }
    require(covered == expected, tag + ": concatenation differs from sectioned text");
  }
  require(oversized > 0, "no oversized sections generated");
}

void retrieval_invariants() {
  using retrieval::cosine;
  const auto v = [](std::vector<double> x) { return EmbeddingVector{std::move(x)}; };
  require(std::fabs(cosine(v({1, 0}), v({1, 0})) - 1.0) <= 1e-9, "cosine 1");
  require(std::fabs(cosine(v({1, 0}), v({0, 1}))) <= 1e-9, "cosine 0");
  require(std::fabs(cosine(v({1, 0}), v({1, 1})) - 1.0 / std::sqrt(2.0)) <= 1e-9, "cosine 1/sqrt2");

  std::mt19937_64 rng(808);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pkg = ingest::make_package("q", protex::testing::synthetic_pages(rng, 2000 + rng() % 8000));
    chunking::ChunkConfig cfg;
    cfg.max_chunk_tokens = 80 + static_cast<int>(rng() % 150);
    const auto chunks = chunking::chunk_document(pkg, ingest::build_section_tree(pkg), cfg);
    retrieval::MockEmbedder emb;
    const auto index = retrieval::build_index(chunks, emb);
    const retrieval::ChunkStore store(chunks);
    retrieval::RetrievalQuery q;
    q.query_texts = {protex::testing::random_words(rng, 3), protex::testing::random_words(rng, 4)};
    q.top_k = 1 + static_cast<int>(rng() % 6);

    const auto bundle = retrieval::search(index, q, emb, store);
    retrieval::MockEmbedder emb2;
    const auto again = retrieval::search(retrieval::build_index(chunks, emb2), q, emb2, retrieval::ChunkStore(chunks));
    require(bundle.to_json().dump() == again.to_json().dump(), "search not reproducible");

    std::set<std::string> ids;
    for (std::size_t i = 0; i < bundle.chunks.size(); ++i) {
      ids.insert(bundle.chunks[i].chunk_id);
      if (i > 0) require(bundle.chunks[i - 1].order_index < bundle.chunks[i].order_index, "document order");
    }
    for (const auto& c : bundle.chunks) {
      if (!c.split_group) continue;
      for (const auto& sib : store.group(c.split_group->group_id)) require(ids.count(sib) == 1, "reunion closure " + sib);
    }
  }
}

void end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  const auto sample = protex::testing::sample_dir();
  require(fs::exists(sample / "package" / "manifest.json"), "sample package missing");
  TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    const std::string cmd = std::string("\"") + PROTEX_CLI_PATH + "\" extract --package \"" + (sample / "package").string() +
                            "\" --mode rag --fixtures \"" + (sample / "fixtures").string() +
                            "\" --timestamp 2024-05-01T12:00:00Z --out \"" + dir->path().string() + "\" > /dev/null";
    require(std::system(cmd.c_str()) == 0, "extract command failed");
  }
  const auto tree_a = read_tree(a.path());
  require(!tree_a.empty(), "empty run directory");
  require(tree_a == read_tree(b.path()), "run directories differ");

  std::vector<fs::path> runs;
  for (const auto& e : fs::directory_iterator(a.path())) runs.push_back(e.path());
  require(runs.size() == 1, "expected one run directory");
  const auto run = extraction::load_run(runs[0]);
  const auto& reg = schema::default_registry();
  require(run.results.size() == reg.elements().size(), "result count " + std::to_string(run.results.size()));
  for (std::size_t i = 0; i < run.results.size(); ++i) {
    const auto& r = run.results[i];
    require(r.element_id == reg.elements()[i].element_id, "result order at " + r.element_id);
    if (r.value) require(!r.provenance.empty(), r.element_id + " has no provenance");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  require(secs < 30.0, "took " + str(secs) + "s");
}

void standalone_guard() {
  std::mt19937_64 rng(55);
  const auto pkg = ingest::make_package("oversized", protex::testing::synthetic_pages(rng, 30000));
  auto transport = std::make_shared<ScriptedTransport>([](const gateway::Request&) { return "{}"; });
  auto gw = protex::testing::scripted_gateway(transport);
  extraction::ExtractionConfig cfg;
  cfg.mode = Mode::standalone;
  cfg.standalone_budget = 20000;
  cfg.timestamp = "2024-01-01T00:00:00Z";
  const extraction::ChainContext ctx{schema::default_registry(), *gw, cfg, cfg.timestamp};
  for (auto c : schema::kAllCategories) {
    require_throws(ErrorCode::ContextLimitExceeded, [&] { extraction::extract_category_standalone(c, pkg, ctx); },
                   std::string(schema::to_string(c)));
  }
  TempDir dir;
  const auto run = extraction::run_extraction(pkg, schema::default_registry(), *gw, cfg, dir.path());
  for (const auto& r : run.results) {
    require(r.error && r.error->code == "ContextLimitExceeded", r.element_id + " not marked ContextLimitExceeded");
  }
  require(transport->completions() == 0, std::to_string(transport->completions()) + " provider calls");
  require(gw->audit().size() == 0, "audit entries recorded");
}

void soe_merge() {
  using soe::SoeSchedule;
  using soe::Visit;
  const auto example = SoeSchedule::from_json(read_json_file(protex::testing::fixture_path("category_docs/soe.json")));
  require(soe::merge_partials({example}).schedule.to_json() == example.to_json(), "identity");
  SoeSchedule first, rest;
  first.visits = {example.visits[0]};
  rest.visits = {example.visits[1], example.visits[2]};
  require(soe::merge_partials({first, rest}).schedule.to_json() == example.to_json(), "disjoint concatenation");
  SoeSchedule p1, p2;
  p1.visits = {{1, "Week 1", {"Informed consent", "Blood Draw"}}};
  p2.visits = {{1, "", {"blood draw", "Vital signs"}}, {2, "Week 3", {"ECG"}}};
  const auto overlap = soe::merge_partials({p1, p2}).schedule;
  require(overlap.visits.size() == 2 && overlap.visits[0].visit_time == "Week 1" &&
              overlap.visits[0].procedures == std::vector<std::string>{"Informed consent", "Blood Draw", "Vital signs"},
          "overlap union");

  std::mt19937_64 rng(500);
  for (int i = 0; i < 500; ++i) {
    std::vector<SoeSchedule> parts(1 + rng() % 4);
    const int visits = 1 + static_cast<int>(rng() % 10);
    for (auto& part : parts) {
      for (int v = 0; v < visits; ++v) {
        if (rng() % 2) continue;
        Visit visit{v + 1, (rng() % 3) ? "Day " + std::to_string(7 * v) : "", {}};
        const int procs = static_cast<int>(rng() % 5);
        for (int p = 0; p < procs; ++p) visit.procedures.push_back("procedure " + std::to_string(rng() % 8));
        part.visits.push_back(visit);
      }
    }
    const auto once = soe::merge_partials(parts).schedule;
    require(soe::merge_partials({once}).schedule.to_json() == once.to_json(), "idempotence, instance " + std::to_string(i));
    require(soe::merge_partials({once, once}).schedule.to_json() == once.to_json(),
            "self-merge, instance " + std::to_string(i));
  }
}

void adjudication_sampling() {
  using adjudication::AdjudicationRecord;
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 1000; ++i) {
    std::vector<AdjudicationRecord> recs(1 + rng() % 60);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      recs[k].doc_id = "d" + std::to_string(rng() % 5);
      recs[k].element_id = "e" + std::to_string(k);
      recs[k].confidence = static_cast<int>(rng() % 101);
    }
    const std::size_t n = rng() % (recs.size() + 1);
    const auto picked = adjudication::select_low_confidence(recs, n);
    const std::set<std::string> chosen(picked.begin(), picked.end());
    require(chosen.size() == n, "selection size");
    int max_sel = -1, min_unsel = 101;
    for (const auto& r : recs) {
      if (chosen.count(r.key())) {
        max_sel = std::max(max_sel, r.confidence);
      } else {
        min_unsel = std::min(min_unsel, r.confidence);
      }
    }
    require(max_sel <= min_unsel, "boundary property, instance " + std::to_string(i));
    const std::size_t pool = recs.size() - n;
    const std::size_t m = pool == 0 ? 0 : rng() % (pool + 1);
    const std::uint64_t seed = rng();
    const auto qc = adjudication::sample_random_qc(recs, picked, m, seed);
    require(qc == adjudication::sample_random_qc(recs, picked, m, seed), "qc seed determinism");
    require(qc.size() == m && std::set<std::string>(qc.begin(), qc.end()).size() == m, "qc size");
    for (const auto& k : qc) require(chosen.count(k) == 0, "qc overlaps low-confidence set");
  }

  TempDir dir;
  std::vector<std::string> low, qc;
  for (int i = 0; i < 40; ++i) low.push_back("p/l" + std::to_string(10 + i));
  for (int i = 0; i < 24; ++i) qc.push_back("p/q" + std::to_string(10 + i));
  adjudication::ReviewLog log(dir / "review.jsonl", Clock(std::string("2024-01-01T00:00:00Z")));
  log.assign(adjudication::plan_reviews(low, qc, {"reviewer-1", "reviewer-2"}));
  int overrides = 0;
  for (const auto& a : log.queue()) {
    adjudication::ReviewDecision d;
    if (a.reason == adjudication::ReviewReason::low_confidence && overrides < 5) {
      d.confirmed = false;
      d.override_value = json({{"v", 1}});
      ++overrides;
    }
    log.decide(a.item, a.reviewer_id, d);
  }
  const auto rep = adjudication::ReviewLog(dir / "review.jsonl").report();
  require(rep.low_confidence.confirmed == 35 && rep.low_confidence.decided == 40, "low-confidence counts");
  require(rep.low_confidence.concordance_percent() == 87.5, "low-confidence " + str(rep.low_confidence.concordance_percent()));
  require(rep.random_qc.confirmed == 24 && rep.random_qc.decided == 24, "qc counts");
  require(rep.random_qc.concordance_percent() == 100.0, "qc " + str(rep.random_qc.concordance_percent()));
}

void calibration() {
  const auto& reg = schema::default_registry();
  const std::vector<double> human = {3.0, 4.0, 4.5, 3.0, 3.5, 4.0, 4.5, 4.0};
  std::vector<eval::BenchmarkPair> bench;
  for (std::size_t i = 0; i < human.size(); ++i) {
    bench.push_back({"gen.study_title", json({{"study_title", "pair-" + std::to_string(i) + "-end"}}),
                     json({{"study_title", "reference"}}), human[i]});
  }
  const auto judge = [&](double offset) {
    auto transport = std::make_shared<ScriptedTransport>([&, offset](const gateway::Request& r) {
      for (std::size_t i = 0; i < human.size(); ++i) {
        if (r.prompt.find("pair-" + std::to_string(i) + "-end") != std::string::npos) {
          return json({{"score", human[i] + offset}, {"rationale", "r"}}).dump();
        }
      }
      return std::string("{}");
    });
    auto gw = protex::testing::scripted_gateway(transport);
    return eval::calibrate_judge(bench, reg, *gw, gw->role("judge"));
  };
  const auto perfect = judge(0.0);
  require(perfect.n == human.size() && perfect.mae == 0.0 && perfect.mean_signed_error == 0.0,
          "perfect judge MAE " + str(perfect.mae));
  const auto offset = judge(0.5);
  require(offset.mae == 0.5, "offset judge MAE " + str(offset.mae));
  require(offset.mean_signed_error == 0.5, "offset judge bias " + str(offset.mean_signed_error));
  require(!offset.no_significant_bias(), "offset judge reported unbiased");
}

void corpus_filter() {
  const json raw = read_json_file(protex::testing::fixture_path("studies_filter.json"));
  require(raw.size() == 9, "fixture size");
  const std::regex countries("Canada|United States");
  std::vector<std::string> expected;
  std::set<int> clause_failures;
  for (const auto& r : raw) {
    const bool drug = r["interventions"].get<std::string>().rfind("intervention_type:Drug", 0) == 0;
    const bool treatment = r["primary_purpose"] == "Treatment";
    const bool where = std::regex_search(r["location_countries"].get<std::string>(), countries);
    if (!drug) clause_failures.insert(0);
    if (!treatment) clause_failures.insert(1);
    if (!where) clause_failures.insert(2);
    if (drug && treatment && where) expected.push_back(r["nct_id"]);
  }
  require(clause_failures.size() == 3, "fixture does not exercise every clause");
  const auto kept = ingest::filter_studies(ingest::load_study_metadata(protex::testing::fixture_path("studies_filter.json")));
  std::vector<std::string> got;
  for (const auto& k : kept) got.push_back(k.nct_id.value_or(""));
  require(got == expected, "kept " + join(got, ",") + ", expected " + join(expected, ","));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void()>>> criteria = {
      {"weight-table fidelity", weight_table},
      {"score mapping", score_mapping},
      {"judge fixtures", judge_fixtures},
      {"aggregation oracle", aggregation_oracle},
      {"chunker round-trip", chunker_round_trip},
      {"retrieval invariants", retrieval_invariants},
      {"end-to-end determinism", end_to_end},
      {"standalone guard", standalone_guard},
      {"soe merge", soe_merge},
      {"adjudication sampling", adjudication_sampling},
      {"calibration harness", calibration},
      {"corpus filter", corpus_filter},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string reason;
    try {
      check();
    } catch (const std::exception& e) {
      reason = e.what();
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    if (reason.empty()) {
      std::cout << "PASS  " << name << " (" << ms << " ms)\n";
    } else {
      ++failures;
      std::cout << "FAIL  " << name << " (" << ms << " ms): " << reason << "\n";
    }
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}
