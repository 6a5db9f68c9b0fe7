#include <gtest/gtest.h>

#include <random>

#include "protex/soe.hpp"
#include "support.hpp"

using namespace protex;
using namespace protex::soe;

namespace {

SoeSchedule example_schedule() {
  return SoeSchedule::from_json(read_json_file(protex::testing::fixture_path("category_docs/soe.json")));
}

std::string flip_case(std::string s, std::mt19937_64& rng) {
  for (auto& c : s) {
    if (rng() % 3 == 0) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return s;
}

struct Instance {
  SoeSchedule truth;
  std::vector<SoeSchedule> parts;
};

/// A schedule cut into overlapping page-ordered partial views. Every visit is
/// complete on at least one page; other pages may repeat a subset of its
/// procedures, with a blank time or altered letter case.
Instance random_instance(std::mt19937_64& rng) {
  Instance inst;
  const int n_visits = 1 + static_cast<int>(rng() % 12);
  for (int v = 0; v < n_visits; ++v) {
    Visit visit;
    visit.visit_number = (rng() % 2) ? json(v + 1) : json("V" + std::to_string(v + 1));
    visit.visit_time = "Week " + std::to_string(2 * v + 1);
    const int n_proc = 1 + static_cast<int>(rng() % 6);
    for (int p = 0; p < n_proc; ++p) visit.procedures.push_back("proc " + std::to_string(v) + "-" + std::to_string(p));
    inst.truth.visits.push_back(visit);
  }
  const int n_pages = 1 + static_cast<int>(rng() % 4);
  std::vector<int> home(n_visits);
  for (int v = 0; v < n_visits; ++v) home[v] = std::min(n_pages - 1, v * n_pages / n_visits);
  inst.parts.resize(n_pages);
  for (int p = 0; p < n_pages; ++p) {
    for (int v = 0; v < n_visits; ++v) {
      const Visit& t = inst.truth.visits[v];
      if (home[v] == p) {
        inst.parts[p].visits.push_back(t);
      } else if (std::abs(home[v] - p) == 1 && rng() % 2 == 0) {
        Visit partial{t.visit_number, (rng() % 2) ? t.visit_time : "", {}};
        for (const auto& proc : t.procedures) {
          if (rng() % 2) partial.procedures.push_back(flip_case(proc, rng));
        }
        inst.parts[p].visits.push_back(partial);
      }
    }
  }
  return inst;
}

/// Expected merge: visits in order of first appearance across pages, the
/// known time, and procedures in order of first appearance with the first
/// spelling kept.
SoeSchedule expected_merge(const Instance& inst) {
  SoeSchedule out;
  std::vector<int> order;
  std::map<std::string, std::size_t> index_of;
  for (std::size_t v = 0; v < inst.truth.visits.size(); ++v) index_of[inst.truth.visits[v].visit_number.dump()] = v;
  std::vector<bool> placed(inst.truth.visits.size(), false);
  for (const auto& part : inst.parts) {
    for (const auto& visit : part.visits) {
      const std::size_t v = index_of.at(visit.visit_number.dump());
      if (!placed[v]) {
        placed[v] = true;
        order.push_back(static_cast<int>(v));
      }
    }
  }
  for (int v : order) {
    Visit merged{inst.truth.visits[v].visit_number, inst.truth.visits[v].visit_time, {}};
    std::set<std::string> seen;
    for (const auto& part : inst.parts) {
      for (const auto& visit : part.visits) {
        if (visit.visit_number != merged.visit_number) continue;
        for (const auto& proc : visit.procedures) {
          if (seen.insert(to_lower_ascii(proc)).second) merged.procedures.push_back(proc);
        }
      }
    }
    out.visits.push_back(merged);
  }
  return out;
}

}  // namespace

TEST(Merge, SinglePartIsIdentity) {
  const auto s = example_schedule();
  const auto m = merge_partials({s});
  EXPECT_EQ(m.schedule.to_json(), s.to_json());
  EXPECT_TRUE(m.conflicts.empty());
  EXPECT_TRUE(merge_partials({}).schedule.visits.empty());
}

TEST(Merge, DisjointPartsConcatenate) {
  const auto s = example_schedule();
  SoeSchedule a, b;
  a.visits = {s.visits[0]};
  b.visits = {s.visits[1], s.visits[2]};
  EXPECT_EQ(merge_partials({a, b}).schedule.to_json(), s.to_json());
}

TEST(Merge, OverlappingVisitUnionsProcedures) {
  SoeSchedule a = SoeSchedule::from_json(json::parse(
      R"([{"visit_number":2,"visit_time":"Week 3 to 11","procedures":[{"procedure_name":"AE assessment"}]}])"));
  SoeSchedule b = SoeSchedule::from_json(json::parse(
      R"({"schedule_of_events":[{"visit_number":"2","visit_time":"","procedures":[{"procedure_name":"ae assessment"},{"procedure_name":"Vital signs"}]},
          {"visit_number":3,"visit_time":"Week 12","procedures":[]}]})"));
  const auto m = merge_partials({a, b});
  ASSERT_EQ(m.schedule.visits.size(), 2u);
  EXPECT_EQ(m.schedule.visits[0].visit_time, "Week 3 to 11");
  EXPECT_EQ(m.schedule.visits[0].procedures, (std::vector<std::string>{"AE assessment", "Vital signs"}));
  EXPECT_TRUE(m.conflicts.empty());
}

TEST(Merge, DifferentTimesForOneVisitAreConflicts) {
  SoeSchedule a, b;
  a.visits = {{2, "Week 2", {"Blood draw"}}};
  b.visits = {{2, "Week 3", {"ECG"}}, {2, "week 2", {"ECG"}}};
  const auto m = merge_partials({a, b});
  ASSERT_EQ(m.schedule.visits.size(), 2u);
  ASSERT_EQ(m.conflicts.size(), 1u);
  EXPECT_EQ(m.conflicts[0], json(2));
  EXPECT_EQ(m.schedule.visits[0].procedures, (std::vector<std::string>{"Blood draw", "ECG"}));
  EXPECT_EQ(m.schedule.visits[1].visit_time, "Week 3");
}

TEST(Merge, RandomInstancesMatchOracleAndAreIdempotent) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 500; ++i) {
    const Instance inst = random_instance(rng);
    const auto merged = merge_partials(inst.parts);
    ASSERT_EQ(merged.schedule.to_json(), expected_merge(inst).to_json()) << "instance " << i;
    EXPECT_TRUE(merged.conflicts.empty());
    EXPECT_EQ(merge_partials({merged.schedule}).schedule.to_json(), merged.schedule.to_json());
    EXPECT_EQ(merge_partials({merged.schedule, merged.schedule}).schedule.to_json(), merged.schedule.to_json());
    std::size_t total = 0;
    for (const auto& v : merged.schedule.visits) total += v.procedures.size();
    std::size_t truth_total = 0;
    for (const auto& v : inst.truth.visits) truth_total += v.procedures.size();
    EXPECT_EQ(total, truth_total);
  }
}

TEST(Schedule, JsonShapes) {
  const auto s = example_schedule();
  ASSERT_EQ(s.visits.size(), 3u);
  EXPECT_EQ(s.visits[2].visit_number, json(18));
  EXPECT_EQ(s.visits[0].procedures[1], "Informed consent");
  EXPECT_EQ(s.to_json(), read_json_file(protex::testing::fixture_path("category_docs/soe.json")));
  EXPECT_EQ(SoeSchedule::from_json(s.to_json()["schedule_of_events"]).to_json(), s.to_json());
  EXPECT_THROW(SoeSchedule::from_json(json("table")), Error);
}

TEST(Batches, ConsecutiveRunsCutAtLimit) {
  EXPECT_EQ(batch_pages({6, 7}, 4), (std::vector<std::vector<int>>{{6, 7}}));
  EXPECT_EQ(batch_pages({9, 3, 4, 5, 6, 7, 4}, 2), (std::vector<std::vector<int>>{{3, 4}, {5, 6}, {7}, {9}}));
  EXPECT_TRUE(batch_pages({}, 4).empty());
  EXPECT_THROW(batch_pages({1}, 0), Error);
}

TEST(Detection, HeuristicScore) {
  const std::string table =
      "Procedure        | V1 | V2 | V3 | V4\n"
      "Informed consent | X  |    |    |\n"
      "Blood draw       | X  | X  |    | X\n"
      "AE assessment    |    | X  | X  | X\n";
  const std::string prose = "The study will enroll adults.\nEach participant signs consent before screening.\n";
  EXPECT_GE(heuristic_page_score(table), kDefaultTableThreshold);
  EXPECT_DOUBLE_EQ(heuristic_page_score(prose), 0.0);
  EXPECT_DOUBLE_EQ(heuristic_page_score(""), 0.0);
  EXPECT_LE(heuristic_page_score(table), 1.0);

  auto pkg = ingest::make_package("t", {prose, table, prose});
  HeuristicDetector det;
  const auto regions = detect_tables(pkg, det);
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_EQ(regions[0].page_index, 2);
  EXPECT_EQ(regions[0].detector_id, "layout-heuristic");
}

TEST(Extraction, NoRegionsAndMissingImages) {
  const auto pkg = ingest::make_package("t", {"a", "b"});
  gateway::Gateway gw(gateway::GatewayConfig::mock({}));
  const SoeOptions opts{gw.role("multimodal"), 3, "2024-01-01T00:00:00Z"};
  const auto none = extract_soe(pkg, {}, gw, schema::default_registry(), opts);
  ASSERT_TRUE(none.error);
  EXPECT_EQ(none.error->code, "NoTablesDetected");
  EXPECT_TRUE(none.needs_review);
  EXPECT_FALSE(none.value);
  try {
    extract_soe(pkg, {{2, std::nullopt, 0.9, "x"}}, gw, schema::default_registry(), opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoPageImages);
  }
  EXPECT_EQ(gw.attempts(opts.provider_id), 0u);
}

TEST(Extraction, SamplePackageTables) {
  const auto root = protex::testing::sample_dir();
  if (!fs::exists(root / "package" / "manifest.json")) GTEST_SKIP() << "sample data not generated";
  const auto pkg = ingest::load_package(root / "package");
  HeuristicDetector det;
  const auto regions = detect_tables(pkg, det);
  ASSERT_EQ(regions.size(), 2u);
  EXPECT_EQ(regions[0].page_index, 6);
  EXPECT_EQ(regions[1].page_index, 7);
  gateway::Gateway gw(gateway::GatewayConfig::mock(root / "fixtures"));
  const auto r = extract_soe(pkg, regions, gw, schema::default_registry(), {gw.role("multimodal"), 3, "t"});
  EXPECT_FALSE(r.error);
  ASSERT_TRUE(r.value);
  EXPECT_TRUE(r.validation.valid());
  ASSERT_EQ(r.provenance.size(), 2u);
  EXPECT_EQ(r.provenance[0].ref, "page:6");
  EXPECT_EQ(r.provenance[1].ref, "page:7");
  EXPECT_EQ(gw.attempts(gw.role("multimodal")), 1u);
}
