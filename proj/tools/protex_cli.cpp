#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "protex/adjudication.hpp"
#include "protex/evaluation.hpp"
#include "protex/extraction.hpp"
#include "protex/service.hpp"

using namespace protex;

namespace {

struct ProviderFlags {
  std::string providers;
  std::string fixtures;
  std::string audit_log;

  void add(CLI::App* app) {
    app->add_option("--providers", providers, "Provider config file");
    app->add_option("--fixtures", fixtures, "Mock fixture directory (used when --providers is absent)");
    app->add_option("--audit-log", audit_log, "Append audit entries to this JSONL file");
  }

  std::unique_ptr<gateway::Gateway> make() const {
    gateway::GatewayConfig cfg;
    if (!providers.empty()) {
      cfg = gateway::GatewayConfig::load(providers);
    } else if (!fixtures.empty()) {
      cfg = gateway::GatewayConfig::mock(fixtures);
    } else {
      throw Error(ErrorCode::InvalidConfig, "one of --providers or --fixtures is required");
    }
    auto audit = std::make_shared<gateway::AuditLog>(audit_log.empty() ? std::nullopt : std::optional<fs::path>(audit_log));
    return std::make_unique<gateway::Gateway>(std::move(cfg), std::move(audit));
  }
};

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    if (!fs::path(out).parent_path().empty()) fs::create_directories(fs::path(out).parent_path());
    write_file_atomic(out, text);
  }
}

const schema::Registry& registry_from(const std::string& dir) {
  static std::unique_ptr<schema::Registry> custom;
  if (dir.empty()) return schema::default_registry();
  custom = std::make_unique<schema::Registry>(schema::Registry::load(fs::path(dir) / "registry", fs::path(dir) / "prompts"));
  return *custom;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& part : split(s, ',')) {
    const auto t = trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<adjudication::AdjudicationRecord> read_records(const fs::path& path) {
  std::vector<adjudication::AdjudicationRecord> out;
  for (const auto& line : split(read_file(path), '\n')) {
    if (has_non_space(line)) out.push_back(adjudication::AdjudicationRecord::from_json(json::parse(line)));
  }
  return out;
}

service::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Protocol extraction pipeline"};
  app.require_subcommand(1);
  std::string registry_dir;
  app.add_option("--registry-dir", registry_dir, "Directory with registry/ and prompts/ (default: bundled)");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Load a document package or filter study metadata");
  std::string pkg_path, studies_path, out_path;
  bool show_tree = false;
  ingest_cmd->add_option("--package", pkg_path, "Document package directory");
  ingest_cmd->add_flag("--tree", show_tree, "Print the section tree");
  ingest_cmd->add_option("--filter-studies", studies_path, "Study metadata file (.json, .csv or .tsv) to filter");
  ingest_cmd->add_option("--out", out_path, "Output file");

  // chunk
  auto* chunk_cmd = app.add_subcommand("chunk", "Chunk a document package");
  chunking::ChunkConfig chunk_cfg;
  chunk_cmd->add_option("--package", pkg_path)->required();
  chunk_cmd->add_option("--max-tokens", chunk_cfg.max_chunk_tokens);
  chunk_cmd->add_option("--overlap", chunk_cfg.overlap_tokens);
  chunk_cmd->add_option("--out", out_path, "chunks.jsonl destination");

  // index
  auto* index_cmd = app.add_subcommand("index", "Chunk and embed a document package");
  ProviderFlags pf;
  index_cmd->add_option("--package", pkg_path)->required();
  index_cmd->add_option("--max-tokens", chunk_cfg.max_chunk_tokens);
  index_cmd->add_option("--out", out_path, "index.json destination");
  pf.add(index_cmd);

  // extract
  auto* extract_cmd = app.add_subcommand("extract", "Run extraction over a package");
  extraction::ExtractionConfig ecfg;
  std::string mode = "rag", categories = "all";
  extract_cmd->add_option("--package", pkg_path)->required();
  extract_cmd->add_option("--mode", mode)->check(CLI::IsMember({"rag", "standalone"}));
  extract_cmd->add_option("--categories", categories, "Comma-separated categories or 'all'");
  extract_cmd->add_option("--timestamp", ecfg.timestamp, "Fixed ISO-8601 timestamp");
  extract_cmd->add_option("--top-k", ecfg.top_k);
  extract_cmd->add_option("--parallelism", ecfg.parallelism);
  extract_cmd->add_option("--max-tokens", ecfg.chunking.max_chunk_tokens);
  extract_cmd->add_option("--standalone-budget", ecfg.standalone_budget);
  extract_cmd->add_option("--out", out_path, "Runs root")->required();
  pf.add(extract_cmd);

  // soe
  auto* soe_cmd = app.add_subcommand("soe", "Schedule-of-events table detection and extraction");
  soe_cmd->require_subcommand(1);
  double threshold = soe::kDefaultTableThreshold;
  std::string timestamp;
  auto* soe_detect = soe_cmd->add_subcommand("detect", "List table regions");
  soe_detect->add_option("--package", pkg_path)->required();
  soe_detect->add_option("--threshold", threshold);
  auto* soe_extract = soe_cmd->add_subcommand("extract", "Extract the schedule of events");
  soe_extract->add_option("--package", pkg_path)->required();
  soe_extract->add_option("--threshold", threshold);
  soe_extract->add_option("--timestamp", timestamp);
  soe_extract->add_option("--out", out_path);
  pf.add(soe_extract);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Judge a run against ground truth");
  std::string run_path, truth_dir;
  int parallelism = 4;
  eval_cmd->add_option("--run", run_path, "Run directory")->required();
  eval_cmd->add_option("--truth", truth_dir, "Ground-truth directory")->required();
  eval_cmd->add_option("--parallelism", parallelism);
  eval_cmd->add_option("--out", out_path);
  pf.add(eval_cmd);

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "Tabulate evaluation files per approach");
  std::vector<std::string> columns;
  compare_cmd->add_option("columns", columns, "label=eval1.json,eval2.json ...")->required();

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "Compare judge scores with human scores");
  std::string bench_path;
  double bias_threshold = 0.05;
  cal_cmd->add_option("--benchmark", bench_path)->required();
  cal_cmd->add_option("--bias-threshold", bias_threshold);
  cal_cmd->add_option("--out", out_path);
  pf.add(cal_cmd);

  // adjudicate
  auto* adj_cmd = app.add_subcommand("adjudicate", "Adjudicate candidate annotations");
  std::vector<std::string> candidate_dirs;
  std::uint64_t seed = 0;
  adj_cmd->add_option("--candidates", candidate_dirs, "Candidate source directories")->required()->expected(2, -1);
  adj_cmd->add_option("--protocol", pkg_path, "Document package")->required();
  adj_cmd->add_option("--seed", seed);
  adj_cmd->add_option("--parallelism", parallelism);
  adj_cmd->add_option("--out", out_path, "Records JSONL")->required();
  pf.add(adj_cmd);

  // review
  auto* review_cmd = app.add_subcommand("review", "Human review of adjudicated records");
  review_cmd->require_subcommand(1);
  std::string log_path, records_path, reviewers = "reviewer-1,reviewer-2", reviewer, item, override_value, note;
  std::size_t n_low = 40, n_qc = 24;
  auto* review_plan = review_cmd->add_subcommand("plan", "Select and assign items for review");
  review_plan->add_option("--records", records_path)->required();
  review_plan->add_option("--low", n_low);
  review_plan->add_option("--qc", n_qc);
  review_plan->add_option("--seed", seed);
  review_plan->add_option("--reviewers", reviewers);
  review_plan->add_option("--log", log_path)->required();
  auto* review_queue = review_cmd->add_subcommand("queue", "Open assignments");
  review_queue->add_option("--log", log_path)->required();
  review_queue->add_option("--reviewer", reviewer);
  auto* review_report = review_cmd->add_subcommand("report", "Concordance per bucket");
  review_report->add_option("--log", log_path)->required();
  auto* review_decide = review_cmd->add_subcommand("decide", "Record a decision");
  bool confirm = false;
  review_decide->add_option("--log", log_path)->required();
  review_decide->add_option("--item", item)->required();
  review_decide->add_option("--reviewer", reviewer)->required();
  auto* confirm_opt = review_decide->add_flag("--confirm", confirm);
  auto* override_opt = review_decide->add_option("--override", override_value, "Replacement value as JSON");
  confirm_opt->excludes(override_opt);
  review_decide->add_option("--note", note);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API over a runs root");
  std::string runs_root;
  service::ServeOptions serve_opts;
  serve_cmd->add_option("--runs", runs_root)->required();
  serve_cmd->add_option("--host", serve_opts.host);
  serve_cmd->add_option("--port", serve_opts.port);

  // export
  auto* export_cmd = app.add_subcommand("export", "Export reviewed values of a run");
  std::string run_id, format = "json";
  export_cmd->add_option("--runs", runs_root)->required();
  export_cmd->add_option("--run", run_id)->required();
  export_cmd->add_option("--format", format)->check(CLI::IsMember({"json", "table"}));
  export_cmd->add_option("--out", out_path);

  // registry
  auto* reg_cmd = app.add_subcommand("registry", "Inspect the element registry");
  reg_cmd->require_subcommand(1);
  std::string element_id, value_path;
  auto* reg_show = reg_cmd->add_subcommand("show", "Print the registry or one element");
  reg_show->add_option("--element", element_id);
  auto* reg_validate = reg_cmd->add_subcommand("validate", "Validate a value file against an element schema");
  reg_validate->add_option("--element", element_id)->required();
  reg_validate->add_option("--value", value_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto& registry = registry_from(registry_dir);

    if (*ingest_cmd) {
      if (!studies_path.empty()) {
        ingest::FilterReport report;
        const auto kept = ingest::filter_studies(ingest::load_study_metadata(studies_path), &report);
        json out = {{"input", report.input}, {"kept", report.kept}, {"dropped", report.dropped},
                    {"malformed", report.malformed}, {"studies", json::array()}};
        for (const auto& r : kept) out["studies"].push_back(ingest::to_json(r));
        emit(out.dump(2) + "\n", out_path);
        return 0;
      }
      if (pkg_path.empty()) throw Error(ErrorCode::InvalidArgument, "ingest needs --package or --filter-studies");
      const auto pkg = ingest::load_package(pkg_path);
      json out = {{"doc_id", pkg.doc_id}, {"nct_id", pkg.nct_id ? json(*pkg.nct_id) : json(nullptr)},
                  {"page_count", pkg.page_count}, {"digest", pkg.content_digest()}};
      if (show_tree) out["sections"] = ingest::to_json(ingest::build_section_tree(pkg));
      emit(out.dump(2) + "\n", out_path);
    } else if (*chunk_cmd) {
      chunk_cfg.validate();
      const auto pkg = ingest::load_package(pkg_path);
      const auto chunks = chunking::chunk_document(pkg, ingest::build_section_tree(pkg), chunk_cfg);
      if (out_path.empty()) {
        for (const auto& c : chunks) std::cout << chunking::to_json(c).dump() << "\n";
      } else {
        chunking::write_chunks_jsonl(out_path, chunks);
        std::cerr << chunks.size() << " chunks written to " << out_path << "\n";
      }
    } else if (*index_cmd) {
      auto gw = pf.make();
      const auto pkg = ingest::load_package(pkg_path);
      retrieval::GatewayEmbedder embedder(*gw, gw->role("embedding"));
      const auto doc = extraction::build_document_index(pkg, chunk_cfg, embedder);
      emit(doc.index.to_json().dump() + "\n", out_path);
    } else if (*extract_cmd) {
      auto gw = pf.make();
      ecfg.mode = parse_mode(mode);
      ecfg.categories = schema::parse_category_list(categories);
      const auto pkg = ingest::load_package(pkg_path);
      const auto run = extraction::run_extraction(pkg, registry, *gw, ecfg, out_path);
      const json m = run.manifest();
      std::cout << json{{"run_id", run.run_id}, {"run_dir", (fs::path(out_path) / run.run_id).string()},
                        {"counts", m["counts"]}}.dump(2)
                << "\n";
    } else if (*soe_detect) {
      const auto pkg = ingest::load_package(pkg_path);
      auto detector = soe::detector_from_environment(threshold);
      json out = {{"detector", detector->id()}, {"regions", json::array()}};
      for (const auto& r : soe::detect_tables(pkg, *detector)) out["regions"].push_back(r.to_json());
      out["warnings"] = detector->warnings();
      std::cout << out.dump(2) << "\n";
    } else if (*soe_extract) {
      auto gw = pf.make();
      const auto pkg = ingest::load_package(pkg_path);
      auto detector = soe::detector_from_environment(threshold);
      const auto regions = soe::detect_tables(pkg, *detector);
      soe::SoeOptions opts{gw->role("multimodal"), 3, timestamp.empty() ? Clock::from_environment().now_iso8601() : timestamp};
      emit(dump_pretty(soe::extract_soe(pkg, regions, *gw, registry, opts).to_json()), out_path);
    } else if (*eval_cmd) {
      auto gw = pf.make();
      const auto run = extraction::load_run(run_path);
      const auto ev = eval::evaluate_run(run, truth_dir, registry, *gw, gw->role("judge"), parallelism);
      emit(dump_pretty(ev.to_json()), out_path);
    } else if (*compare_cmd) {
      std::vector<std::pair<std::string, eval::RunAggregate>> cols;
      for (const auto& spec : columns) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "expected label=files, got " + spec);
        std::vector<eval::ProtocolScores> protocols;
        for (const auto& file : split_csv(spec.substr(eq + 1))) {
          const json ev = read_json_file(file);
          eval::ProtocolScores ps;
          ps.doc_id = ev.value("doc_id", "");
          for (const auto& c : ev.at("categories")) {
            eval::CategoryScore cs;
            cs.category = schema::parse_category(c.at("category").get<std::string>());
            cs.percent = c.at("percent").get<double>();
            ps.categories.push_back(cs);
          }
          protocols.push_back(std::move(ps));
        }
        cols.emplace_back(spec.substr(0, eq), eval::aggregate_run(protocols));
      }
      std::cout << eval::render_comparison(cols);
    } else if (*cal_cmd) {
      auto gw = pf.make();
      const auto report = eval::calibrate_judge(eval::load_benchmark(bench_path), registry, *gw, gw->role("judge"), bias_threshold);
      emit(dump_pretty(report.to_json()), out_path);
    } else if (*adj_cmd) {
      auto gw = pf.make();
      const auto pkg = ingest::load_package(pkg_path);
      std::vector<fs::path> dirs(candidate_dirs.begin(), candidate_dirs.end());
      const auto candidates = adjudication::load_candidates(dirs, registry);
      const std::string provider_id = gw->role("adjudicator");
      const std::string text = pkg.document_text();
      std::optional<extraction::DocumentIndex> doc;
      std::unique_ptr<retrieval::GatewayEmbedder> embedder;
      std::mutex window_mu;
      adjudication::AdjudicateOptions opts;
      opts.provider_id = provider_id;
      opts.doc_id = pkg.doc_id;
      opts.seed = seed;
      opts.window = [&](const schema::ElementSpec& spec) {
        std::lock_guard lock(window_mu);
        if (!doc) {
          embedder = std::make_unique<retrieval::GatewayEmbedder>(*gw, gw->role("embedding"));
          doc = extraction::build_document_index(pkg, {}, *embedder);
        }
        return adjudication::retrieval_window(*doc, *embedder, spec);
      };
      std::vector<std::pair<std::string, std::vector<adjudication::AnnotationCandidate>>> work(candidates.begin(), candidates.end());
      std::vector<std::optional<adjudication::AdjudicationRecord>> records(work.size());
      std::vector<std::string> failures(work.size());
      parallel_for(work.size(), parallelism, [&](std::size_t i) {
        try {
          records[i] = adjudication::adjudicate_element(text, registry.element(work[i].first), work[i].second, registry, *gw, opts);
        } catch (const Error& e) {
          failures[i] = std::string(to_string(e.code())) + ": " + e.what();
        }
      });
      std::string lines;
      for (std::size_t i = 0; i < work.size(); ++i) {
        if (records[i]) {
          lines += records[i]->to_json().dump() + "\n";
        } else {
          std::cerr << "warning: " << work[i].first << " not adjudicated: " << failures[i] << "\n";
        }
      }
      emit(lines, out_path);
    } else if (*review_plan) {
      const auto records = read_records(records_path);
      const auto low = adjudication::select_low_confidence(records, n_low);
      const auto qc = adjudication::sample_random_qc(records, low, n_qc, seed);
      adjudication::ReviewLog log(log_path);
      log.assign(adjudication::plan_reviews(low, qc, split_csv(reviewers)));
      std::cout << json{{"low_confidence", low}, {"random_qc", qc}}.dump(2) << "\n";
    } else if (*review_queue) {
      adjudication::ReviewLog log(log_path);
      json out = json::array();
      for (const auto& a : log.queue(reviewer)) out.push_back(a.to_json());
      std::cout << out.dump(2) << "\n";
    } else if (*review_report) {
      adjudication::ReviewLog log(log_path);
      std::cout << log.report().to_json().dump(2) << "\n";
    } else if (*review_decide) {
      if (!confirm && override_value.empty()) throw Error(ErrorCode::InvalidArgument, "give --confirm or --override");
      adjudication::ReviewLog log(log_path);
      adjudication::ReviewDecision d;
      d.confirmed = confirm;
      if (!confirm) d.override_value = json::parse(override_value);
      d.note = note;
      std::cout << log.decide(item, reviewer, d).to_json().dump(2) << "\n";
    } else if (*serve_cmd) {
      serve_opts.bearer_token = get_env("PROTEX_API_TOKEN").value_or("");
      service::RunStore store(runs_root, registry);
      if (store.run_ids().empty()) throw Error(ErrorCode::StorageError, "no runs under " + runs_root);
      service::Server server(store, serve_opts);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << serve_opts.host << ":" << port
                << (serve_opts.bearer_token.empty() ? " (no auth)" : "") << "\n";
      server.listen();
      g_server = nullptr;
    } else if (*export_cmd) {
      service::RunStore store(runs_root, registry);
      emit(format == "json" ? dump_pretty(store.export_json(run_id)) : store.export_table(run_id), out_path);
    } else if (*reg_show) {
      if (element_id.empty()) {
        std::cout << registry.to_json().dump(2) << "\n";
      } else {
        std::cout << registry.element(element_id).to_json().dump(2) << "\n";
      }
    } else if (*reg_validate) {
      const auto report = registry.validate_instance(element_id, read_json_file(value_path));
      std::cout << report.to_json().dump(2) << "\n";
      return report.valid() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
