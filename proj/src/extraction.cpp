#include "protex/extraction.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace protex::extraction {

json ExtractionConfig::to_json() const {
  json cats = json::array();
  for (auto c : categories) cats.push_back(std::string(schema::to_string(c)));
  return {{"mode", std::string(protex::to_string(mode))},
          {"categories", cats},
          {"chunking",
           {{"max_chunk_tokens", chunking.max_chunk_tokens},
            {"overlap_tokens", chunking.overlap_tokens},
            {"token_estimator", chunking.token_estimator}}},
          {"top_k", top_k},
          {"reunion", reunion},
          {"order_by_document", order_by_document},
          {"parse_attempts", parse_attempts},
          {"standalone_budget", standalone_budget},
          {"table_threshold", table_threshold},
          {"roles", {{"generation", generation_role}, {"multimodal", multimodal_role}, {"embedding", embedding_role}}}};
}

DocumentIndex build_document_index(const ingest::ProtocolPackage& pkg, const chunking::ChunkConfig& chunking,
                                   retrieval::Embedder& embedder) {
  const auto tree = ingest::build_section_tree(pkg);
  auto chunks = chunking::chunk_document(pkg, tree, chunking);
  DocumentIndex doc;
  doc.index = retrieval::build_index(chunks, embedder);
  doc.index.doc_id = pkg.doc_id;
  doc.store = retrieval::ChunkStore(std::move(chunks));
  return doc;
}

namespace {

ExtractionResult blank_result(const schema::ElementSpec& spec, Mode mode, const std::string& model_config_id,
                              const std::string& created_at) {
  ExtractionResult r;
  r.element_id = spec.element_id;
  r.category = spec.category;
  r.mode = mode;
  r.model_config_id = model_config_id;
  r.created_at = created_at;
  return r;
}

json combined_schema(const std::vector<const schema::ElementSpec*>& group) {
  if (group.size() == 1) return group.front()->schema;
  json props = json::object();
  json required = json::array();
  for (const auto* spec : group) {
    for (const auto& [name, s] : spec->schema.value("properties", json::object()).items()) props[name] = s;
    for (const auto& r : spec->schema.value("required", json::array())) required.push_back(r);
  }
  json out = {{"type", "object"}, {"properties", props}};
  if (!required.empty()) out["required"] = required;
  return out;
}

/// Per-member values and validation carved out of one chain response.
struct Carved {
  std::vector<std::optional<json>> values;
  std::vector<schema::ValidationReport> reports;
  schema::ValidationReport combined;
};

Carved carve(const std::vector<const schema::ElementSpec*>& members, const schema::Registry& registry,
             const json& response, bool require_all) {
  Carved c;
  for (const auto* spec : members) {
    auto value = schema::element_value_from_document(*spec, response);
    schema::ValidationReport report;
    if (value) {
      report = registry.validate_instance(spec->element_id, *value);
    } else if (require_all) {
      report.errors.push_back({"/" + join(spec->fields(), ","), "missing_required",
                               "the reply has no fields for " + spec->element_id});
    }
    c.combined.merge(report);
    c.values.push_back(std::move(value));
    c.reports.push_back(std::move(report));
  }
  return c;
}

void fill_results(std::vector<ExtractionResult>& results, const GenerationOutcome& outcome,
                  const std::vector<const schema::ElementSpec*>& members, const schema::Registry& registry,
                  bool require_all) {
  if (!outcome.parsed) {
    for (auto& r : results) {
      r.needs_review = true;
      r.error = ResultError{"ParseFailure", "no parseable JSON after " + std::to_string(outcome.attempts) + " attempts"};
    }
    return;
  }
  const Carved carved = carve(members, registry, *outcome.parsed, require_all);
  for (std::size_t i = 0; i < results.size(); ++i) {
    results[i].value = carved.values[i];
    results[i].validation = carved.reports[i];
    if (!carved.values[i]) {
      results[i].needs_review = true;
      results[i].error = ResultError{"MissingValue", "the reply has no fields for this element"};
    } else if (!carved.reports[i].valid()) {
      results[i].needs_review = true;
    }
  }
}

}  // namespace

std::vector<ExtractionResult> extract_element(const std::vector<const schema::ElementSpec*>& group,
                                              const DocumentIndex& doc, retrieval::Embedder& embedder,
                                              const ChainContext& ctx) {
  if (group.empty()) throw Error(ErrorCode::InvalidArgument, "empty element group");
  const std::string provider_id = ctx.gateway.role(ctx.config.generation_role);
  const std::string model_id = ctx.gateway.provider(provider_id).config_id();
  if (doc.index.entries.empty()) {
    throw Error(ErrorCode::EmptyContext, "document " + doc.index.doc_id + " has no indexed chunks");
  }
  retrieval::RetrievalQuery query;
  std::set<std::string> seen;
  for (const auto* spec : group) {
    for (const auto& q : spec->retrieval_queries) {
      if (seen.insert(q).second) query.query_texts.push_back(q);
    }
  }
  query.top_k = ctx.config.top_k;
  query.reunion = ctx.config.reunion;
  query.order_by_document = ctx.config.order_by_document;
  const auto bundle = retrieval::search(doc.index, query, embedder, doc.store);
  if (bundle.chunks.empty()) throw Error(ErrorCode::EmptyContext, "retrieval returned no chunks for " + group.front()->element_id);

  std::vector<std::string> instructions;
  for (const auto* spec : group) instructions.push_back(spec->instructions);
  const std::string label = group.size() == 1 || !group.front()->group_id ? group.front()->element_id : *group.front()->group_id;
  const std::string prompt = schema::fill_template(group.front()->prompt_template,
                                                   {{"element_id", label},
                                                    {"instructions", join(instructions, "\n")},
                                                    {"schema", combined_schema(group).dump(2)},
                                                    {"context", bundle.render()}});
  const auto outcome = generate_json(
      [&](const std::string& p) { return ctx.gateway.complete(provider_id, p).text; }, prompt,
      [&](const json& v) { return carve(group, ctx.registry, v, true).combined; }, ctx.config.parse_attempts,
      ctx.registry.prompt("repair"));

  std::vector<ExtractionResult> results;
  for (const auto* spec : group) {
    auto r = blank_result(*spec, Mode::rag, model_id, ctx.created_at);
    r.raw_model_output = outcome.raw_output;
    r.attempts = outcome.attempts;
    for (std::size_t i = 0; i < bundle.chunks.size(); ++i) {
      const auto& c = bundle.chunks[i];
      r.provenance.push_back({c.chunk_id, c.first_page, c.last_page, bundle.provenance[i].similarity});
    }
    results.push_back(std::move(r));
  }
  fill_results(results, outcome, group, ctx.registry, true);
  return results;
}

std::vector<ExtractionResult> extract_category_standalone(schema::Category category,
                                                          const ingest::ProtocolPackage& pkg,
                                                          const ChainContext& ctx) {
  const std::string provider_id = ctx.gateway.role(ctx.config.generation_role);
  const auto& provider = ctx.gateway.provider(provider_id);
  const auto& cat = ctx.registry.category(category);
  const auto members = ctx.registry.category_elements(category);

  std::string instructions = cat.standalone_instructions + "\n";
  for (const auto* spec : members) instructions += "- " + spec->name + ": " + spec->instructions + "\n";
  const std::string prompt = schema::fill_template(ctx.registry.prompt("standalone"),
                                                   {{"category", std::string(schema::to_string(category))},
                                                    {"instructions", instructions},
                                                    {"schema", cat.document_schema.dump(2)},
                                                    {"context", pkg.document_text()}});
  const std::size_t tokens = chunking::estimate_tokens(prompt, provider.token_estimator);
  if (tokens > ctx.config.standalone_budget) {
    throw Error(ErrorCode::ContextLimitExceeded, pkg.doc_id + ": standalone prompt estimate " + std::to_string(tokens) +
                                                     " exceeds budget " + std::to_string(ctx.config.standalone_budget));
  }
  const auto outcome = generate_json(
      [&](const std::string& p) { return ctx.gateway.complete(provider_id, p).text; }, prompt,
      [&](const json& v) { return schema::validate_category_document(ctx.registry, category, v); },
      ctx.config.parse_attempts, ctx.registry.prompt("repair"));

  std::vector<ExtractionResult> results;
  for (const auto* spec : members) {
    auto r = blank_result(*spec, Mode::standalone, provider.config_id(), ctx.created_at);
    r.raw_model_output = outcome.raw_output;
    r.attempts = outcome.attempts;
    r.provenance.push_back({"document", 1, pkg.page_count, std::nullopt});
    results.push_back(std::move(r));
  }
  fill_results(results, outcome, members, ctx.registry, false);
  return results;
}

// ---------------------------------------------------------------------------
// Runs

json ExtractionRun::manifest() const {
  json elements = json::array();
  std::map<std::string, int> counts;
  for (const auto& r : results) {
    const std::string status = r.error && !r.value ? "failed" : (r.needs_review ? "needs_review" : "ok");
    ++counts[status];
    elements.push_back({{"element_id", r.element_id},
                        {"category", std::string(schema::to_string(r.category))},
                        {"status", status},
                        {"file", "elements/" + r.element_id + ".json"}});
  }
  return {{"run_id", run_id},
          {"doc_id", doc_id},
          {"mode", std::string(protex::to_string(mode))},
          {"registry_version", registry_version},
          {"created_at", created_at},
          {"config", config_snapshot},
          {"counts", counts},
          {"elements", elements}};
}

const ExtractionResult* ExtractionRun::find(const std::string& element_id) const {
  for (const auto& r : results) {
    if (r.element_id == element_id) return &r;
  }
  return nullptr;
}

namespace {

struct Task {
  std::vector<const schema::ElementSpec*> members;
  std::function<std::vector<ExtractionResult>()> run;
  std::string model_config_id;
};

void run_tasks(std::vector<Task>& tasks, std::vector<std::vector<ExtractionResult>>& out, Mode mode,
               const std::string& created_at, int parallelism) {
  out.assign(tasks.size(), {});
  parallel_for(tasks.size(), parallelism, [&](std::size_t i) {
    try {
      out[i] = tasks[i].run();
    } catch (const Error& e) {
      out[i].clear();
      for (const auto* spec : tasks[i].members) {
        auto r = blank_result(*spec, mode, tasks[i].model_config_id, created_at);
        r.needs_review = true;
        r.error = ResultError{std::string(to_string(e.code())), e.what()};
        out[i].push_back(std::move(r));
      }
    }
  });
}

}  // namespace

ExtractionRun run_extraction(const ingest::ProtocolPackage& pkg, const schema::Registry& registry,
                             gateway::Gateway& gw, const ExtractionConfig& config, const fs::path& runs_root) {
  config.chunking.validate();
  const std::string created_at = config.timestamp.empty() ? Clock::from_environment().now_iso8601() : config.timestamp;
  const std::string gen_provider = gw.role(config.generation_role);

  ExtractionRun run;
  run.doc_id = pkg.doc_id;
  run.mode = config.mode;
  run.registry_version = registry.version();
  run.created_at = created_at;
  run.config_snapshot = {{"extraction", config.to_json()},
                         {"providers", gw.config().to_json()},
                         {"package", {{"doc_id", pkg.doc_id}, {"digest", pkg.content_digest()}, {"page_count", pkg.page_count}}}};
  run.run_id = pkg.doc_id + "-" + std::string(protex::to_string(config.mode)) + "-" +
               sha256_hex(run.config_snapshot.dump() + registry.version()).substr(0, 12);
  run.config_snapshot["package"]["root"] = pkg.root.empty() ? "" : fs::absolute(pkg.root).lexically_normal().string();

  const fs::path run_dir = runs_root / run.run_id;
  fs::create_directories(run_dir / "elements");

  ChainContext ctx{registry, gw, config, created_at};
  std::vector<Task> tasks;
  std::optional<DocumentIndex> doc;
  std::unique_ptr<retrieval::GatewayEmbedder> embedder;
  if (config.mode == Mode::rag) {
    embedder = std::make_unique<retrieval::GatewayEmbedder>(gw, gw.role(config.embedding_role));
    doc = build_document_index(pkg, config.chunking, *embedder);
    chunking::write_chunks_jsonl(run_dir / "chunks.jsonl", doc->store.chunks());
    doc->index.save(run_dir / "index.json");
  }
  const std::string gen_model = gw.provider(gen_provider).config_id();

  for (const auto category : config.categories) {
    const auto members = registry.category_elements(category);
    if (config.mode == Mode::standalone) {
      tasks.push_back({members, [&, category] { return extract_category_standalone(category, pkg, ctx); }, gen_model});
      continue;
    }
    if (category == schema::Category::soe) {
      const std::string mm_provider = gw.role(config.multimodal_role);
      tasks.push_back({members,
                       [&, mm_provider] {
                         auto detector = soe::detector_from_environment(config.table_threshold);
                         const auto regions = soe::detect_tables(pkg, *detector);
                         auto result = soe::extract_soe(pkg, regions, gw, registry,
                                                        {mm_provider, config.parse_attempts, created_at});
                         if (!detector->warnings().empty()) result.flags.push_back("detector_fallback");
                         return std::vector<ExtractionResult>{std::move(result)};
                       },
                       gw.provider(mm_provider).config_id()});
      continue;
    }
    std::set<std::string> done;
    for (const auto* spec : members) {
      if (done.count(spec->element_id)) continue;
      auto group = registry.group_of(spec->element_id);
      for (const auto* g : group) done.insert(g->element_id);
      tasks.push_back({group, [&, group] { return extract_element(group, *doc, *embedder, ctx); }, gen_model});
    }
  }

  std::vector<std::vector<ExtractionResult>> outputs;
  run_tasks(tasks, outputs, config.mode, created_at, config.parallelism);
  std::map<std::string, ExtractionResult> by_id;
  for (auto& batch : outputs) {
    for (auto& r : batch) by_id.emplace(r.element_id, std::move(r));
  }
  for (const auto& spec : registry.elements()) {
    if (std::find(config.categories.begin(), config.categories.end(), spec.category) == config.categories.end()) continue;
    auto it = by_id.find(spec.element_id);
    if (it == by_id.end()) throw Error(ErrorCode::StorageError, "internal: no result for " + spec.element_id);
    run.results.push_back(std::move(it->second));
  }
  for (const auto& r : run.results) {
    write_file_atomic(run_dir / "elements" / (r.element_id + ".json"), dump_pretty(r.to_json()));
  }
  write_file_atomic(run_dir / "manifest.json", dump_pretty(run.manifest()));
  return run;
}

ExtractionRun load_run(const fs::path& run_dir) {
  const fs::path manifest_path = run_dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) throw Error(ErrorCode::UnknownRun, "no run at " + run_dir.string());
  const json m = read_json_file(manifest_path);
  ExtractionRun run;
  try {
    run.run_id = m.at("run_id").get<std::string>();
    run.doc_id = m.at("doc_id").get<std::string>();
    run.mode = parse_mode(m.at("mode").get<std::string>());
    run.registry_version = m.value("registry_version", "");
    run.created_at = m.value("created_at", "");
    run.config_snapshot = m.value("config", json::object());
    for (const auto& e : m.at("elements")) {
      run.results.push_back(ExtractionResult::from_json(read_json_file(run_dir / e.at("file").get<std::string>())));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  return run;
}

}  // namespace protex::extraction
