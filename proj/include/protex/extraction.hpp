#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "protex/chunker.hpp"
#include "protex/gateway.hpp"
#include "protex/ingest.hpp"
#include "protex/result.hpp"
#include "protex/retrieval.hpp"
#include "protex/schema.hpp"
#include "protex/soe.hpp"

namespace protex::extraction {

struct ExtractionConfig {
  Mode mode = Mode::rag;
  std::vector<schema::Category> categories{std::begin(schema::kAllCategories), std::end(schema::kAllCategories)};
  chunking::ChunkConfig chunking;
  int top_k = 6;
  bool reunion = true;
  bool order_by_document = true;
  /// Concurrent chain calls.
  int parallelism = 4;
  /// Total generation attempts per chain call, including corrective ones.
  int parse_attempts = 3;
  /// Token budget for the whole standalone prompt.
  std::size_t standalone_budget = 120000;
  double table_threshold = soe::kDefaultTableThreshold;
  std::string generation_role = "generation";
  std::string multimodal_role = "multimodal";
  std::string embedding_role = "embedding";
  /// Fixed timestamp for results and manifest; empty means the current time.
  std::string timestamp;

  json to_json() const;
};

/// Chunks, chunk store and vector index of one document.
struct DocumentIndex {
  retrieval::ChunkStore store;
  retrieval::VectorIndex index;
};

DocumentIndex build_document_index(const ingest::ProtocolPackage& pkg, const chunking::ChunkConfig& chunking,
                                   retrieval::Embedder& embedder);

struct ChainContext {
  const schema::Registry& registry;
  gateway::Gateway& gateway;
  const ExtractionConfig& config;
  std::string created_at;
};

/// One RAG chain call for an element and the other members of its group.
/// Returns one result per group member in registry order. Throws
/// ProviderError and EmptyContext; unparseable output yields results with
/// error ParseFailure, no value and needs_review set.
std::vector<ExtractionResult> extract_element(const std::vector<const schema::ElementSpec*>& group,
                                              const DocumentIndex& doc, retrieval::Embedder& embedder,
                                              const ChainContext& ctx);

/// Full-document prompt for one category, split into per-element results.
/// Throws ContextLimitExceeded before any provider call when the prompt is
/// over the standalone budget.
std::vector<ExtractionResult> extract_category_standalone(schema::Category category,
                                                          const ingest::ProtocolPackage& pkg,
                                                          const ChainContext& ctx);

struct ExtractionRun {
  std::string run_id;
  std::string doc_id;
  Mode mode = Mode::rag;
  std::string registry_version;
  std::string created_at;
  json config_snapshot;
  std::vector<ExtractionResult> results;  // registry order

  json manifest() const;
  const ExtractionResult* find(const std::string& element_id) const;
};

/// Runs every element of the configured categories and writes
/// `<runs_root>/<run_id>/` (manifest.json, elements/, chunks.jsonl,
/// index.json). Per-element failures are recorded on the results.
ExtractionRun run_extraction(const ingest::ProtocolPackage& pkg, const schema::Registry& registry,
                             gateway::Gateway& gw, const ExtractionConfig& config, const fs::path& runs_root);

/// Loads a run directory written by run_extraction.
ExtractionRun load_run(const fs::path& run_dir);

}  // namespace protex::extraction
