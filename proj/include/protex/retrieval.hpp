#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "protex/chunker.hpp"
#include "protex/embedding.hpp"
#include "protex/gateway.hpp"

namespace protex::retrieval {

/// dot(a,b) / (|a||b|). Throws DimensionMismatch or ZeroNormVector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string id() const = 0;
};

/// Offline token-hash embedder; see mock_embedding().
class MockEmbedder : public Embedder {
 public:
  explicit MockEmbedder(std::size_t dim = kMockEmbeddingDim) : dim_(dim) {}
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string id() const override { return "mock/" + std::to_string(dim_); }

 private:
  std::size_t dim_;
};

class GatewayEmbedder : public Embedder {
 public:
  GatewayEmbedder(gateway::Gateway& gw, std::string provider_id) : gw_(gw), provider_id_(std::move(provider_id)) {}
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string id() const override;

 private:
  gateway::Gateway& gw_;
  std::string provider_id_;
};

/// Chunks of one document keyed by id, with split-group lookup.
class ChunkStore {
 public:
  ChunkStore() = default;
  explicit ChunkStore(std::vector<chunking::Chunk> chunks);

  const chunking::Chunk& get(const std::string& chunk_id) const;
  bool contains(const std::string& chunk_id) const { return by_id_.count(chunk_id) > 0; }
  const std::vector<chunking::Chunk>& chunks() const { return chunks_; }
  /// Chunk ids of a split group in part order.
  const std::vector<std::string>& group(const std::string& group_id) const;
  std::size_t size() const { return chunks_.size(); }

 private:
  std::vector<chunking::Chunk> chunks_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::vector<std::string>> groups_;
};

struct IndexEntry {
  std::string chunk_id;
  int order_index = 0;
  EmbeddingVector vector;
};

struct VectorIndex {
  std::string doc_id;
  std::size_t dim = 0;
  std::string embedder_id;
  std::vector<IndexEntry> entries;

  json to_json() const;
  static VectorIndex from_json(const json& j);
  void save(const fs::path& path) const;
  static VectorIndex load(const fs::path& path);
};

/// One entry per chunk, in chunk order. Embedder failures surface as
/// EmbeddingProviderError naming the offending chunk.
VectorIndex build_index(const std::vector<chunking::Chunk>& chunks, Embedder& embedder);

struct RetrievalQuery {
  std::vector<std::string> query_texts;
  int top_k = 6;
  bool reunion = true;
  bool order_by_document = true;
};

struct Provenance {
  std::string chunk_id;
  double similarity = 0.0;
  int query_index = 0;
  /// Added by split-group reunion rather than ranked directly.
  bool via_reunion = false;
};

struct ContextBundle {
  std::vector<chunking::Chunk> chunks;
  std::vector<Provenance> provenance;  // parallel to chunks
  std::size_t total_token_estimate = 0;

  std::vector<std::string> chunk_ids() const;
  /// Chunk texts separated by blank lines, each preceded by its section path.
  std::string render() const;
  json to_json() const;
};

/// Ranked (chunk index, similarity) pairs for one query vector, best first,
/// ties broken by lower order_index.
std::vector<std::pair<std::size_t, double>> rank(const VectorIndex& index, const EmbeddingVector& query);

ContextBundle search(const VectorIndex& index, const RetrievalQuery& q, Embedder& embedder, const ChunkStore& store);

}  // namespace protex::retrieval
