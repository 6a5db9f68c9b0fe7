#include "protex/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace protex::retrieval {

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "vector dims differ: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroNormVector, "cosine of a zero-norm vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

std::vector<EmbeddingVector> MockEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embedding(t, dim_));
  return out;
}

std::vector<EmbeddingVector> GatewayEmbedder::embed(const std::vector<std::string>& texts) {
  return gw_.embed(provider_id_, texts);
}

std::string GatewayEmbedder::id() const { return gw_.provider(provider_id_).config_id(); }

ChunkStore::ChunkStore(std::vector<chunking::Chunk> chunks) : chunks_(std::move(chunks)) {
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    const auto& c = chunks_[i];
    if (!by_id_.emplace(c.chunk_id, i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate chunk id " + c.chunk_id);
    }
  }
  std::map<std::string, std::vector<std::pair<int, std::string>>> parts;
  for (const auto& c : chunks_) {
    if (c.split_group) parts[c.split_group->group_id].emplace_back(c.split_group->part_index, c.chunk_id);
  }
  for (auto& [gid, members] : parts) {
    std::sort(members.begin(), members.end());
    auto& ids = groups_[gid];
    for (auto& m : members) ids.push_back(m.second);
  }
}

const chunking::Chunk& ChunkStore::get(const std::string& chunk_id) const {
  const auto it = by_id_.find(chunk_id);
  if (it == by_id_.end()) throw Error(ErrorCode::NotFound, "unknown chunk " + chunk_id);
  return chunks_[it->second];
}

const std::vector<std::string>& ChunkStore::group(const std::string& group_id) const {
  const auto it = groups_.find(group_id);
  if (it == groups_.end()) throw Error(ErrorCode::NotFound, "unknown split group " + group_id);
  return it->second;
}

json VectorIndex::to_json() const {
  json entries_json = json::array();
  for (const auto& e : entries) {
    entries_json.push_back({{"chunk_id", e.chunk_id}, {"order_index", e.order_index}, {"vector", e.vector.values}});
  }
  return {{"doc_id", doc_id}, {"dim", dim}, {"embedder_id", embedder_id}, {"entries", entries_json}};
}

VectorIndex VectorIndex::from_json(const json& j) {
  VectorIndex idx;
  try {
    idx.doc_id = j.at("doc_id").get<std::string>();
    idx.dim = j.at("dim").get<std::size_t>();
    idx.embedder_id = j.value("embedder_id", "");
    std::set<std::string> seen;
    for (const auto& e : j.at("entries")) {
      IndexEntry entry{e.at("chunk_id").get<std::string>(), e.at("order_index").get<int>(),
                       EmbeddingVector{e.at("vector").get<std::vector<double>>()}};
      if (entry.vector.dim() != idx.dim) throw Error(ErrorCode::DimensionMismatch, "index entry " + entry.chunk_id);
      if (!seen.insert(entry.chunk_id).second) throw Error(ErrorCode::InvalidArgument, "duplicate index entry " + entry.chunk_id);
      idx.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed index: ") + e.what());
  }
  return idx;
}

void VectorIndex::save(const fs::path& path) const { write_file_atomic(path, to_json().dump() + "\n"); }

VectorIndex VectorIndex::load(const fs::path& path) { return from_json(read_json_file(path)); }

VectorIndex build_index(const std::vector<chunking::Chunk>& chunks, Embedder& embedder) {
  VectorIndex idx;
  idx.embedder_id = embedder.id();
  if (chunks.empty()) return idx;
  idx.doc_id = chunks.front().doc_id;
  std::vector<std::string> inputs;
  inputs.reserve(chunks.size());
  for (const auto& c : chunks) inputs.push_back(chunking::embedding_input(c));
  std::vector<EmbeddingVector> vectors;
  try {
    vectors = embedder.embed(inputs);
  } catch (const BatchItemError& e) {
    const std::string id = e.index() < chunks.size() ? chunks[e.index()].chunk_id : "?";
    throw Error(ErrorCode::EmbeddingProviderError, "embedding chunk " + id + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::EmbeddingProviderError,
                "embedding chunks " + chunks.front().chunk_id + ".." + chunks.back().chunk_id + ": " + e.what());
  }
  if (vectors.size() != chunks.size()) {
    throw Error(ErrorCode::EmbeddingProviderError, "embedder returned " + std::to_string(vectors.size()) +
                                                       " vectors for " + std::to_string(chunks.size()) + " chunks");
  }
  idx.dim = vectors.front().dim();
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (vectors[i].dim() != idx.dim) {
      throw Error(ErrorCode::EmbeddingProviderError, "chunk " + chunks[i].chunk_id + ": inconsistent vector dim");
    }
    if (vectors[i].norm() == 0.0) {
      throw Error(ErrorCode::EmbeddingProviderError, "chunk " + chunks[i].chunk_id + ": zero-norm vector");
    }
    idx.entries.push_back({chunks[i].chunk_id, chunks[i].order_index, std::move(vectors[i])});
  }
  return idx;
}

std::vector<std::string> ContextBundle::chunk_ids() const {
  std::vector<std::string> ids;
  for (const auto& c : chunks) ids.push_back(c.chunk_id);
  return ids;
}

std::string ContextBundle::render() const {
  std::string out;
  for (const auto& c : chunks) {
    if (!out.empty()) out += "\n\n";
    out += "[" + (c.section_path.empty() ? std::string("(front matter)") : join(c.section_path, " > ")) +
           ", pages " + std::to_string(c.first_page) + "-" + std::to_string(c.last_page) + "]\n";
    out += c.text;
  }
  return out;
}

json ContextBundle::to_json() const {
  json prov = json::array();
  for (const auto& p : provenance) {
    prov.push_back({{"chunk_id", p.chunk_id},
                    {"similarity", p.similarity},
                    {"query_index", p.query_index},
                    {"via_reunion", p.via_reunion}});
  }
  return {{"chunk_ids", chunk_ids()}, {"provenance", prov}, {"total_token_estimate", total_token_estimate}};
}

std::vector<std::pair<std::size_t, double>> rank(const VectorIndex& index, const EmbeddingVector& query) {
  std::vector<std::pair<std::size_t, double>> scored;
  scored.reserve(index.entries.size());
  for (std::size_t i = 0; i < index.entries.size(); ++i) scored.emplace_back(i, cosine(index.entries[i].vector, query));
  std::stable_sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return index.entries[a.first].order_index < index.entries[b.first].order_index;
  });
  return scored;
}

ContextBundle search(const VectorIndex& index, const RetrievalQuery& q, Embedder& embedder, const ChunkStore& store) {
  if (index.entries.empty()) throw Error(ErrorCode::EmptyIndex, "index for '" + index.doc_id + "' is empty");
  if (q.query_texts.empty()) throw Error(ErrorCode::InvalidArgument, "retrieval query needs at least one text");
  if (q.top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");

  const auto qvecs = embedder.embed(q.query_texts);
  std::map<std::string, Provenance> best;
  std::vector<std::string> first_seen;
  for (std::size_t qi = 0; qi < qvecs.size(); ++qi) {
    if (qvecs[qi].dim() != index.dim) {
      throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(qvecs[qi].dim()) + " vs index dim " +
                                                    std::to_string(index.dim));
    }
    const auto ranked = rank(index, qvecs[qi]);
    const std::size_t take = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(q.top_k));
    for (std::size_t r = 0; r < take; ++r) {
      const auto& entry = index.entries[ranked[r].first];
      const double sim = ranked[r].second;
      auto [it, inserted] = best.try_emplace(entry.chunk_id, Provenance{entry.chunk_id, sim, static_cast<int>(qi), false});
      if (inserted) {
        first_seen.push_back(entry.chunk_id);
      } else if (sim > it->second.similarity) {
        it->second.similarity = sim;
        it->second.query_index = static_cast<int>(qi);
      }
    }
  }

  if (q.reunion) {
    std::map<std::string, std::size_t> entry_of;
    for (std::size_t i = 0; i < index.entries.size(); ++i) entry_of[index.entries[i].chunk_id] = i;
    const std::vector<std::string> retrieved = first_seen;
    for (const auto& id : retrieved) {
      const auto& chunk = store.get(id);
      if (!chunk.split_group) continue;
      const Provenance origin = best.at(id);
      for (const auto& sibling : store.group(chunk.split_group->group_id)) {
        if (best.count(sibling)) continue;
        double sim = origin.similarity;
        int qi = origin.query_index;
        if (const auto e = entry_of.find(sibling); e != entry_of.end()) {
          // Siblings carry their own best similarity across the query vectors.
          sim = -1.0;
          for (std::size_t k = 0; k < qvecs.size(); ++k) {
            const double s = cosine(index.entries[e->second].vector, qvecs[k]);
            if (s > sim) {
              sim = s;
              qi = static_cast<int>(k);
            }
          }
        }
        best.emplace(sibling, Provenance{sibling, sim, qi, true});
        first_seen.push_back(sibling);
      }
    }
  }

  std::vector<std::string> ordered = first_seen;
  if (q.order_by_document) {
    std::stable_sort(ordered.begin(), ordered.end(), [&](const std::string& a, const std::string& b) {
      return store.get(a).order_index < store.get(b).order_index;
    });
  }
  ContextBundle bundle;
  for (const auto& id : ordered) {
    const auto& chunk = store.get(id);
    bundle.total_token_estimate += chunk.token_estimate;
    bundle.chunks.push_back(chunk);
    bundle.provenance.push_back(best.at(id));
  }
  return bundle;
}

}  // namespace protex::retrieval
