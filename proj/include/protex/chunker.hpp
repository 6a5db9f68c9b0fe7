#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protex/ingest.hpp"

namespace protex::chunking {

inline constexpr std::string_view kDefaultEstimator = "words_4_3";

/// Token count for `text` under a named strategy.
///   words_4_3: ceil(whitespace-delimited word count * 4 / 3)
///   chars_4:   ceil(byte count / 4)
/// Throws Error(UnknownStrategy) for unregistered names.
std::size_t estimate_tokens(std::string_view text, std::string_view strategy = kDefaultEstimator);

using TokenEstimator = std::function<std::size_t(std::string_view)>;
void register_estimator(const std::string& name, TokenEstimator estimator);
bool has_estimator(std::string_view name);

struct SplitGroup {
  std::string group_id;
  int part_index = 0;
  int part_count = 1;
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  int order_index = 0;
  std::vector<std::string> section_path;
  int level = 0;
  int first_page = 1;
  int last_page = 1;
  ingest::CharSpan char_span;
  std::string text;
  std::optional<SplitGroup> split_group;
  std::size_t token_estimate = 0;
  /// Tail of the previous part of the same split group, used only as extra
  /// embedding context when overlap_tokens > 0. Never part of `text`.
  std::string overlap_prefix;
};

struct ChunkConfig {
  int max_chunk_tokens = 480;
  int overlap_tokens = 0;
  std::string token_estimator{kDefaultEstimator};

  /// Throws InvalidConfig unless 0 <= overlap < max and the estimator exists.
  void validate() const;
};

/// Splits the document into one chunk per section segment (a section's
/// heading and body up to its first subsection). Segments over the token cap
/// become a split group of sequential parts, cut at paragraph, then
/// sentence, then word boundaries. Whitespace-only segments are skipped.
std::vector<Chunk> chunk_document(const ingest::ProtocolPackage& pkg, const ingest::SectionNode& tree,
                                  const ChunkConfig& cfg = {});

/// Cuts `text` into consecutive pieces that each satisfy the token cap;
/// concatenating the pieces reproduces `text`. Exposed for testing.
std::vector<std::string_view> split_to_fit(std::string_view text, std::size_t max_tokens,
                                           std::string_view strategy = kDefaultEstimator);

/// Text sent to the embedding model: section path joined by " > ", newline,
/// then the chunk text (preceded by the overlap prefix, if any).
std::string embedding_input(const Chunk& chunk);

json to_json(const Chunk& chunk);
Chunk chunk_from_json(const json& j);

void write_chunks_jsonl(const fs::path& path, const std::vector<Chunk>& chunks);
std::vector<Chunk> read_chunks_jsonl(const fs::path& path);

}  // namespace protex::chunking
