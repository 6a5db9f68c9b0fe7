#include "protex/chunker.hpp"

#include <cctype>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>

#include "protex/error.hpp"

namespace protex::chunking {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

struct EstimatorRegistry {
  std::mutex mu;
  std::map<std::string, TokenEstimator, std::less<>> estimators;

  EstimatorRegistry() {
    estimators["words_4_3"] = [](std::string_view t) { return (count_words(t) * 4 + 2) / 3; };
    estimators["chars_4"] = [](std::string_view t) { return (t.size() + 3) / 4; };
  }
};

EstimatorRegistry& registry() {
  static EstimatorRegistry r;
  return r;
}

const TokenEstimator& lookup(std::string_view strategy) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  const auto it = r.estimators.find(strategy);
  if (it == r.estimators.end()) {
    throw Error(ErrorCode::UnknownStrategy, "unknown token estimator '" + std::string(strategy) + "'");
  }
  return it->second;
}

// Boundary finders return cut positions (exclusive ends of pieces).

std::vector<std::size_t> paragraph_cuts(std::string_view t) {
  std::vector<std::size_t> cuts;
  std::size_t i = 0;
  while ((i = t.find("\n\n", i)) != std::string_view::npos) {
    std::size_t j = i;
    while (j < t.size() && is_space(t[j])) ++j;
    if (j < t.size()) cuts.push_back(j);
    i = j;
  }
  return cuts;
}

std::vector<std::size_t> sentence_cuts(std::string_view t) {
  std::vector<std::size_t> cuts;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const char c = t[i];
    if ((c == '.' || c == '!' || c == '?') && is_space(t[i + 1])) {
      std::size_t j = i + 1;
      while (j < t.size() && is_space(t[j])) ++j;
      if (j < t.size()) cuts.push_back(j);
      i = j - 1;
    }
  }
  return cuts;
}

std::vector<std::size_t> word_cuts(std::string_view t) {
  std::vector<std::size_t> cuts;
  std::size_t i = 0;
  while (i < t.size()) {
    if (!is_space(t[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < t.size() && is_space(t[j])) ++j;
    if (j < t.size() && i > 0) cuts.push_back(j);
    i = j;
  }
  return cuts;
}

std::vector<std::size_t> char_cuts(std::string_view t) {
  std::vector<std::size_t> cuts;
  for (std::size_t i = 1; i < t.size(); ++i) {
    // Never cut inside a UTF-8 sequence.
    if ((static_cast<unsigned char>(t[i]) & 0xC0) != 0x80) cuts.push_back(i);
  }
  return cuts;
}

std::vector<std::string_view> cut_at(std::string_view t, const std::vector<std::size_t>& cuts) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t c : cuts) {
    if (c <= start || c >= t.size()) continue;
    out.push_back(t.substr(start, c - start));
    start = c;
  }
  out.push_back(t.substr(start));
  return out;
}

// Refines `t` into atoms that individually fit, descending through boundary
// kinds as needed.
void atomize(std::string_view t, int depth, const TokenEstimator& est, std::size_t max_tokens,
             std::vector<std::string_view>& atoms) {
  if (est(t) <= max_tokens || depth > 3) {
    atoms.push_back(t);
    return;
  }
  std::vector<std::size_t> cuts;
  switch (depth) {
    case 0: cuts = paragraph_cuts(t); break;
    case 1: cuts = sentence_cuts(t); break;
    case 2: cuts = word_cuts(t); break;
    default: cuts = char_cuts(t); break;
  }
  const auto pieces = cut_at(t, cuts);
  if (pieces.size() == 1) {
    atomize(t, depth + 1, est, max_tokens, atoms);
    return;
  }
  for (auto p : pieces) atomize(p, depth + 1, est, max_tokens, atoms);
}

std::string chunk_id_for(const std::string& doc_id, int order) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%05d", order);
  return doc_id + ":" + buf;
}

std::string group_id_for(const std::string& doc_id, std::size_t segment) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "g%05zu", segment);
  return doc_id + ":" + buf;
}

std::string overlap_tail(std::string_view previous, int overlap_tokens, const TokenEstimator& est) {
  if (overlap_tokens <= 0) return {};
  const auto cuts = word_cuts(previous);
  // Longest suffix starting at a word boundary that fits the overlap budget.
  std::string_view best;
  for (auto it = cuts.rbegin(); it != cuts.rend(); ++it) {
    const auto candidate = previous.substr(*it);
    if (est(candidate) > static_cast<std::size_t>(overlap_tokens)) break;
    best = candidate;
  }
  return std::string(best);
}

}  // namespace

std::size_t estimate_tokens(std::string_view text, std::string_view strategy) {
  return lookup(strategy)(text);
}

void register_estimator(const std::string& name, TokenEstimator estimator) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.estimators[name] = std::move(estimator);
}

bool has_estimator(std::string_view name) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  return r.estimators.find(name) != r.estimators.end();
}

void ChunkConfig::validate() const {
  if (max_chunk_tokens < 1) throw Error(ErrorCode::InvalidConfig, "max_chunk_tokens must be >= 1");
  if (overlap_tokens < 0 || overlap_tokens >= max_chunk_tokens) {
    throw Error(ErrorCode::InvalidConfig, "overlap_tokens must satisfy 0 <= overlap < max_chunk_tokens");
  }
  if (!has_estimator(token_estimator)) {
    throw Error(ErrorCode::UnknownStrategy, "unknown token estimator '" + token_estimator + "'");
  }
}

std::vector<std::string_view> split_to_fit(std::string_view text, std::size_t max_tokens,
                                           std::string_view strategy) {
  const TokenEstimator est = lookup(strategy);
  if (text.empty()) return {};
  std::vector<std::string_view> atoms;
  atomize(text, 0, est, max_tokens, atoms);

  // Greedy packing of consecutive atoms. Atoms are contiguous in `text`, so a
  // piece is just a [begin, end) window.
  std::vector<std::string_view> pieces;
  const char* base = text.data();
  std::size_t begin = 0;
  std::size_t end = 0;
  for (auto atom : atoms) {
    const std::size_t a_end = static_cast<std::size_t>(atom.data() - base) + atom.size();
    if (end > begin && est(text.substr(begin, a_end - begin)) > max_tokens) {
      pieces.push_back(text.substr(begin, end - begin));
      begin = end;
    }
    end = a_end;
  }
  if (end > begin) pieces.push_back(text.substr(begin, end - begin));
  return pieces;
}

std::vector<Chunk> chunk_document(const ingest::ProtocolPackage& pkg, const ingest::SectionNode& tree,
                                  const ChunkConfig& cfg) {
  cfg.validate();
  const TokenEstimator est = lookup(cfg.token_estimator);
  const std::string text = pkg.document_text();
  std::vector<Chunk> chunks;
  if (text.empty()) return chunks;

  // Pre-order traversal gives nodes in document order; each node owns the
  // text from its start to the next node's start.
  struct Segment {
    const ingest::SectionNode* node;
    std::vector<std::string> path;
  };
  std::vector<Segment> segments;
  std::vector<std::string> path;
  std::function<void(const ingest::SectionNode&, bool)> walk = [&](const ingest::SectionNode& n, bool is_root) {
    if (!is_root) path.push_back(n.heading_text);
    segments.push_back({&n, path});
    for (const auto& c : n.children) walk(c, false);
    if (!is_root) path.pop_back();
  };
  walk(tree, true);

  const auto make_chunk = [&](const Segment& seg, std::size_t start, std::string_view body) {
    Chunk c;
    c.order_index = static_cast<int>(chunks.size());
    c.chunk_id = chunk_id_for(pkg.doc_id, c.order_index);
    c.doc_id = pkg.doc_id;
    c.section_path = seg.path;
    c.level = seg.node->level;
    c.char_span = {start, start + body.size()};
    c.first_page = pkg.page_at(c.char_span.start);
    c.last_page = pkg.page_at(c.char_span.end == 0 ? 0 : c.char_span.end - 1);
    c.text = std::string(body);
    c.token_estimate = est(body);
    return c;
  };

  for (std::size_t s = 0; s < segments.size(); ++s) {
    const std::size_t start = segments[s].node->char_span.start;
    const std::size_t end = s + 1 < segments.size() ? segments[s + 1].node->char_span.start : text.size();
    if (end <= start) continue;
    const std::string_view body(text.data() + start, end - start);
    if (!has_non_space(body)) continue;

    const auto pieces = split_to_fit(body, static_cast<std::size_t>(cfg.max_chunk_tokens), cfg.token_estimator);
    if (pieces.size() == 1) {
      chunks.push_back(make_chunk(segments[s], start, body));
      continue;
    }
    const std::string group = group_id_for(pkg.doc_id, s);
    std::size_t offset = start;
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      Chunk c = make_chunk(segments[s], offset, pieces[p]);
      c.split_group = SplitGroup{group, static_cast<int>(p), static_cast<int>(pieces.size())};
      if (p > 0) c.overlap_prefix = overlap_tail(pieces[p - 1], cfg.overlap_tokens, est);
      offset += pieces[p].size();
      chunks.push_back(std::move(c));
    }
  }
  return chunks;
}

std::string embedding_input(const Chunk& chunk) {
  std::string out = join(chunk.section_path, " > ");
  out.push_back('\n');
  out += chunk.overlap_prefix;
  out += chunk.text;
  return out;
}

json to_json(const Chunk& c) {
  json j = {{"chunk_id", c.chunk_id},
            {"doc_id", c.doc_id},
            {"order_index", c.order_index},
            {"section_path", c.section_path},
            {"level", c.level},
            {"page_span", {c.first_page, c.last_page}},
            {"char_span", {c.char_span.start, c.char_span.end}},
            {"text", c.text},
            {"token_estimate", c.token_estimate}};
  if (c.split_group) {
    j["split_group"] = {{"group_id", c.split_group->group_id},
                        {"part_index", c.split_group->part_index},
                        {"part_count", c.split_group->part_count}};
  } else {
    j["split_group"] = nullptr;
  }
  if (!c.overlap_prefix.empty()) j["overlap_prefix"] = c.overlap_prefix;
  return j;
}

Chunk chunk_from_json(const json& j) {
  try {
    Chunk c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.order_index = j.at("order_index").get<int>();
    c.section_path = j.at("section_path").get<std::vector<std::string>>();
    c.level = j.at("level").get<int>();
    c.first_page = j.at("page_span").at(0).get<int>();
    c.last_page = j.at("page_span").at(1).get<int>();
    c.char_span = {j.at("char_span").at(0).get<std::size_t>(), j.at("char_span").at(1).get<std::size_t>()};
    c.text = j.at("text").get<std::string>();
    c.token_estimate = j.at("token_estimate").get<std::size_t>();
    if (j.contains("split_group") && j["split_group"].is_object()) {
      const auto& g = j["split_group"];
      c.split_group = SplitGroup{g.at("group_id").get<std::string>(), g.at("part_index").get<int>(),
                                 g.at("part_count").get<int>()};
    }
    c.overlap_prefix = j.value("overlap_prefix", "");
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed chunk record: ") + e.what());
  }
}

void write_chunks_jsonl(const fs::path& path, const std::vector<Chunk>& chunks) {
  std::string out;
  for (const auto& c : chunks) {
    out += to_json(c).dump();
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

std::vector<Chunk> read_chunks_jsonl(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Chunk> chunks;
  std::string line;
  while (std::getline(in, line)) {
    if (!has_non_space(line)) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::InvalidArgument, "malformed line in " + path.string());
    chunks.push_back(chunk_from_json(j));
  }
  return chunks;
}

}  // namespace protex::chunking
