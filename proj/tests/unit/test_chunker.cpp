#include <gtest/gtest.h>

#include <map>

#include "protex/chunker.hpp"
#include "support.hpp"

using namespace protex;
using namespace protex::chunking;

namespace {

bool blank(std::string_view s) { return !has_non_space(s); }

struct Segment {
  std::size_t start, end;
};

/// Independent segment computation: a node's own text runs from its start to
/// its first child (or its end).
std::vector<Segment> segments(const ingest::SectionNode& root) {
  std::vector<Segment> out;
  for (const auto* n : ingest::flatten(root)) {
    const std::size_t end = n->children.empty() ? n->char_span.end : n->children.front().char_span.start;
    out.push_back({n->char_span.start, end});
  }
  return out;
}

void check_round_trip(const ingest::ProtocolPackage& pkg, const ChunkConfig& cfg) {
  const std::string text = pkg.document_text();
  const auto tree = ingest::build_section_tree(pkg);
  const auto chunks = chunk_document(pkg, tree, cfg);

  // chunk text is its span and spans are ordered and disjoint
  std::size_t prev_end = 0;
  std::string covered;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    EXPECT_EQ(c.order_index, static_cast<int>(i));
    ASSERT_LE(c.char_span.end, text.size());
    EXPECT_EQ(c.text, text.substr(c.char_span.start, c.char_span.size()));
    EXPECT_GE(c.char_span.start, prev_end);
    EXPECT_TRUE(blank(std::string_view(text).substr(prev_end, c.char_span.start - prev_end)));
    EXPECT_LE(c.token_estimate, static_cast<std::size_t>(cfg.max_chunk_tokens));
    EXPECT_EQ(c.token_estimate, estimate_tokens(c.text, cfg.token_estimator));
    EXPECT_EQ(c.first_page, pkg.page_at(c.char_span.start));
    prev_end = c.char_span.end;
    covered += c.text;
  }
  EXPECT_TRUE(blank(std::string_view(text).substr(prev_end)));

  // every non-blank segment is reproduced by one chunk or one split group
  std::map<std::string, std::vector<const Chunk*>> groups;
  for (const auto& c : chunks) {
    if (c.split_group) groups[c.split_group->group_id].push_back(&c);
  }
  std::string expected;
  for (const auto& s : segments(tree)) {
    const std::string seg = text.substr(s.start, s.end - s.start);
    if (blank(seg)) continue;
    expected += seg;
    bool matched = false;
    for (const auto& c : chunks) {
      if (c.char_span.start == s.start && c.char_span.end == s.end && !c.split_group) matched = true;
    }
    for (const auto& [gid, parts] : groups) {
      if (parts.front()->char_span.start != s.start) continue;
      std::string joined;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        EXPECT_EQ(parts[k]->split_group->part_index, static_cast<int>(k));
        EXPECT_EQ(parts[k]->split_group->part_count, static_cast<int>(parts.size()));
        joined += parts[k]->text;
      }
      if (joined == seg) matched = true;
    }
    EXPECT_TRUE(matched) << "segment at " << s.start << " not reproduced";
  }
  EXPECT_EQ(covered, expected);
}

}  // namespace

TEST(Estimator, WordsFourThirds) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("one two three"), 4u);  // ceil(3*4/3)
  EXPECT_EQ(estimate_tokens("a b c d"), 6u);        // ceil(16/3)
  EXPECT_EQ(estimate_tokens("abcdefgh", "chars_4"), 2u);
  EXPECT_THROW(estimate_tokens("x", "nope"), Error);
}

TEST(SplitToFit, PiecesConcatenateAndFit) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const std::string text = protex::testing::random_words(rng, 50 + rng() % 2000);
    const std::size_t cap = 20 + rng() % 200;
    const auto parts = split_to_fit(text, cap);
    std::string joined;
    for (auto p : parts) {
      EXPECT_LE(estimate_tokens(p), cap);
      joined += p;
    }
    EXPECT_EQ(joined, text);
  }
}

TEST(ChunkDocument, SmallFixture) {
  const auto pkg = ingest::make_package("doc", {"PREAMBLE LINE\nintro words\n1. A\nalpha\n1.1 B\nbeta\n", "2. C\ngamma\n"});
  const auto chunks = chunk_document(pkg, ingest::build_section_tree(pkg));
  ASSERT_EQ(chunks.size(), 4u);
  EXPECT_EQ(chunks[0].chunk_id, "doc:c00000");
  EXPECT_EQ(chunks[2].section_path, (std::vector<std::string>{"1. A", "1.1 B"}));
  EXPECT_EQ(chunks[3].first_page, 2);
}

TEST(ChunkDocument, RoundTripOnSyntheticDocuments) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 25; ++i) {
    const std::size_t words = (i == 0) ? 0 : rng() % 37000;  // up to about 50k tokens
    const auto pkg = ingest::make_package("s" + std::to_string(i), protex::testing::synthetic_pages(rng, words));
    ChunkConfig cfg;
    cfg.max_chunk_tokens = 64 + static_cast<int>(rng() % 500);
    SCOPED_TRACE("document " + std::to_string(i));
    check_round_trip(pkg, cfg);
  }
}

TEST(ChunkDocument, OversizedSectionBecomesSplitGroup) {
  std::mt19937_64 rng(3);
  const auto pkg = ingest::make_package("d", {"1. BIG\n" + protex::testing::random_words(rng, 3000) + "\n"});
  ChunkConfig cfg;
  cfg.max_chunk_tokens = 200;
  const auto chunks = chunk_document(pkg, ingest::build_section_tree(pkg), cfg);
  ASSERT_GT(chunks.size(), 1u);
  std::string joined;
  for (const auto& c : chunks) {
    ASSERT_TRUE(c.split_group);
    EXPECT_EQ(c.split_group->group_id, chunks[0].split_group->group_id);
    joined += c.text;
  }
  EXPECT_EQ(joined, pkg.document_text());
}

TEST(ChunkDocument, OverlapPrefixIsNotPartOfText) {
  std::mt19937_64 rng(4);
  const auto pkg = ingest::make_package("d", {"1. BIG\n" + protex::testing::random_words(rng, 1500) + "\n"});
  ChunkConfig cfg;
  cfg.max_chunk_tokens = 200;
  cfg.overlap_tokens = 20;
  const auto chunks = chunk_document(pkg, ingest::build_section_tree(pkg), cfg);
  ASSERT_GT(chunks.size(), 1u);
  EXPECT_TRUE(chunks[0].overlap_prefix.empty());
  EXPECT_FALSE(chunks[1].overlap_prefix.empty());
  check_round_trip(pkg, cfg);
}

TEST(ChunkDocument, Deterministic) {
  std::mt19937_64 rng(8);
  const auto pkg = ingest::make_package("d", protex::testing::synthetic_pages(rng, 5000));
  const auto tree = ingest::build_section_tree(pkg);
  const auto a = chunk_document(pkg, tree);
  const auto b = chunk_document(pkg, tree);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json(a[i]), to_json(b[i]));
}

TEST(ChunkConfig, Validation) {
  ChunkConfig cfg;
  cfg.overlap_tokens = cfg.max_chunk_tokens;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.overlap_tokens = 0;
  cfg.token_estimator = "unknown";
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(ChunkJsonl, RoundTrip) {
  protex::testing::TempDir tmp;
  std::mt19937_64 rng(9);
  const auto pkg = ingest::make_package("d", protex::testing::synthetic_pages(rng, 3000));
  ChunkConfig cfg;
  cfg.max_chunk_tokens = 100;
  const auto chunks = chunk_document(pkg, ingest::build_section_tree(pkg), cfg);
  write_chunks_jsonl(tmp / "c.jsonl", chunks);
  const auto back = read_chunks_jsonl(tmp / "c.jsonl");
  ASSERT_EQ(back.size(), chunks.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(to_json(back[i]), to_json(chunks[i]));
}

TEST(EmbeddingInput, PathThenText) {
  Chunk c;
  c.section_path = {"1. A", "1.1 B"};
  c.text = "body";
  EXPECT_EQ(embedding_input(c), "1. A > 1.1 B\nbody");
}
