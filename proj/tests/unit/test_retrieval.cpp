#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "protex/retrieval.hpp"
#include "support.hpp"

using namespace protex;
using namespace protex::retrieval;

namespace {

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector{std::move(v)}; }

struct Fixture {
  std::vector<chunking::Chunk> chunks;
  ChunkStore store;
  VectorIndex index;
};

Fixture random_fixture(std::mt19937_64& rng, MockEmbedder& embedder) {
  const auto pkg = ingest::make_package("r", protex::testing::synthetic_pages(rng, 2000 + rng() % 6000));
  chunking::ChunkConfig cfg;
  cfg.max_chunk_tokens = 80 + static_cast<int>(rng() % 120);
  Fixture f;
  f.chunks = chunking::chunk_document(pkg, ingest::build_section_tree(pkg), cfg);
  f.store = ChunkStore(f.chunks);
  f.index = build_index(f.chunks, embedder);
  return f;
}

}  // namespace

TEST(Cosine, KnownValues) {
  EXPECT_NEAR(cosine(vec({1, 0}), vec({1, 0})), 1.0, 1e-9);
  EXPECT_NEAR(cosine(vec({1, 0}), vec({0, 1})), 0.0, 1e-9);
  EXPECT_NEAR(cosine(vec({1, 0}), vec({1, 1})), 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(cosine(vec({3, 4}), vec({-3, -4})), -1.0, 1e-9);
}

TEST(Cosine, Errors) {
  try {
    cosine(vec({1, 0}), vec({1, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  try {
    cosine(vec({0, 0}), vec({1, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroNormVector);
  }
}

TEST(MockEmbedding, DeterministicNormalizedCaseInsensitive) {
  const auto a = mock_embedding("Adverse Event reporting");
  const auto b = mock_embedding("adverse event REPORTING");
  EXPECT_EQ(a.values, b.values);
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  EXPECT_EQ(a.dim(), kMockEmbeddingDim);
  EXPECT_NEAR(mock_embedding("").norm(), 1.0, 1e-12);
  EXPECT_NEAR(cosine(mock_embedding("dose dose"), mock_embedding("dose")), 1.0, 1e-12);
}

TEST(Rank, TiesGoToLowerOrderIndex) {
  VectorIndex idx;
  idx.dim = 2;
  idx.entries = {{"c2", 2, vec({1, 0})}, {"c0", 0, vec({1, 0})}, {"c1", 1, vec({0, 1})}};
  const auto ranked = rank(idx, vec({1, 0}));
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(idx.entries[ranked[0].first].chunk_id, "c0");
  EXPECT_EQ(idx.entries[ranked[1].first].chunk_id, "c2");
  EXPECT_EQ(idx.entries[ranked[2].first].chunk_id, "c1");
}

TEST(Search, EmptyIndexAndBadQueries) {
  MockEmbedder emb;
  VectorIndex empty;
  ChunkStore store;
  RetrievalQuery q{{"dose"}};
  try {
    search(empty, q, emb, store);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyIndex);
  }
  std::mt19937_64 rng(1);
  auto f = random_fixture(rng, emb);
  EXPECT_THROW(search(f.index, RetrievalQuery{{}}, emb, f.store), Error);
  RetrievalQuery zero{{"dose"}};
  zero.top_k = 0;
  EXPECT_THROW(search(f.index, zero, emb, f.store), Error);
}

TEST(Search, ReproducibleByteForByte) {
  MockEmbedder emb;
  std::mt19937_64 rng(77);
  auto f = random_fixture(rng, emb);
  RetrievalQuery q{{"adverse event reporting", "blood sample storage"}};
  const auto a = search(f.index, q, emb, f.store).to_json().dump();
  // rebuild everything from scratch
  MockEmbedder emb2;
  const auto index2 = build_index(f.chunks, emb2);
  const auto b = search(index2, q, emb2, ChunkStore(f.chunks)).to_json().dump();
  EXPECT_EQ(a, b);
}

TEST(Search, PropertiesOnRandomizedFixtures) {
  MockEmbedder emb;
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 30; ++trial) {
    auto f = random_fixture(rng, emb);
    RetrievalQuery q;
    const int nq = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < nq; ++i) q.query_texts.push_back(protex::testing::random_words(rng, 2 + rng() % 5));
    q.top_k = 1 + static_cast<int>(rng() % 8);

    // brute-force oracle for the directly ranked set
    std::set<std::string> direct;
    for (const auto& text : q.query_texts) {
      const auto qv = mock_embedding(text);
      std::vector<std::pair<double, int>> scored;
      for (const auto& c : f.chunks) scored.push_back({-cosine(qv, mock_embedding(chunking::embedding_input(c))), c.order_index});
      std::sort(scored.begin(), scored.end());
      for (int k = 0; k < std::min<int>(q.top_k, scored.size()); ++k) direct.insert(f.chunks[scored[k].second].chunk_id);
    }

    RetrievalQuery plain = q;
    plain.reunion = false;
    const auto no_reunion = search(f.index, plain, emb, f.store);
    const auto plain_ids = no_reunion.chunk_ids();
    EXPECT_EQ(std::set<std::string>(plain_ids.begin(), plain_ids.end()), direct);

    const auto bundle = search(f.index, q, emb, f.store);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < bundle.chunks.size(); ++i) {
      ids.insert(bundle.chunks[i].chunk_id);
      if (i > 0) {
        EXPECT_LT(bundle.chunks[i - 1].order_index, bundle.chunks[i].order_index);
      }
      EXPECT_EQ(bundle.provenance[i].via_reunion, direct.count(bundle.chunks[i].chunk_id) == 0);
    }
    EXPECT_EQ(ids.size(), bundle.chunks.size());
    // reunion closure: every split group touched is complete
    for (const auto& c : bundle.chunks) {
      if (!c.split_group) continue;
      for (const auto& sibling : f.store.group(c.split_group->group_id)) EXPECT_TRUE(ids.count(sibling)) << sibling;
    }
    // nothing outside direct hits and their groups
    for (const auto& id : ids) {
      if (direct.count(id)) continue;
      const auto& c = f.store.get(id);
      ASSERT_TRUE(c.split_group);
      bool sibling_hit = false;
      for (const auto& s : f.store.group(c.split_group->group_id)) sibling_hit = sibling_hit || direct.count(s);
      EXPECT_TRUE(sibling_hit);
    }
    std::size_t tokens = 0;
    for (const auto& c : bundle.chunks) tokens += c.token_estimate;
    EXPECT_EQ(bundle.total_token_estimate, tokens);
  }
}

TEST(Search, RelevanceOrderWhenDocumentOrderingIsOff) {
  MockEmbedder emb;
  std::mt19937_64 rng(6);
  auto f = random_fixture(rng, emb);
  RetrievalQuery q{{"safety monitor report"}};
  q.reunion = false;
  q.order_by_document = false;
  const auto bundle = search(f.index, q, emb, f.store);
  for (std::size_t i = 1; i < bundle.provenance.size(); ++i) {
    EXPECT_GE(bundle.provenance[i - 1].similarity, bundle.provenance[i].similarity);
  }
}

TEST(VectorIndex, SaveLoadRoundTrip) {
  protex::testing::TempDir tmp;
  MockEmbedder emb;
  std::mt19937_64 rng(2);
  auto f = random_fixture(rng, emb);
  f.index.save(tmp / "index.json");
  const auto back = VectorIndex::load(tmp / "index.json");
  EXPECT_EQ(back.to_json(), f.index.to_json());
  EXPECT_EQ(back.embedder_id, "mock/256");
}

TEST(ContextBundle, RenderHasSectionPathsAndPages) {
  chunking::Chunk a;
  a.chunk_id = "d:c00000";
  a.text = "preface";
  chunking::Chunk b;
  b.chunk_id = "d:c00001";
  b.section_path = {"1. A", "1.1 B"};
  b.first_page = 2;
  b.last_page = 3;
  b.text = "body";
  ContextBundle bundle{{a, b}, {{"d:c00000", 1.0}, {"d:c00001", 0.5}}, 2};
  const std::string r = bundle.render();
  EXPECT_NE(r.find("(front matter)"), std::string::npos);
  EXPECT_NE(r.find("1. A > 1.1 B"), std::string::npos);
  EXPECT_LT(r.find("preface"), r.find("body"));
}
