#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace protex {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
};

inline constexpr std::size_t kMockEmbeddingDim = 256;
inline constexpr std::uint64_t kMockEmbeddingSeed = 0x70726f7465783031ULL;

/// Deterministic offline embedding: every lowercase ASCII alphanumeric token
/// adds +1 at hash(token) mod dim, then the vector is L2-normalized. Text
/// without tokens maps to the bucket of the empty token so the norm stays
/// positive.
EmbeddingVector mock_embedding(std::string_view text, std::size_t dim = kMockEmbeddingDim);

}  // namespace protex
