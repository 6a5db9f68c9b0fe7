#include "protex/embedding.hpp"

#include <cctype>
#include <cmath>

#include "protex/util.hpp"

namespace protex {

double EmbeddingVector::norm() const {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

EmbeddingVector mock_embedding(std::string_view text, std::size_t dim) {
  EmbeddingVector out;
  out.values.assign(dim, 0.0);
  std::string token;
  bool any = false;
  const auto flush = [&] {
    if (token.empty()) return;
    out.values[seeded_hash64(token, kMockEmbeddingSeed) % dim] += 1.0;
    token.clear();
    any = true;
  };
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (uc < 0x80 && std::isalnum(uc)) {
      token.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      flush();
    }
  }
  flush();
  if (!any) out.values[seeded_hash64("", kMockEmbeddingSeed) % dim] = 1.0;
  const double n = out.norm();
  for (double& v : out.values) v /= n;
  return out;
}

}  // namespace protex
