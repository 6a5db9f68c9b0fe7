#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "protex/gateway.hpp"
#include "protex/ingest.hpp"

namespace protex::testing {

/// Repository root (compile-time).
fs::path source_dir();
fs::path fixture_path(const std::string& relative);
fs::path sample_dir();

/// Expected element weights in table order, kept apart from the bundled
/// registry files.
const std::vector<std::pair<std::string, double>>& reference_weights();

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Transport answering completions with a callback; embeddings use
/// mock_embedding. Counts every call.
class ScriptedTransport : public gateway::Transport {
 public:
  using Reply = std::function<std::string(const gateway::Request&)>;
  explicit ScriptedTransport(Reply reply) : reply_(std::move(reply)) {}

  gateway::Response complete(const gateway::ProviderConfig& cfg, const gateway::Request& request) override;
  std::vector<EmbeddingVector> embed(const gateway::ProviderConfig& cfg, const std::vector<std::string>& texts) override;

  std::size_t completions() const { return completions_; }
  std::size_t embeddings() const { return embeddings_; }

 private:
  Reply reply_;
  std::atomic<std::size_t> completions_{0};
  std::atomic<std::size_t> embeddings_{0};
};

/// Mock gateway whose every provider uses `transport`.
std::unique_ptr<gateway::Gateway> scripted_gateway(std::shared_ptr<gateway::Transport> transport,
                                                   gateway::GatewayConfig cfg = gateway::GatewayConfig::mock({}));

/// Random protocol-like page texts: numbered headings up to `max_depth`,
/// ALL-CAPS headings, paragraphs and occasional oversized sections, about
/// `target_words` words in total.
std::vector<std::string> synthetic_pages(std::mt19937_64& rng, std::size_t target_words, int max_depth = 3);

/// Text of `n` random lowercase words from a small vocabulary.
std::string random_words(std::mt19937_64& rng, std::size_t n);

}  // namespace protex::testing
