#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "protex/embedding.hpp"
#include "protex/error.hpp"
#include "protex/util.hpp"

/// Uniform access to chat, multimodal and embedding providers with budget
/// checks, retries, per-provider rate limiting, deterministic mocks and a
/// hash-only audit trail.
namespace protex::gateway {

enum class ProviderKind { chat, multimodal, embedding };

std::string_view to_string(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view s);

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_base_ms = 250;
};

struct ProviderConfig {
  std::string provider_id;
  ProviderKind kind = ProviderKind::chat;
  std::string model_name;
  /// Base URL of an OpenAI-compatible API, or "mock".
  std::string endpoint = "mock";
  std::size_t max_context_tokens = 128000;
  double rate_limit_per_min = 600.0;
  RetryPolicy retry;
  bool persist_bodies = false;
  double temperature = 0.0;
  /// Maximum images per multimodal request.
  std::size_t batch_limit = 4;
  /// Maximum texts per embedding request.
  std::size_t embed_batch_size = 96;
  std::string token_estimator = "words_4_3";

  // Mock endpoints only.
  fs::path fixtures_dir;
  int mock_fail_first = 0;
  std::size_t embedding_dim = kMockEmbeddingDim;
  bool record_missing = false;

  bool is_mock() const { return endpoint == "mock"; }
  /// Identifier recorded with results: "<provider_id>/<model_name>".
  std::string config_id() const;
  void validate() const;
  json to_json() const;
  /// `base_dir` resolves a relative fixtures_dir. Rejects inline secrets.
  static ProviderConfig from_json(const json& j, const fs::path& base_dir = {});
};

struct TokenCounts {
  std::size_t prompt = 0;
  std::size_t completion = 0;
};

struct Image {
  std::string bytes;
  std::string digest;  // sha256 hex of bytes

  static Image from_bytes(std::string bytes);
  static Image from_file(const fs::path& path);
};

struct CompletionOptions {
  std::optional<double> temperature;
  std::optional<int> max_output_tokens;
};

struct Request {
  std::string prompt;
  std::vector<Image> images;
  CompletionOptions options;
};

struct Response {
  std::string text;
  std::optional<TokenCounts> usage;
};

struct Completion {
  std::string text;
  TokenCounts token_counts;
  int attempts = 1;
  std::string outcome;  // "ok" or "retried(n)"
};

/// Retryable failure (timeouts, 429, 5xx). Anything else thrown by a
/// transport is final.
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message) : Error(ErrorCode::ProviderError, message) {}
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response complete(const ProviderConfig& cfg, const Request& request) = 0;
  virtual std::vector<EmbeddingVector> embed(const ProviderConfig& cfg, const std::vector<std::string>& texts) = 0;
};

/// Fixture-replaying transport. A completion is looked up as
/// `<fixtures_dir>/<key>.txt` where key = sha256(prompt) for text requests
/// and sha256(prompt followed by each image's sha256 hex) for multimodal
/// ones. When no digest fixture exists, `<fixtures_dir>/routes.json` may map
/// prompt substrings to fixture files. Embeddings use mock_embedding().
class MockTransport : public Transport {
 public:
  Response complete(const ProviderConfig& cfg, const Request& request) override;
  std::vector<EmbeddingVector> embed(const ProviderConfig& cfg, const std::vector<std::string>& texts) override;

  static std::string fixture_key(const Request& request);

 private:
  std::mutex mu_;
  std::map<std::string, int> failures_;
  std::map<fs::path, json> routes_cache_;
};

/// OpenAI-compatible HTTP transport (`/chat/completions`, `/embeddings`).
/// The API key is read from `<PROVIDER_ID>_API_KEY` or from the file named by
/// `<PROVIDER_ID>_API_KEY_FILE`.
class HttpTransport : public Transport {
 public:
  Response complete(const ProviderConfig& cfg, const Request& request) override;
  std::vector<EmbeddingVector> embed(const ProviderConfig& cfg, const std::vector<std::string>& texts) override;
};

std::optional<std::string> provider_api_key(const std::string& provider_id);

struct AuditLogEntry {
  std::string timestamp;
  std::string provider_id;
  std::string request_hash;
  std::string response_hash;
  long long latency_ms = 0;
  TokenCounts token_counts;
  std::string outcome;  // "ok", "retried(n)" or "failed"
  int attempt = 1;
  std::string error_code;
  std::optional<std::string> request_body;
  std::optional<std::string> response_body;

  json to_json() const;
};

/// Append-only; optionally mirrored to a JSON-lines file.
class AuditLog {
 public:
  explicit AuditLog(std::optional<fs::path> path = std::nullopt, Clock clock = {});

  void append(AuditLogEntry entry);
  std::vector<AuditLogEntry> entries() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::optional<fs::path> path_;
  Clock clock_;
  std::vector<AuditLogEntry> entries_;
};

struct GatewayConfig {
  std::vector<ProviderConfig> providers;
  /// Pipeline role -> provider_id. Roles: generation, multimodal, embedding,
  /// judge, adjudicator.
  std::map<std::string, std::string> roles;

  static GatewayConfig from_json(const json& j, const fs::path& base_dir = {});
  static GatewayConfig load(const fs::path& path);
  /// All roles served by mock providers reading `fixtures_dir`.
  static GatewayConfig mock(const fs::path& fixtures_dir);
  json to_json() const;
};

class Gateway {
 public:
  explicit Gateway(GatewayConfig config, std::shared_ptr<AuditLog> audit = nullptr);

  Completion complete(const std::string& provider_id, const std::string& prompt,
                      const CompletionOptions& options = {});
  Completion complete_multimodal(const std::string& provider_id, const std::string& prompt,
                                 const std::vector<Image>& images, const CompletionOptions& options = {});
  /// One vector per text, order preserved. Over-budget texts raise
  /// BatchItemError(ContextLimitExceeded) carrying the text index.
  std::vector<EmbeddingVector> embed(const std::string& provider_id, const std::vector<std::string>& texts);

  const ProviderConfig& provider(const std::string& provider_id) const;
  /// Provider id bound to a role; throws InvalidConfig when unbound.
  const std::string& role(const std::string& role_name) const;
  const GatewayConfig& config() const { return config_; }

  void set_transport(const std::string& provider_id, std::shared_ptr<Transport> transport);
  AuditLog& audit() { return *audit_; }
  /// Transport invocations so far for one provider (all attempts).
  std::size_t attempts(const std::string& provider_id) const;

 private:
  struct ProviderState {
    ProviderConfig config;
    std::shared_ptr<Transport> transport;
    std::mutex rate_mu;
    std::chrono::steady_clock::time_point next_slot{};
    std::atomic<std::size_t> attempts{0};
  };

  ProviderState& state(const std::string& provider_id) const;
  void wait_for_slot(ProviderState& st);
  Completion run_completion(ProviderState& st, const Request& request);
  std::string scrub(const std::string& provider_id, std::string message) const;

  GatewayConfig config_;
  std::shared_ptr<AuditLog> audit_;
  std::map<std::string, std::unique_ptr<ProviderState>> providers_;
};

}  // namespace protex::gateway
