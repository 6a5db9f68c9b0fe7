#include "protex/gateway.hpp"

#include <cmath>
#include <thread>

#include "protex/chunker.hpp"

namespace protex::gateway {

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::chat: return "chat";
    case ProviderKind::multimodal: return "multimodal";
    case ProviderKind::embedding: return "embedding";
  }
  return "chat";
}

ProviderKind parse_provider_kind(std::string_view s) {
  if (s == "chat") return ProviderKind::chat;
  if (s == "multimodal") return ProviderKind::multimodal;
  if (s == "embedding") return ProviderKind::embedding;
  throw Error(ErrorCode::InvalidConfig, "unknown provider kind '" + std::string(s) + "'");
}

std::string ProviderConfig::config_id() const { return provider_id + "/" + model_name; }

void ProviderConfig::validate() const {
  if (provider_id.empty()) throw Error(ErrorCode::InvalidConfig, "provider_id is required");
  if (retry.max_attempts < 1) throw Error(ErrorCode::InvalidConfig, provider_id + ": max_attempts must be >= 1");
  if (retry.backoff_base_ms < 0) throw Error(ErrorCode::InvalidConfig, provider_id + ": backoff must be >= 0");
  if (!(rate_limit_per_min > 0)) throw Error(ErrorCode::InvalidConfig, provider_id + ": rate_limit must be > 0");
  if (batch_limit < 1 || embed_batch_size < 1) throw Error(ErrorCode::InvalidConfig, provider_id + ": batch limits must be >= 1");
  if (!chunking::has_estimator(token_estimator)) {
    throw Error(ErrorCode::InvalidConfig, provider_id + ": unknown token estimator " + token_estimator);
  }
}

json ProviderConfig::to_json() const {
  json j = {{"provider_id", provider_id},
            {"kind", std::string(gateway::to_string(kind))},
            {"model_name", model_name},
            {"endpoint", endpoint},
            {"max_context_tokens", max_context_tokens},
            {"rate_limit_per_min", rate_limit_per_min},
            {"retry", {{"max_attempts", retry.max_attempts}, {"backoff_base_ms", retry.backoff_base_ms}}},
            {"persist_bodies", persist_bodies},
            {"temperature", temperature},
            {"batch_limit", batch_limit},
            {"embed_batch_size", embed_batch_size},
            {"token_estimator", token_estimator}};
  if (is_mock()) {
    j["mock_fail_first"] = mock_fail_first;
    j["embedding_dim"] = embedding_dim;
  }
  return j;
}

ProviderConfig ProviderConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "provider entry must be an object");
  for (const char* secret : {"api_key", "apiKey", "token", "secret"}) {
    if (j.contains(secret)) {
      throw Error(ErrorCode::InvalidConfig,
                  "provider config must not carry secrets; set <PROVIDER_ID>_API_KEY in the environment");
    }
  }
  ProviderConfig c;
  try {
    c.provider_id = j.at("provider_id").get<std::string>();
    c.kind = parse_provider_kind(j.value("kind", "chat"));
    c.model_name = j.value("model_name", "mock");
    c.endpoint = j.value("endpoint", "mock");
    c.max_context_tokens = j.value("max_context_tokens", c.max_context_tokens);
    c.rate_limit_per_min = j.value("rate_limit_per_min", c.rate_limit_per_min);
    if (j.contains("retry")) {
      c.retry.max_attempts = j["retry"].value("max_attempts", c.retry.max_attempts);
      c.retry.backoff_base_ms = j["retry"].value("backoff_base_ms", c.retry.backoff_base_ms);
    }
    c.persist_bodies = j.value("persist_bodies", false);
    c.temperature = j.value("temperature", 0.0);
    c.batch_limit = j.value("batch_limit", c.batch_limit);
    c.embed_batch_size = j.value("embed_batch_size", c.embed_batch_size);
    c.token_estimator = j.value("token_estimator", c.token_estimator);
    if (j.contains("fixtures_dir")) {
      fs::path dir = j["fixtures_dir"].get<std::string>();
      c.fixtures_dir = dir.is_relative() && !base_dir.empty() ? base_dir / dir : dir;
    }
    c.mock_fail_first = j.value("mock_fail_first", 0);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.record_missing = j.value("record_missing", false);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad provider entry: ") + e.what());
  }
  c.validate();
  return c;
}

Image Image::from_bytes(std::string bytes) {
  Image img;
  img.digest = sha256_hex(bytes);
  img.bytes = std::move(bytes);
  return img;
}

Image Image::from_file(const fs::path& path) { return from_bytes(read_file(path)); }

// ---------------------------------------------------------------------------
// Mock transport

std::string MockTransport::fixture_key(const Request& request) {
  if (request.images.empty()) return sha256_hex(request.prompt);
  std::string material = request.prompt;
  for (const auto& img : request.images) material += img.digest;
  return sha256_hex(material);
}

Response MockTransport::complete(const ProviderConfig& cfg, const Request& request) {
  const std::string key = fixture_key(request);
  {
    std::lock_guard lock(mu_);
    int& failed = failures_[key];
    if (failed < cfg.mock_fail_first) {
      ++failed;
      throw TransientError("mock transient failure " + std::to_string(failed) + " for " + key.substr(0, 12));
    }
  }
  const fs::path direct = cfg.fixtures_dir / (key + ".txt");
  if (!cfg.fixtures_dir.empty() && fs::is_regular_file(direct)) return {read_file(direct), std::nullopt};

  const fs::path routes_path = cfg.fixtures_dir / "routes.json";
  if (!cfg.fixtures_dir.empty() && fs::is_regular_file(routes_path)) {
    json routes;
    {
      std::lock_guard lock(mu_);
      auto it = routes_cache_.find(routes_path);
      if (it == routes_cache_.end()) it = routes_cache_.emplace(routes_path, read_json_file(routes_path)).first;
      routes = it->second;
    }
    for (const auto& route : routes) {
      std::vector<std::string> needles;
      if (route.at("contains").is_array()) {
        needles = route["contains"].get<std::vector<std::string>>();
      } else {
        needles.push_back(route["contains"].get<std::string>());
      }
      bool all = !needles.empty();
      for (const auto& n : needles) all = all && request.prompt.find(n) != std::string::npos;
      if (all) return {read_file(cfg.fixtures_dir / route.at("file").get<std::string>()), std::nullopt};
    }
  }
  if (cfg.record_missing && !cfg.fixtures_dir.empty()) {
    write_file_atomic(cfg.fixtures_dir / "missing" / (key + ".prompt.txt"), request.prompt);
  }
  throw Error(ErrorCode::ProviderError, "mock provider " + cfg.provider_id + " has no fixture for " + key);
}

std::vector<EmbeddingVector> MockTransport::embed(const ProviderConfig& cfg, const std::vector<std::string>& texts) {
  {
    std::lock_guard lock(mu_);
    int& failed = failures_["embed:" + sha256_hex(join(texts, "\n"))];
    if (failed < cfg.mock_fail_first) {
      ++failed;
      throw TransientError("mock transient embedding failure");
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embedding(t, cfg.embedding_dim));
  return out;
}

std::optional<std::string> provider_api_key(const std::string& provider_id) {
  const std::string base = env_name(provider_id) + "_API_KEY";
  if (auto key = get_env(base)) return key;
  if (auto file = get_env(base + "_FILE")) {
    std::string contents = read_file(*file);
    return std::string(trim(contents));
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Audit log

json AuditLogEntry::to_json() const {
  json j = {{"timestamp", timestamp},
            {"provider_id", provider_id},
            {"request_hash", request_hash},
            {"response_hash", response_hash},
            {"latency_ms", latency_ms},
            {"token_counts", {{"prompt", token_counts.prompt}, {"completion", token_counts.completion}}},
            {"outcome", outcome},
            {"attempt", attempt}};
  if (!error_code.empty()) j["error_code"] = error_code;
  if (request_body) j["request_body"] = *request_body;
  if (response_body) j["response_body"] = *response_body;
  return j;
}

AuditLog::AuditLog(std::optional<fs::path> path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {}

void AuditLog::append(AuditLogEntry entry) {
  std::lock_guard lock(mu_);
  if (entry.timestamp.empty()) entry.timestamp = clock_.now_iso8601();
  if (path_) append_line(*path_, entry.to_json().dump());
  entries_.push_back(std::move(entry));
}

std::vector<AuditLogEntry> AuditLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Config

GatewayConfig GatewayConfig::from_json(const json& j, const fs::path& base_dir) {
  GatewayConfig cfg;
  if (!j.is_object() || !j.contains("providers") || !j["providers"].is_array()) {
    throw Error(ErrorCode::InvalidConfig, "gateway config requires a providers list");
  }
  for (const auto& p : j["providers"]) cfg.providers.push_back(ProviderConfig::from_json(p, base_dir));
  if (j.contains("roles")) cfg.roles = j["roles"].get<std::map<std::string, std::string>>();
  for (const auto& [role, id] : cfg.roles) {
    bool found = false;
    for (const auto& p : cfg.providers) found = found || p.provider_id == id;
    if (!found) throw Error(ErrorCode::InvalidConfig, "role " + role + " names unknown provider " + id);
  }
  return cfg;
}

GatewayConfig GatewayConfig::load(const fs::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

GatewayConfig GatewayConfig::mock(const fs::path& fixtures_dir) {
  GatewayConfig cfg;
  const auto add = [&](std::string id, ProviderKind kind, std::size_t ctx) {
    ProviderConfig p;
    p.provider_id = id;
    p.kind = kind;
    p.model_name = "mock";
    p.endpoint = "mock";
    p.max_context_tokens = ctx;
    p.rate_limit_per_min = 6.0e6;
    p.retry.backoff_base_ms = 0;
    p.fixtures_dir = fixtures_dir;
    cfg.providers.push_back(std::move(p));
  };
  add("mock-generation", ProviderKind::chat, 200000);
  add("mock-vision", ProviderKind::multimodal, 200000);
  add("mock-embedding", ProviderKind::embedding, 512);
  add("mock-judge", ProviderKind::chat, 200000);
  add("mock-adjudicator", ProviderKind::chat, 400000);
  cfg.roles = {{"generation", "mock-generation"},
               {"multimodal", "mock-vision"},
               {"embedding", "mock-embedding"},
               {"judge", "mock-judge"},
               {"adjudicator", "mock-adjudicator"}};
  return cfg;
}

json GatewayConfig::to_json() const {
  json providers_json = json::array();
  for (const auto& p : providers) providers_json.push_back(p.to_json());
  return {{"providers", providers_json}, {"roles", roles}};
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(GatewayConfig config, std::shared_ptr<AuditLog> audit)
    : config_(std::move(config)), audit_(audit ? std::move(audit) : std::make_shared<AuditLog>()) {
  auto mock = std::make_shared<MockTransport>();
  auto http = std::make_shared<HttpTransport>();
  for (const auto& p : config_.providers) {
    p.validate();
    auto st = std::make_unique<ProviderState>();
    st->config = p;
    st->transport = p.is_mock() ? std::shared_ptr<Transport>(mock) : std::shared_ptr<Transport>(http);
    if (!providers_.emplace(p.provider_id, std::move(st)).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate provider_id " + p.provider_id);
    }
  }
}

Gateway::ProviderState& Gateway::state(const std::string& provider_id) const {
  const auto it = providers_.find(provider_id);
  if (it == providers_.end()) throw Error(ErrorCode::InvalidConfig, "unknown provider " + provider_id);
  return *it->second;
}

const ProviderConfig& Gateway::provider(const std::string& provider_id) const { return state(provider_id).config; }

const std::string& Gateway::role(const std::string& role_name) const {
  const auto it = config_.roles.find(role_name);
  if (it == config_.roles.end()) throw Error(ErrorCode::InvalidConfig, "no provider bound to role " + role_name);
  return it->second;
}

void Gateway::set_transport(const std::string& provider_id, std::shared_ptr<Transport> transport) {
  state(provider_id).transport = std::move(transport);
}

std::size_t Gateway::attempts(const std::string& provider_id) const { return state(provider_id).attempts.load(); }

void Gateway::wait_for_slot(ProviderState& st) {
  using namespace std::chrono;
  const auto interval = duration_cast<steady_clock::duration>(duration<double, std::milli>(60000.0 / st.config.rate_limit_per_min));
  steady_clock::time_point slot;
  {
    std::lock_guard lock(st.rate_mu);
    const auto now = steady_clock::now();
    slot = std::max(now, st.next_slot);
    st.next_slot = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

std::string Gateway::scrub(const std::string& provider_id, std::string message) const {
  if (auto key = provider_api_key(provider_id); key && !key->empty()) replace_all(message, *key, "***");
  return message;
}

namespace {

std::string request_material(const ProviderConfig& cfg, const Request& r) {
  json j = {{"provider_id", cfg.provider_id}, {"model", cfg.model_name}, {"prompt", r.prompt}};
  json images = json::array();
  for (const auto& img : r.images) images.push_back(img.digest);
  j["images"] = images;
  if (r.options.temperature) j["temperature"] = *r.options.temperature;
  if (r.options.max_output_tokens) j["max_output_tokens"] = *r.options.max_output_tokens;
  return j.dump();
}

}  // namespace

Completion Gateway::run_completion(ProviderState& st, const Request& request) {
  const ProviderConfig& cfg = st.config;
  const std::size_t prompt_tokens = chunking::estimate_tokens(request.prompt, cfg.token_estimator);
  if (prompt_tokens > cfg.max_context_tokens) {
    throw Error(ErrorCode::ContextLimitExceeded,
                cfg.provider_id + ": prompt estimate " + std::to_string(prompt_tokens) + " exceeds " +
                    std::to_string(cfg.max_context_tokens) + " tokens");
  }
  const std::string material = request_material(cfg, request);
  const std::string request_hash = sha256_hex(material);

  for (int attempt = 1;; ++attempt) {
    wait_for_slot(st);
    ++st.attempts;
    const auto started = std::chrono::steady_clock::now();
    AuditLogEntry entry;
    entry.provider_id = cfg.provider_id;
    entry.request_hash = request_hash;
    entry.attempt = attempt;
    if (cfg.persist_bodies) entry.request_body = material;
    const auto elapsed = [&] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    };
    try {
      Response resp = st.transport->complete(cfg, request);
      TokenCounts counts = resp.usage.value_or(
          TokenCounts{prompt_tokens, chunking::estimate_tokens(resp.text, cfg.token_estimator)});
      entry.latency_ms = elapsed();
      entry.response_hash = sha256_hex(resp.text);
      entry.token_counts = counts;
      entry.outcome = attempt == 1 ? "ok" : "retried(" + std::to_string(attempt - 1) + ")";
      if (cfg.persist_bodies) entry.response_body = resp.text;
      audit_->append(entry);
      return Completion{std::move(resp.text), counts, attempt, entry.outcome};
    } catch (const TransientError& e) {
      entry.latency_ms = elapsed();
      entry.outcome = "failed";
      entry.error_code = "transient";
      entry.token_counts.prompt = prompt_tokens;
      audit_->append(entry);
      if (attempt >= cfg.retry.max_attempts) {
        throw Error(ErrorCode::ProviderError,
                    scrub(cfg.provider_id, cfg.provider_id + ": giving up after " + std::to_string(attempt) +
                                               " attempts: " + e.what()));
      }
      const double backoff = cfg.retry.backoff_base_ms * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
    } catch (const Error& e) {
      entry.latency_ms = elapsed();
      entry.outcome = "failed";
      entry.error_code = std::string(protex::to_string(e.code()));
      entry.token_counts.prompt = prompt_tokens;
      audit_->append(entry);
      throw Error(e.code(), scrub(cfg.provider_id, e.what()));
    }
  }
}

Completion Gateway::complete(const std::string& provider_id, const std::string& prompt,
                             const CompletionOptions& options) {
  auto& st = state(provider_id);
  if (st.config.kind == ProviderKind::embedding) {
    throw Error(ErrorCode::InvalidConfig, provider_id + " is an embedding provider");
  }
  return run_completion(st, Request{prompt, {}, options});
}

Completion Gateway::complete_multimodal(const std::string& provider_id, const std::string& prompt,
                                        const std::vector<Image>& images, const CompletionOptions& options) {
  auto& st = state(provider_id);
  if (st.config.kind != ProviderKind::multimodal) {
    throw Error(ErrorCode::InvalidConfig, provider_id + " is not a multimodal provider");
  }
  if (images.empty()) throw Error(ErrorCode::InvalidArgument, "multimodal request requires at least one image");
  if (images.size() > st.config.batch_limit) {
    throw Error(ErrorCode::BatchLimitExceeded, std::to_string(images.size()) + " images exceed batch limit " +
                                                   std::to_string(st.config.batch_limit));
  }
  return run_completion(st, Request{prompt, images, options});
}

std::vector<EmbeddingVector> Gateway::embed(const std::string& provider_id, const std::vector<std::string>& texts) {
  auto& st = state(provider_id);
  const ProviderConfig& cfg = st.config;
  if (cfg.kind != ProviderKind::embedding) {
    throw Error(ErrorCode::InvalidConfig, provider_id + " is not an embedding provider");
  }
  std::vector<std::size_t> token_counts(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    token_counts[i] = chunking::estimate_tokens(texts[i], cfg.token_estimator);
    if (token_counts[i] > cfg.max_context_tokens) {
      throw BatchItemError(ErrorCode::ContextLimitExceeded, i,
                           "text " + std::to_string(i) + " estimate " + std::to_string(token_counts[i]) +
                               " exceeds embedding window " + std::to_string(cfg.max_context_tokens));
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t begin = 0; begin < texts.size(); begin += cfg.embed_batch_size) {
    const std::size_t end = std::min(texts.size(), begin + cfg.embed_batch_size);
    const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(begin),
                                         texts.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t batch_tokens = 0;
    for (std::size_t i = begin; i < end; ++i) batch_tokens += token_counts[i];
    json material = {{"provider_id", cfg.provider_id}, {"model", cfg.model_name}, {"input", batch}};
    const std::string request_hash = sha256_hex(material.dump());

    for (int attempt = 1;; ++attempt) {
      wait_for_slot(st);
      ++st.attempts;
      const auto started = std::chrono::steady_clock::now();
      AuditLogEntry entry;
      entry.provider_id = cfg.provider_id;
      entry.request_hash = request_hash;
      entry.attempt = attempt;
      entry.token_counts.prompt = batch_tokens;
      if (cfg.persist_bodies) entry.request_body = material.dump();
      try {
        auto vectors = st.transport->embed(cfg, batch);
        if (vectors.size() != batch.size()) {
          throw Error(ErrorCode::ProviderError, provider_id + ": embedding count mismatch");
        }
        json dumped = json::array();
        for (const auto& v : vectors) dumped.push_back(v.values);
        entry.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
        entry.response_hash = sha256_hex(dumped.dump());
        entry.outcome = attempt == 1 ? "ok" : "retried(" + std::to_string(attempt - 1) + ")";
        audit_->append(entry);
        for (auto& v : vectors) out.push_back(std::move(v));
        break;
      } catch (const TransientError& e) {
        entry.outcome = "failed";
        entry.error_code = "transient";
        audit_->append(entry);
        if (attempt >= cfg.retry.max_attempts) {
          throw Error(ErrorCode::ProviderError, scrub(provider_id, provider_id + ": giving up after " +
                                                                       std::to_string(attempt) + " attempts: " + e.what()));
        }
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(cfg.retry.backoff_base_ms * std::pow(2.0, attempt - 1)));
      } catch (const Error& e) {
        entry.outcome = "failed";
        entry.error_code = std::string(protex::to_string(e.code()));
        audit_->append(entry);
        throw Error(e.code(), scrub(provider_id, e.what()));
      }
    }
  }
  return out;
}

}  // namespace protex::gateway
