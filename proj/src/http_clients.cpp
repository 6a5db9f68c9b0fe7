#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "protex/gateway.hpp"
#include "protex/soe.hpp"

namespace protex::gateway {

struct Target {
  std::string origin;  // scheme://host[:port]
  std::string base_path;
};

Target split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "endpoint needs a scheme: " + endpoint);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  Target t;
  t.origin = endpoint.substr(0, path_start);
  t.base_path = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!t.base_path.empty() && t.base_path.back() == '/') t.base_path.pop_back();
  return t;
}

namespace {

json post_json(const ProviderConfig& cfg, const std::string& route, const json& body) {
  const Target target = split_endpoint(cfg.endpoint);
  httplib::Client client(target.origin);
  client.set_connection_timeout(30);
  client.set_read_timeout(600);
  httplib::Headers headers;
  if (auto key = provider_api_key(cfg.provider_id)) headers.emplace("Authorization", "Bearer " + *key);
  auto res = client.Post(target.base_path + route, headers, body.dump(), "application/json");
  if (!res) throw TransientError(cfg.provider_id + ": transport error: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransientError(cfg.provider_id + ": HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::ProviderError,
                cfg.provider_id + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 400));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception&) {
    throw Error(ErrorCode::ProviderError, cfg.provider_id + ": response is not JSON");
  }
}

}  // namespace

Response HttpTransport::complete(const ProviderConfig& cfg, const Request& request) {
  json content;
  if (request.images.empty()) {
    content = request.prompt;
  } else {
    content = json::array({{{"type", "text"}, {"text", request.prompt}}});
    for (const auto& img : request.images) {
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:image/png;base64," + base64_encode(img.bytes)}}}});
    }
  }
  json body = {{"model", cfg.model_name},
               {"temperature", request.options.temperature.value_or(cfg.temperature)},
               {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  if (request.options.max_output_tokens) body["max_tokens"] = *request.options.max_output_tokens;
  const json reply = post_json(cfg, "/chat/completions", body);
  Response out;
  try {
    out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ProviderError, cfg.provider_id + ": response has no message content");
  }
  if (reply.contains("usage")) {
    const auto& u = reply["usage"];
    out.usage = TokenCounts{u.value("prompt_tokens", std::size_t{0}), u.value("completion_tokens", std::size_t{0})};
  }
  return out;
}

std::vector<EmbeddingVector> HttpTransport::embed(const ProviderConfig& cfg, const std::vector<std::string>& texts) {
  const json reply = post_json(cfg, "/embeddings", {{"model", cfg.model_name}, {"input", texts}});
  std::vector<EmbeddingVector> out(texts.size());
  try {
    for (const auto& item : reply.at("data")) {
      const auto index = item.at("index").get<std::size_t>();
      if (index >= out.size()) throw Error(ErrorCode::ProviderError, cfg.provider_id + ": embedding index out of range");
      out[index].values = item.at("embedding").get<std::vector<double>>();
    }
  } catch (const json::exception&) {
    throw Error(ErrorCode::ProviderError, cfg.provider_id + ": malformed embedding response");
  }
  return out;
}

}  // namespace protex::gateway

namespace protex::soe {

std::vector<TableRegion> HttpDetector::detect(const ingest::PageRecord& page) {
  const auto fail = [&](const std::string& why) -> std::vector<TableRegion> {
    const std::string message = "table detector " + url_ + " failed on page " + std::to_string(page.page_index) + ": " + why;
    if (!fallback_) throw Error(ErrorCode::DetectorUnavailable, message);
    warnings_.push_back(message + "; used layout heuristic");
    return heuristic_.detect(page);
  };
  if (!page.image_ref) return fail("page has no image");
  const auto target = gateway::split_endpoint(url_);
  httplib::Client client(target.origin);
  client.set_connection_timeout(10);
  client.set_read_timeout(120);
  std::string png;
  try {
    png = read_file(*page.image_ref);
  } catch (const Error& e) {
    return fail(e.what());
  }
  auto res = client.Post(target.base_path.empty() ? "/" : target.base_path, png, "image/png");
  if (!res) return fail(httplib::to_string(res.error()));
  if (res->status != 200) return fail("HTTP " + std::to_string(res->status));
  std::vector<TableRegion> regions;
  try {
    const json body = json::parse(res->body);
    for (const auto& item : body) {
      TableRegion r;
      r.page_index = page.page_index;
      r.confidence = item.at("confidence").get<double>();
      r.detector_id = id();
      if (item.contains("bbox") && !item["bbox"].is_null()) r.bbox = item["bbox"].get<std::array<double, 4>>();
      if (r.confidence >= threshold_) regions.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    return fail(std::string("malformed response: ") + e.what());
  }
  return regions;
}

}  // namespace protex::soe
