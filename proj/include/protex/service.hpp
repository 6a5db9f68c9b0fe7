#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "protex/chunker.hpp"
#include "protex/error.hpp"
#include "protex/extraction.hpp"
#include "protex/schema.hpp"

namespace protex::service {

enum class ReviewAction { approve, edit };

std::string_view to_string(ReviewAction a);
/// Throws InvalidArgument.
ReviewAction parse_review_action(std::string_view s);

struct ReviewDecisionRecord {
  std::string element_id;
  std::string run_id;
  std::string reviewer_id;
  ReviewAction action = ReviewAction::approve;
  std::optional<json> edited_value;
  std::string timestamp;
  std::string note;

  json to_json() const;
  static ReviewDecisionRecord from_json(const json& j);
};

/// "approved", "edited" or "unreviewed".
std::string review_status(const ReviewDecisionRecord* latest);

/// Run directories under one root plus their append-only `reviews.jsonl`.
class RunStore {
 public:
  RunStore(fs::path runs_root, const schema::Registry& registry, Clock clock = {});

  const fs::path& root() const { return root_; }
  std::vector<std::string> run_ids() const;
  /// Throws UnknownRun.
  extraction::ExtractionRun load(const std::string& run_id) const;
  json summary(const std::string& run_id) const;

  std::vector<ReviewDecisionRecord> reviews(const std::string& run_id) const;
  /// Latest decision per element, rebuilt by replaying the log.
  std::map<std::string, ReviewDecisionRecord> latest_decisions(const std::string& run_id) const;

  /// Appends one decision. Throws UnknownRun, UnknownElement,
  /// InvalidArgument (edit without value) and ValidationFailed (edit value
  /// rejected by the element schema); the log is untouched on error.
  ReviewDecisionRecord record_review(const std::string& run_id, const std::string& element_id,
                                     const std::string& reviewer_id, ReviewAction action,
                                     std::optional<json> edited_value, const std::string& note = {});

  /// Element result plus review state and schema.
  json element_view(const std::string& run_id, const std::string& element_id) const;
  json elements_view(const std::string& run_id) const;

  /// Final values (edited value wins), provenance and review metadata.
  json export_json(const std::string& run_id) const;
  /// CSV, one row per element: element_id, category, value, status, reviewer.
  std::string export_table(const std::string& run_id) const;

  /// Chunk from any run of the document. Throws NotFound.
  chunking::Chunk find_chunk(const std::string& doc_id, const std::string& chunk_id) const;
  /// Rendered page image from the package recorded by a run of the
  /// document. Throws NotFound.
  fs::path page_image(const std::string& doc_id, int page_index) const;

 private:
  fs::path run_dir(const std::string& run_id) const;
  fs::path review_log(const std::string& run_id) const { return run_dir(run_id) / "reviews.jsonl"; }
  json element_json(const ExtractionResult& r, const ReviewDecisionRecord* latest, bool with_schema) const;

  fs::path root_;
  const schema::Registry& registry_;
  Clock clock_;
  mutable std::mutex write_mu_;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Maps ErrorCode to an HTTP status.
int http_status(ErrorCode code);

/// Routing and handlers, independent of the HTTP library.
class Api {
 public:
  /// Empty token disables authentication.
  Api(RunStore& store, std::string bearer_token);

  ApiResponse handle(const ApiRequest& req) const;

 private:
  ApiResponse route(const ApiRequest& req) const;

  RunStore& store_;
  std::string token_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string bearer_token;
};

/// HTTP front end for Api.
class Server {
 public:
  Server(RunStore& store, ServeOptions options);
  ~Server();

  /// Binds the socket; returns the port. Throws StorageError when binding
  /// fails.
  int bind();
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace protex::service
