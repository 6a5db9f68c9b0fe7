#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "protex/extraction.hpp"
#include "protex/gateway.hpp"
#include "protex/schema.hpp"

namespace protex::adjudication {

struct AnnotationCandidate {
  std::string element_id;
  std::optional<json> value;  // nullopt: the source left the element blank
  std::string source_label;   // never shown to the adjudicator
};

struct AdjudicationRecord {
  std::string doc_id;
  std::string element_id;
  json final_value;
  /// Candidate label picked by the adjudicator, or "merged".
  std::string choice;
  std::string justification;
  int confidence = 0;
  /// candidate_order[k] = index of the candidate shown in position k.
  std::vector<std::size_t> candidate_order;
  std::string adjudicator_config_id;
  bool windowed = false;

  /// "<doc_id>/<element_id>", or the element id alone without a doc id.
  std::string key() const;
  json to_json() const;
  static AdjudicationRecord from_json(const json& j);
};

/// Uniform integer in [0, bound) by rejection sampling; identical on every
/// platform for a given engine state.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

/// Fisher-Yates permutation of 0..n-1 driven by mt19937_64(seed).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Display label of the k-th shown candidate: "A", "B", ...
std::string candidate_label(std::size_t position);

struct AdjudicateOptions {
  std::string provider_id;
  std::string doc_id;
  std::uint64_t seed = 0;
  /// Total attempts including the corrective one.
  int attempts = 2;
  /// Substitute context when the full text does not fit the adjudicator.
  std::function<std::string(const schema::ElementSpec&)> window;
};

/// Shuffles the candidates with a permutation seeded by (seed, element id)
/// and asks the adjudicator for a final value and a 0-100 confidence.
/// Throws ParseFailure when the reply stays invalid, ContextLimitExceeded
/// when the text does not fit and no window is available.
AdjudicationRecord adjudicate_element(const std::string& protocol_text, const schema::ElementSpec& spec,
                                      const std::vector<AnnotationCandidate>& candidates,
                                      const schema::Registry& registry, gateway::Gateway& gw,
                                      const AdjudicateOptions& options);

/// Text of the `k` chunks most similar to the element's retrieval queries,
/// in document order.
std::string retrieval_window(const extraction::DocumentIndex& doc, retrieval::Embedder& embedder,
                             const schema::ElementSpec& spec, int k = 20);

/// Keys of the n lowest-confidence records; ties go to the smaller key.
/// Throws NTooLarge.
std::vector<std::string> select_low_confidence(const std::vector<AdjudicationRecord>& records, std::size_t n);

/// Uniform sample without replacement of record keys outside `exclude`.
/// Throws NTooLarge.
std::vector<std::string> sample_random_qc(const std::vector<AdjudicationRecord>& records,
                                          const std::vector<std::string>& exclude, std::size_t n, std::uint64_t seed);

enum class ReviewReason { low_confidence, random_qc };

std::string_view to_string(ReviewReason r);
ReviewReason parse_review_reason(std::string_view s);

struct ReviewDecision {
  bool confirmed = true;
  std::optional<json> override_value;
  std::string timestamp;
  std::string note;
};

struct ReviewAssignment {
  std::string item;  // record key
  std::string reviewer_id;
  ReviewReason reason = ReviewReason::low_confidence;
  std::optional<ReviewDecision> decision;

  json to_json() const;
};

/// Low-confidence items alternate between the two reviewers in sorted key
/// order; random QC items go to both.
std::vector<ReviewAssignment> plan_reviews(std::vector<std::string> low_confidence,
                                           const std::vector<std::string>& random_qc,
                                           const std::vector<std::string>& reviewers);

struct BucketReport {
  std::size_t assigned = 0;  // items
  std::size_t decided = 0;   // items whose every assignment is decided
  std::size_t pending = 0;
  std::size_t confirmed = 0;  // decided items confirmed by every reviewer
  std::size_t overridden = 0;

  /// confirmed / (confirmed + overridden) in percent; 0 when nothing is decided.
  double concordance_percent() const;
  json to_json() const;
};

struct ConcordanceReport {
  BucketReport low_confidence;
  BucketReport random_qc;

  json to_json() const;
};

ConcordanceReport concordance(const std::vector<ReviewAssignment>& assignments);

/// Append-only JSON-lines review log. State is rebuilt by replaying the
/// file on open.
class ReviewLog {
 public:
  explicit ReviewLog(fs::path path, Clock clock = {});

  const std::vector<ReviewAssignment>& assignments() const { return assignments_; }
  /// Adds assignments not already present.
  void assign(const std::vector<ReviewAssignment>& plan);
  /// Throws NotFound for an unknown assignment and AlreadyDecided for a
  /// decided one.
  const ReviewAssignment& decide(const std::string& item, const std::string& reviewer_id, ReviewDecision decision);
  ConcordanceReport report() const { return concordance(assignments_); }
  /// Open assignments, optionally for one reviewer.
  std::vector<ReviewAssignment> queue(const std::string& reviewer_id = {}) const;

 private:
  void apply(const json& event);
  ReviewAssignment* find(const std::string& item, const std::string& reviewer_id);

  fs::path path_;
  Clock clock_;
  mutable std::mutex mu_;
  std::vector<ReviewAssignment> assignments_;
};

/// Candidates for every element found in at least one of `source_dirs`
/// (`<dir>/<element_id>.json`); sources lacking the file contribute a blank
/// candidate. Labels are the directory names.
std::map<std::string, std::vector<AnnotationCandidate>> load_candidates(const std::vector<fs::path>& source_dirs,
                                                                        const schema::Registry& registry);

}  // namespace protex::adjudication
