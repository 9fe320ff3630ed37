#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bonsai/lm.hpp"
#include "bonsai/model.hpp"

namespace bonsai::curation {

// Score assigned when the evaluator fails for a post.
inline constexpr int kFallbackScore = 3;
inline constexpr std::string_view kEvaluationFailed = "evaluation_failed";

// Hash of everything that influences a post's score (description and
// preference prompts). Sources and ranking style do not participate.
std::string config_content_hash(const FeedConfig& config);

// Deterministic: identical inputs produce byte-identical requests.
lm::Request build_curation_prompt(const Post& post, const FeedConfig& config);

struct CurationReport {
  std::map<Bucket, std::size_t> counts;
  std::size_t evaluated = 0;   // provider calls made
  std::size_t cache_hits = 0;
  std::size_t failures = 0;
  bool degraded = false;       // more than half of the provider calls failed
};

struct CurationResult {
  std::vector<CuratedPost> eligible;  // score >= 1, input order
  std::vector<CuratedPost> excluded;  // score == 0, input order
  CurationReport report;
};

// (post uri, config content hash) -> score. Thread-safe.
class CurationCache {
 public:
  struct Value {
    int score = 0;
    std::optional<std::string> rationale;
  };

  CurationCache() = default;
  CurationCache(const CurationCache& other);
  CurationCache& operator=(const CurationCache& other);

  std::optional<Value> get(const std::string& uri, const std::string& config_hash) const;
  void put(const std::string& uri, const std::string& config_hash, Value value);
  // Drops entries whose uri is not in `keep`.
  void retain(const std::vector<std::string>& keep);
  std::size_t size() const;

  Json to_json() const;
  static CurationCache from_json(const Json& j);

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, Value> entries_;
};

class Curator {
 public:
  explicit Curator(std::shared_ptr<lm::Provider> provider, std::size_t max_parallel = 4);

  // Every post is evaluated exactly once (or served from `cache`).
  CurationResult curate(std::span<const Post> posts, const FeedConfig& config,
                        CurationCache* cache = nullptr) const;

 private:
  std::shared_ptr<lm::Provider> provider_;
  std::size_t max_parallel_;
};

void to_json(Json& j, const CurationReport& r);
void from_json(const Json& j, CurationReport& r);

}  // namespace bonsai::curation
