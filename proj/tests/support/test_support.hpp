#pragma once

// Helpers shared by the unit and acceptance tests.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "borda_oracle.hpp"
#include "bonsai/lm.hpp"
#include "bonsai/model.hpp"
#include "bonsai/ranker.hpp"
#include "bonsai/util.hpp"

namespace testsupport {

using bonsai::Json;
using bonsai::Post;
using bonsai::Timestamp;

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(BONSAI_FIXTURES_DIR) / name;
}

// Reference "now" used by every fixture file.
inline Timestamp fixture_now() { return bonsai::parse_rfc3339("2025-06-01T12:00:00Z"); }

inline Timestamp at_ms(std::int64_t ms) { return Timestamp(std::chrono::milliseconds(ms)); }

inline Post make_post(std::string uri, Timestamp created, std::int64_t likes = 0,
                      std::int64_t reposts = 0, std::int64_t replies = 0, std::string text = "") {
  Post p;
  p.uri = std::move(uri);
  p.author = "author.test";
  p.text = std::move(text);
  p.created_at = created;
  p.likes = likes;
  p.reposts = reposts;
  p.replies = replies;
  return p;
}

inline bonsai::CuratedPost curated(const Post& p, int score) {
  bonsai::CuratedPost c;
  c.post = p;
  c.score = score;
  c.bucket = bonsai::bucket_for_score(score);
  return c;
}

// Directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() / ("bonsai-test-" + bonsai::util::random_token(8));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Random ranking instance: posts with small value ranges so that ties in
// time, engagement and relevance occur often.
struct Instance {
  std::vector<Post> candidates;
  std::vector<bonsai::CuratedPost> eligible;
  std::vector<oracle::Item> items;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t max_size) {
  std::uniform_int_distribution<std::size_t> size_dist(1, max_size);
  std::uniform_int_distribution<int> small(0, 3);
  std::uniform_int_distribution<int> score_dist(0, 10);
  std::uniform_int_distribution<int> time_dist(0, 4);
  Instance inst;
  auto n = size_dist(rng);
  // Uris drawn from a shuffled pool so that uri order and input order differ.
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  std::shuffle(ids.begin(), ids.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    auto uri = "at://did:plc:x/app.bsky.feed.post/" + std::string(1, static_cast<char>('a' + ids[i]));
    auto created = at_ms(1'700'000'000'000 + 60'000LL * time_dist(rng));
    auto p = make_post(uri, created, small(rng), small(rng), small(rng));
    int score = score_dist(rng) < 3 ? 0 : score_dist(rng);  // about a third excluded
    inst.candidates.push_back(p);
    if (score > 0) inst.eligible.push_back(curated(p, score));
    inst.items.push_back({p.uri, created.time_since_epoch().count(), p.likes, p.reposts,
                          p.replies, score});
  }
  return inst;
}

// Every (a, b, c) in tenths with a + b + c = 10.
inline std::vector<std::array<int, 3>> simplex_tenths() {
  std::vector<std::array<int, 3>> out;
  for (int a = 0; a <= 10; ++a)
    for (int b = 0; a + b <= 10; ++b) out.push_back({a, b, 10 - a - b});
  return out;
}

inline bonsai::RankingWeights tenths(const std::array<int, 3>& w) {
  return {bonsai::Rational(w[0], 10), bonsai::Rational(w[1], 10), bonsai::Rational(w[2], 10)};
}

// Compares rank_feed output with the oracle. Returns an empty string on
// agreement, otherwise a description of the first difference.
inline std::string compare_with_oracle(const Instance& inst, const std::array<int, 3>& w) {
  auto got = bonsai::ranking::rank_feed(inst.candidates, inst.eligible, tenths(w));
  auto want = oracle::rank(inst.items, w[0], w[1], w[2]);
  if (got.size() != want.size()) {
    return "size " + std::to_string(got.size()) + " vs " + std::to_string(want.size());
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    const auto& g = got[i];
    const auto& o = want[i];
    if (g.uri != o.uri) return "position " + std::to_string(i) + ": " + g.uri + " vs " + o.uri;
    if (g.ranks.relevance != static_cast<std::size_t>(o.relevance_rank) ||
        g.ranks.recency != static_cast<std::size_t>(o.recency_rank) ||
        g.ranks.engagement != static_cast<std::size_t>(o.engagement_rank)) {
      return "rank triple differs for " + g.uri;
    }
    // Both sides are correctly rounded quotients of the same rational.
    if (g.ranks.borda_score != static_cast<double>(o.scaled_score) / 10.0) {
      return "score differs for " + g.uri;
    }
  }
  return {};
}

// Mock provider that records the peak number of concurrent calls.
class CountingProvider : public bonsai::lm::MockProvider {
 public:
  using MockProvider::MockProvider;
  std::atomic<int> current{0};
  std::atomic<int> peak{0};
  std::atomic<int> calls{0};

 protected:
  Json generate(const bonsai::lm::Request& request,
                const bonsai::lm::RepairContext* repair) override {
    int now = ++current;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    ++calls;
    auto out = MockProvider::generate(request, repair);
    --current;
    return out;
  }
};

}  // namespace testsupport
