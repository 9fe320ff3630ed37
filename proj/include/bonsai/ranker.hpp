#pragma once

// Weighted Borda Count over relevance, recency and engagement rankings.
//
// Relevance ranks cover the eligible posts only; recency and engagement ranks
// cover every candidate (eligible and excluded), so an excluded post still
// occupies a position in those two rankings. The final order is ascending by
// weighted rank sum: lower is better.
//
// Every ranking and the final order break ties the same way: newer
// created_at first, then uri ascending. Ranks are positional (1..n, never
// shared).

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bonsai/model.hpp"

namespace bonsai::ranking {

// likes + 3 * reposts + 2 * replies
std::int64_t engagement_score(const Post& post);

struct RankItem {
  std::string key;
  std::int64_t value = 0;
  Timestamp created_at{};
};

// Positional ranks after a stable sort by value (descending when requested)
// with the global tie-break applied inside equal-value groups. Keys must be
// unique.
std::unordered_map<std::string, std::size_t> assign_ranks(std::span<const RankItem> items,
                                                          bool descending);

struct RankTriple {
  std::size_t relevance = 0;
  std::size_t recency = 0;
  std::size_t engagement = 0;
  double borda_score = 0.0;
};

struct RankedEntry {
  std::string uri;
  RankTriple ranks;
};

// Throws Error(kDomain) if the weights do not sum to 1, if an eligible post
// is missing from `candidates`, or if an eligible post carries score 0.
std::vector<RankedEntry> rank_feed(std::span<const Post> candidates,
                                   std::span<const CuratedPost> eligible,
                                   const RankingWeights& weights);

void to_json(Json& j, const RankTriple& t);
void from_json(const Json& j, RankTriple& t);
void to_json(Json& j, const RankedEntry& e);

}  // namespace bonsai::ranking
