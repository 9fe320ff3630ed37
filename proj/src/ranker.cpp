#include "bonsai/ranker.hpp"

#include <algorithm>
#include <numeric>

#include "bonsai/error.hpp"

namespace bonsai::ranking {

std::int64_t engagement_score(const Post& post) {
  return post.likes + 3 * post.reposts + 2 * post.replies;
}

namespace {

// Newer first, then uri ascending.
bool tie_break_less(Timestamp a_time, const std::string& a_key, Timestamp b_time,
                    const std::string& b_key) {
  if (a_time != b_time) return a_time > b_time;
  return a_key < b_key;
}

__int128 gcd128(__int128 a, __int128 b) {
  while (b != 0) {
    __int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace

std::unordered_map<std::string, std::size_t> assign_ranks(std::span<const RankItem> items,
                                                          bool descending) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = items[a];
    const auto& y = items[b];
    if (x.value != y.value) return descending ? x.value > y.value : x.value < y.value;
    return tie_break_less(x.created_at, x.key, y.created_at, y.key);
  });

  std::unordered_map<std::string, std::size_t> ranks;
  ranks.reserve(items.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (!ranks.emplace(items[order[pos]].key, pos + 1).second) {
      throw Error(ErrorCode::kDomain, "duplicate rank key '" + items[order[pos]].key + "'");
    }
  }
  return ranks;
}

std::vector<RankedEntry> rank_feed(std::span<const Post> candidates,
                                   std::span<const CuratedPost> eligible,
                                   const RankingWeights& weights) {
  if (!weights.valid()) {
    throw Error(ErrorCode::kDomain, "ranking weights must lie in [0,1] and sum to 1");
  }
  if (eligible.empty()) return {};

  std::vector<RankItem> recency_items;
  std::vector<RankItem> engagement_items;
  recency_items.reserve(candidates.size());
  engagement_items.reserve(candidates.size());
  for (const auto& p : candidates) {
    recency_items.push_back({p.uri, p.created_at.time_since_epoch().count(), p.created_at});
    engagement_items.push_back({p.uri, engagement_score(p), p.created_at});
  }
  auto recency = assign_ranks(recency_items, /*descending=*/true);
  auto engagement = assign_ranks(engagement_items, /*descending=*/true);

  std::vector<RankItem> relevance_items;
  relevance_items.reserve(eligible.size());
  for (const auto& cp : eligible) {
    if (cp.score <= 0) {
      throw Error(ErrorCode::kDomain, "excluded post '" + cp.post.uri + "' passed as eligible");
    }
    if (!recency.contains(cp.post.uri)) {
      throw Error(ErrorCode::kDomain, "eligible post '" + cp.post.uri + "' not in candidates");
    }
    relevance_items.push_back({cp.post.uri, cp.score, cp.post.created_at});
  }
  auto relevance = assign_ranks(relevance_items, /*descending=*/true);

  // Weighted sums over a common denominator keep the comparison exact.
  __int128 den = 1;
  for (const auto* w : {&weights.relevance, &weights.popularity, &weights.recency}) {
    den = den / gcd128(den, w->den()) * w->den();
  }
  auto scaled = [&](const Rational& w) { return static_cast<__int128>(w.num()) * (den / w.den()); };
  const __int128 wr = scaled(weights.relevance);
  const __int128 wp = scaled(weights.popularity);
  const __int128 wc = scaled(weights.recency);

  struct Scored {
    const CuratedPost* post;
    RankTriple ranks;
    __int128 numerator;
  };
  std::vector<Scored> scored;
  scored.reserve(eligible.size());
  for (const auto& cp : eligible) {
    RankTriple t;
    t.relevance = relevance.at(cp.post.uri);
    t.recency = recency.at(cp.post.uri);
    t.engagement = engagement.at(cp.post.uri);
    __int128 num = wr * static_cast<__int128>(t.relevance) +
                   wp * static_cast<__int128>(t.engagement) +
                   wc * static_cast<__int128>(t.recency);
    t.borda_score = static_cast<double>(num) / static_cast<double>(den);
    scored.push_back({&cp, t, num});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.numerator != b.numerator) return a.numerator < b.numerator;
    return tie_break_less(a.post->post.created_at, a.post->post.uri, b.post->post.created_at,
                          b.post->post.uri);
  });

  std::vector<RankedEntry> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back({s.post->post.uri, s.ranks});
  return out;
}

void to_json(Json& j, const RankTriple& t) {
  j = Json{{"r_relevance", t.relevance},
           {"r_recency", t.recency},
           {"r_engagement", t.engagement},
           {"borda_score", t.borda_score}};
}

void from_json(const Json& j, RankTriple& t) {
  t.relevance = j.value("r_relevance", std::size_t{0});
  t.recency = j.value("r_recency", std::size_t{0});
  t.engagement = j.value("r_engagement", std::size_t{0});
  t.borda_score = j.value("borda_score", 0.0);
}

void to_json(Json& j, const RankedEntry& e) { j = Json{{"uri", e.uri}, {"ranks", e.ranks}}; }

}  // namespace bonsai::ranking
