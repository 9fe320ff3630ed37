#include "bonsai/pipeline.hpp"

#include <unordered_map>

#include "bonsai/error.hpp"
#include "bonsai/util.hpp"

namespace bonsai::pipeline {

RunResult run(const FeedConfig& config, const RankingWeights& weights, Timestamp now,
              std::shared_ptr<sourcing::PlatformAdapter> adapter,
              std::shared_ptr<lm::Provider> provider, const RunOptions& options) {
  if (auto violations = validate_config(config); !violations.empty()) {
    std::string msg;
    for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v.code + " at " + v.path;
    throw Error(ErrorCode::kValidation, msg);
  }
  if (!weights.valid()) throw Error(ErrorCode::kDomain, "weights must be in [0,1] and sum to 1");

  sourcing::Sourcer sourcer(std::move(adapter), options.sourcer);
  auto fetched = sourcer.initial_fetch(config, now);

  curation::Curator curator(std::move(provider), options.curation_parallelism);
  auto curated = curator.curate(fetched.posts, config);
  auto ranked = ranking::rank_feed(fetched.posts, curated.eligible, weights);

  RunResult out;
  out.fetch_report = std::move(fetched.report);
  out.curation_report = curated.report;
  out.weights = weights;
  out.fetched = fetched.posts.size();
  out.eligible = curated.eligible.size();
  out.excluded = curated.excluded.size();
  for (const auto& cp : curated.excluded) out.excluded_uris.push_back(cp.post.uri);

  std::unordered_map<std::string, const CuratedPost*> by_uri;
  for (const auto& cp : curated.eligible) by_uri.emplace(cp.post.uri, &cp);
  out.ranked.reserve(ranked.size());
  for (const auto& r : ranked) {
    const auto* cp = by_uri.at(r.uri);
    out.ranked.push_back({r.uri, cp->score, cp->bucket, cp->post.fetched_via, r.ranks});
  }
  return out;
}

RankingWeights parse_weights(std::string_view text, const PresetTable& presets) {
  auto trimmed = util::trim(text);
  if (auto preset = parse_enum<RankingPreset>(util::to_lower(trimmed));
      preset && *preset != RankingPreset::kCustom) {
    return presets.get(*preset);
  }
  auto parts = util::split(trimmed, ',');
  if (parts.size() != 3) {
    throw Error(ErrorCode::kDomain,
                "weights must be a preset name or three comma-separated numbers w_r,w_p,w_c");
  }
  RankingWeights w{Rational::parse(util::trim(parts[0])), Rational::parse(util::trim(parts[1])),
                   Rational::parse(util::trim(parts[2]))};
  if (!w.valid()) {
    throw Error(ErrorCode::kDomain, "weights must each be in [0,1] and sum to exactly 1, got " +
                                        std::string(trimmed));
  }
  return w;
}

void to_json(Json& j, const RankedPost& p) {
  j = Json{{"uri", p.uri}, {"score", p.score}, {"bucket", p.bucket}, {"ranks", p.ranks}};
  j["fetched_via"] = p.fetched_via ? Json(*p.fetched_via) : Json();
}

void to_json(Json& j, const RunResult& r) {
  j = Json{{"counts", {{"fetched", r.fetched},
                       {"eligible", r.eligible},
                       {"excluded", r.excluded},
                       {"ranked", r.ranked.size()}}},
           {"weights", r.weights},
           {"entries", r.ranked},
           {"excluded_uris", r.excluded_uris},
           {"fetch_report", r.fetch_report},
           {"curation_report", r.curation_report}};
}

}  // namespace bonsai::pipeline
