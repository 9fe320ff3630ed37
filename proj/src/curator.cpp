#include "bonsai/curator.hpp"

#include <atomic>
#include <thread>
#include <unordered_set>

#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/util.hpp"

namespace bonsai::curation {

namespace {

constexpr std::string_view kCurateSystemPrompt =
    "You curate posts for a personal social media feed. Score the post against the user's "
    "preferences on a 0-10 scale: 8-10 strongly prefer, 5-7 prefer, 3-4 unspecified, "
    "1-2 show less often, 0 never show. A post that matches a prompt with strength "
    "\"never_shown\" must score 0 regardless of any other match. Otherwise weigh the strengths "
    "of every matching prompt. Consider the text and any media descriptions. Reply with one JSON "
    "object {\"include\": bool, \"score\": int, \"rationale\": string} where include is true "
    "exactly when score > 0.";

constexpr std::string_view kNoPreferencesNote =
    " No preferences are configured for this feed: score every post 3 or 4.";

Json prompt_list(const std::vector<PreferencePrompt>& prompts) {
  Json out = Json::array();
  for (const auto& p : prompts) {
    out.push_back({{"prompt_id", p.prompt_id}, {"text", p.text}, {"strength", p.strength}});
  }
  return out;
}

}  // namespace

std::string config_content_hash(const FeedConfig& config) {
  Json j{{"description", config.description},
         {"include_prompts", prompt_list(config.include_prompts)},
         {"limit_prompts", prompt_list(config.limit_prompts)}};
  return util::hex64(util::fnv1a64(j.dump()));
}

lm::Request build_curation_prompt(const Post& post, const FeedConfig& config) {
  lm::Request r;
  r.task = lm::Task::kCurate;
  r.system_prompt = std::string(kCurateSystemPrompt);
  const bool no_prompts = config.include_prompts.empty() && config.limit_prompts.empty();
  if (no_prompts) r.system_prompt += kNoPreferencesNote;

  Json media = Json::array();
  for (const auto& m : post.media) {
    Json d{{"type", m.type}, {"url", m.url}};
    if (!m.alt.empty()) d["alt"] = m.alt;
    media.push_back(std::move(d));
  }
  Json payload{{"post", {{"uri", post.uri}, {"author", post.author}, {"text", post.text}, {"media", media}}},
               {"include_prompts", prompt_list(config.include_prompts)},
               {"limit_prompts", prompt_list(config.limit_prompts)}};
  if (no_prompts) payload["default_score_range"] = Json::array({3, 4});
  r.user_payload = std::move(payload);
  r.temperature = 0.0;
  r.max_output_tokens = 256;
  return r;
}

// ---------------------------------------------------------------------------

CurationCache::CurationCache(const CurationCache& other) {
  std::lock_guard lock(other.mutex_);
  entries_ = other.entries_;
}

CurationCache& CurationCache::operator=(const CurationCache& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  entries_ = other.entries_;
  return *this;
}

std::optional<CurationCache::Value> CurationCache::get(const std::string& uri,
                                                       const std::string& config_hash) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find({uri, config_hash});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CurationCache::put(const std::string& uri, const std::string& config_hash, Value value) {
  std::lock_guard lock(mutex_);
  entries_[{uri, config_hash}] = std::move(value);
}

void CurationCache::retain(const std::vector<std::string>& keep) {
  std::unordered_set<std::string> keep_set(keep.begin(), keep.end());
  std::lock_guard lock(mutex_);
  std::erase_if(entries_, [&](const auto& kv) { return !keep_set.contains(kv.first.first); });
}

std::size_t CurationCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

Json CurationCache::to_json() const {
  std::lock_guard lock(mutex_);
  Json out = Json::array();
  for (const auto& [key, value] : entries_) {
    Json e{{"uri", key.first}, {"config_hash", key.second}, {"score", value.score}};
    if (value.rationale) e["rationale"] = *value.rationale;
    out.push_back(std::move(e));
  }
  return out;
}

CurationCache CurationCache::from_json(const Json& j) {
  CurationCache cache;
  for (const auto& e : j) {
    Value v{e.at("score").get<int>(), std::nullopt};
    if (auto r = e.find("rationale"); r != e.end() && r->is_string()) v.rationale = r->get<std::string>();
    cache.entries_[{e.at("uri").get<std::string>(), e.at("config_hash").get<std::string>()}] = v;
  }
  return cache;
}

// ---------------------------------------------------------------------------

Curator::Curator(std::shared_ptr<lm::Provider> provider, std::size_t max_parallel)
    : provider_(std::move(provider)), max_parallel_(std::max<std::size_t>(1, max_parallel)) {}

CurationResult Curator::curate(std::span<const Post> posts, const FeedConfig& config,
                               CurationCache* cache) const {
  const auto hash = config_content_hash(config);
  std::vector<CuratedPost> scored(posts.size());
  std::vector<std::size_t> pending;

  CurationReport report;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    scored[i].post = posts[i];
    if (cache) {
      if (auto hit = cache->get(posts[i].uri, hash)) {
        scored[i].score = hit->score;
        scored[i].rationale = hit->rationale;
        ++report.cache_hits;
        continue;
      }
    }
    pending.push_back(i);
  }

  std::atomic<std::size_t> failures{0};
  std::atomic<std::size_t> next{0};
  auto evaluate = [&](std::size_t i) {
    auto& out = scored[i];
    try {
      auto response = provider_->complete(build_curation_prompt(posts[i], config));
      out.score = response.content.at("score").get<int>();
      if (auto r = response.content.find("rationale"); r != response.content.end())
        out.rationale = r->get<std::string>();
      if (cache) cache->put(posts[i].uri, hash, {out.score, out.rationale});
    } catch (const std::exception& e) {
      ++failures;
      out.score = kFallbackScore;
      out.rationale = std::string(kEvaluationFailed);
      log::warn("post evaluation failed", {{"uri", posts[i].uri}, {"error", e.what()}});
    }
  };
  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) evaluate(pending[k]);
  };
  std::size_t n_workers = std::min(max_parallel_, pending.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  CurationResult result;
  for (auto& cp : scored) {
    cp.bucket = bucket_for_score(cp.score);
    ++report.counts[cp.bucket];
    if (cp.score == 0) {
      result.excluded.push_back(std::move(cp));
    } else {
      result.eligible.push_back(std::move(cp));
    }
  }
  report.evaluated = pending.size();
  report.failures = failures.load();
  report.degraded = report.evaluated > 0 && report.failures * 2 > report.evaluated;
  result.report = std::move(report);
  return result;
}

void to_json(Json& j, const CurationReport& r) {
  Json counts = Json::object();
  for (auto b : {Bucket::kStronglyPrefer, Bucket::kPrefer, Bucket::kUnspecified, Bucket::kShowLess,
                 Bucket::kNever}) {
    auto it = r.counts.find(b);
    counts[std::string(to_string(b))] = it == r.counts.end() ? 0 : it->second;
  }
  j = Json{{"counts", counts},
           {"evaluated", r.evaluated},
           {"cache_hits", r.cache_hits},
           {"failures", r.failures},
           {"degraded", r.degraded}};
}

void from_json(const Json& j, CurationReport& r) {
  r = CurationReport{};
  for (auto& [name, count] : j.at("counts").items()) {
    if (auto b = parse_enum<Bucket>(name)) r.counts[*b] = count.get<std::size_t>();
  }
  r.evaluated = j.value("evaluated", std::size_t{0});
  r.cache_hits = j.value("cache_hits", std::size_t{0});
  r.failures = j.value("failures", std::size_t{0});
  r.degraded = j.value("degraded", false);
}

}  // namespace bonsai::curation
