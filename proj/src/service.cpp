#include "bonsai/service.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>
#include <unordered_set>

#include "bonsai/log.hpp"
#include "bonsai/ranker.hpp"
#include "bonsai/util.hpp"

namespace bonsai::service {

namespace {

constexpr std::string_view kGeneratorCollection = "/app.bsky.feed.generator/";

bool valid_feed_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '_';
  });
}

std::string sources_hash(const FeedConfig& config) {
  Json keys = Json::array();
  for (const auto& s : config.sources) keys.push_back({s.kind, s.identifier});
  return util::hex64(util::fnv1a64(keys.dump()));
}

// Releases the single-flight slot on every exit path.
class FlightGuard {
 public:
  FlightGuard(std::mutex& m, std::set<std::string>& set, std::string id)
      : mutex_(m), set_(set), id_(std::move(id)) {
    std::lock_guard lock(mutex_);
    if (!set_.insert(id_).second) {
      throw Error(ErrorCode::kConflict, "a generation run is already in flight for " + id_);
    }
  }
  ~FlightGuard() {
    std::lock_guard lock(mutex_);
    set_.erase(id_);
  }
  FlightGuard(const FlightGuard&) = delete;
  FlightGuard& operator=(const FlightGuard&) = delete;

 private:
  std::mutex& mutex_;
  std::set<std::string>& set_;
  std::string id_;
};

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(ErrorCode::kValidation,
            violations.empty() ? "invalid config"
                               : violations.front().code + ": " + violations.front().message),
      violations_(std::move(violations)) {}

std::string Cursor::encode() const {
  return "g" + std::to_string(generation_id) + ":" + std::to_string(offset);
}

std::optional<Cursor> Cursor::decode(std::string_view text) {
  if (text.size() < 4 || text.front() != 'g') return std::nullopt;
  auto colon = text.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto parse = [](std::string_view digits, auto& out) {
    if (digits.empty()) return false;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out);
    return ec == std::errc() && ptr == digits.data() + digits.size();
  };
  Cursor c;
  if (!parse(text.substr(1, colon - 1), c.generation_id)) return std::nullopt;
  if (!parse(text.substr(colon + 1), c.offset)) return std::nullopt;
  return c;
}

Json skeleton_to_json(const SkeletonPage& page) {
  Json feed = Json::array();
  for (const auto& uri : page.uris) feed.push_back({{"post", uri}});
  Json j{{"feed", std::move(feed)}};
  if (page.cursor) j["cursor"] = *page.cursor;
  return j;
}

std::string feed_uri(std::string_view did, std::string_view feed_id) {
  return "at://" + std::string(did) + std::string(kGeneratorCollection) + std::string(feed_id);
}

std::optional<std::string> feed_id_from_uri(std::string_view uri) {
  if (!uri.starts_with("at://")) return std::nullopt;
  auto pos = uri.find(kGeneratorCollection);
  if (pos == std::string_view::npos || pos == 5) return std::nullopt;
  auto id = uri.substr(pos + kGeneratorCollection.size());
  if (!valid_feed_id(id)) return std::nullopt;
  return std::string(id);
}

// ---------------------------------------------------------------------------

FeedService::FeedService(std::shared_ptr<FeedStore> store, std::shared_ptr<lm::Provider> provider,
                         std::shared_ptr<const catalog::Catalog> catalog,
                         std::shared_ptr<sourcing::PlatformAdapter> adapter,
                         ServiceOptions options)
    : store_(std::move(store)),
      provider_(provider),
      adapter_(adapter),
      planner_(provider, std::move(catalog), options.planner),
      sourcer_(adapter, options.sourcer),
      curator_(provider, options.curation_parallelism),
      options_(std::move(options)),
      clock_(now_utc) {}

std::string FeedService::login(std::string_view handle, std::string_view app_password) {
  auto account = adapter_->authenticate(handle, app_password);
  if (!account) throw Error(ErrorCode::kUnauthorized, "invalid handle or app password");
  auto token = util::random_token(24);
  std::lock_guard lock(sessions_mutex_);
  sessions_[token] = *account;
  log::info("session created", {{"owner", *account}});
  return token;
}

void FeedService::logout(std::string_view token) {
  std::lock_guard lock(sessions_mutex_);
  if (auto it = sessions_.find(token); it != sessions_.end()) sessions_.erase(it);
}

std::string FeedService::owner_for_token(std::string_view token) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) throw Error(ErrorCode::kUnauthorized, "unknown or expired session");
  return it->second;
}

FeedConfig FeedService::plan(std::string_view description, std::string_view owner) const {
  return planner_.plan(description, owner, clock_());
}

std::vector<Source> FeedService::suggest_sources(const FeedConfig& config) const {
  return planner_.suggest_additional_sources(config);
}

// ---------------------------------------------------------------------------

FeedConfig FeedService::load_owned(const std::string& feed_id, const Actor& actor, bool mutate) {
  if (!valid_feed_id(feed_id)) throw Error(ErrorCode::kNotFound, "no feed " + feed_id);
  auto config = store_->load_config(feed_id);
  if (!config) throw Error(ErrorCode::kNotFound, "no feed " + feed_id);
  if (mutate && actor && config->owner != *actor) {
    throw Error(ErrorCode::kForbidden, "feed " + feed_id + " belongs to another account");
  }
  return *config;
}

FeedConfig FeedService::create_feed(FeedConfig draft, const Actor& actor) {
  std::lock_guard lock(config_mutex_);
  if (actor) draft.owner = *actor;
  auto violations = validate_config(draft);
  if (draft.owner.empty()) violations.push_back({"EMPTY_OWNER", "owner", "owner must be set"});
  if (draft.feed_id.empty()) {
    do {
      draft.feed_id = "f" + util::random_token(6);
    } while (store_->load_config(draft.feed_id));
  } else if (!valid_feed_id(draft.feed_id)) {
    violations.push_back({"INVALID_FEED_ID", "feed_id",
                          "feed id may contain only letters, digits, '-' and '_'"});
  } else if (store_->load_config(draft.feed_id)) {
    violations.push_back({"DUPLICATE_FEED_ID", "feed_id", "feed id already exists"});
  }
  if (!violations.empty()) throw ValidationError(std::move(violations));
  auto now = clock_();
  draft.created_at = now;
  draft.updated_at = now;
  store_->save_config(draft);
  log::info("feed created", {{"feed_id", draft.feed_id}, {"owner", draft.owner}});
  return draft;
}

FeedConfig FeedService::update_feed(const std::string& feed_id, FeedConfig next,
                                    const Actor& actor) {
  std::lock_guard lock(config_mutex_);
  auto current = load_owned(feed_id, actor, true);
  std::vector<Violation> violations;
  if (!next.feed_id.empty() && next.feed_id != feed_id) {
    violations.push_back({"FEED_ID_MISMATCH", "feed_id", "feed id in body differs from path"});
  }
  next.feed_id = feed_id;
  next.owner = current.owner;
  next.created_at = current.created_at;
  for (auto& v : validate_config(next)) violations.push_back(std::move(v));
  if (!violations.empty()) throw ValidationError(std::move(violations));
  next.updated_at = std::max(clock_(), current.updated_at + std::chrono::milliseconds(1));
  store_->save_config(next);
  log::info("feed updated", {{"feed_id", feed_id}});
  return next;
}

FeedConfig FeedService::get_feed(const std::string& feed_id, const Actor& actor) {
  return load_owned(feed_id, actor, false);
}

std::vector<FeedConfig> FeedService::list_feeds(const Actor& actor) {
  auto all = store_->list_configs();
  if (actor) std::erase_if(all, [&](const FeedConfig& c) { return c.owner != *actor; });
  return all;
}

void FeedService::delete_feed(const std::string& feed_id, const Actor& actor) {
  std::lock_guard lock(config_mutex_);
  load_owned(feed_id, actor, true);
  // Holding the flight slot keeps a run from starting mid-delete.
  FlightGuard guard(flight_mutex_, in_flight_, feed_id);
  store_->delete_feed(feed_id);
  {
    std::unique_lock plock(published_mutex_);
    published_.erase(feed_id);
  }
  log::info("feed deleted", {{"feed_id", feed_id}});
}

FeedConfig FeedService::set_active(const std::string& feed_id, bool active, const Actor& actor) {
  std::lock_guard lock(config_mutex_);
  auto config = load_owned(feed_id, actor, true);
  if (config.active != active) {
    config.active = active;
    config.updated_at = std::max(clock_(), config.updated_at + std::chrono::milliseconds(1));
    store_->save_config(config);
    log::info(active ? "feed activated" : "feed deactivated", {{"feed_id", feed_id}});
  }
  return config;
}

// ---------------------------------------------------------------------------

bool FeedService::in_flight(const std::string& feed_id) const {
  std::lock_guard lock(flight_mutex_);
  return in_flight_.contains(feed_id);
}

std::vector<std::string> FeedService::active_feed_ids() {
  std::vector<std::string> out;
  for (const auto& c : store_->list_configs()) {
    if (c.active) out.push_back(c.feed_id);
  }
  return out;
}

GenerationRun FeedService::generate(const std::string& feed_id, Trigger trigger,
                                    const Actor& actor) {
  FlightGuard guard(flight_mutex_, in_flight_, feed_id);
  auto config = load_owned(feed_id, actor, true);
  return run_pipeline(config, trigger);
}

GenerationRun FeedService::run_pipeline(const FeedConfig& config, Trigger trigger) {
  const auto& feed_id = config.feed_id;
  GenerationRun run;
  run.feed_id = feed_id;
  run.trigger = trigger;
  run.started_at = clock_();

  auto history = store_->load_runs(feed_id);
  std::uint64_t last = 0;
  for (const auto& r : history) last = std::max(last, r.generation_id);
  if (auto current = published(feed_id)) last = std::max(last, current->generation_id);
  run.generation_id = last + 1;

  Json log_ctx{{"feed_id", feed_id}, {"generation_id", run.generation_id},
               {"trigger", trigger}};
  log::info("generation started", log_ctx);

  auto fail = [&](const Error& e) {
    run.status = RunStatus::kFailed;
    run.error = std::string(error_code_name(e.code())) + ": " + e.what();
    run.finished_at = clock_();
    try {
      record_run(feed_id, run);
    } catch (const std::exception& ex) {
      log::error("could not record failed run", {{"feed_id", feed_id}, {"detail", ex.what()}});
    }
    Json f = log_ctx;
    f["error"] = run.error;
    log::error("generation failed", f);
  };

  const auto now = run.started_at;
  PostPool pool;
  sourcing::FetchResult fetched;
  curation::CurationCache cache;
  try {
    pool = store_->load_pool(feed_id);
    cache = store_->load_cache(feed_id);
  } catch (const Error& e) {
    fail(e);
    throw;
  }

  // Sourcing: full backfill on the first run or after the source list
  // changed, otherwise only posts newer than the previous run.
  const auto hash = sources_hash(config);
  try {
    if (!pool.last_update || pool.sources_hash != hash) {
      fetched = sourcer_.initial_fetch(config, now);
      pool.posts = fetched.posts;
    } else if (*pool.last_update >= now) {
      // Empty refresh window (same instant, or the clock stepped back).
      log::warn("skipping incremental fetch", {{"feed_id", feed_id},
                                               {"last_update", format_rfc3339(*pool.last_update)}});
    } else {
      std::unordered_set<std::string> cached;
      for (const auto& p : pool.posts) cached.insert(p.uri);
      fetched = sourcer_.incremental_fetch(config, *pool.last_update, now, cached);
      pool.posts.insert(pool.posts.end(), fetched.posts.begin(), fetched.posts.end());
    }
  } catch (const Error& e) {
    fail(e);
    throw;
  }
  pool.last_update = now;
  pool.sources_hash = hash;
  const auto horizon = now - options_.retention;
  std::erase_if(pool.posts, [&](const Post& p) { return p.created_at < horizon; });
  run.fetch_report = fetched.report;
  run.counts.fetched = fetched.posts.size();
  run.counts.candidates = pool.posts.size();

  std::shared_ptr<MaterializedFeed> feed;
  try {
    auto curated = curator_.curate(pool.posts, config, &cache);
    std::vector<std::string> keep;
    keep.reserve(pool.posts.size());
    for (const auto& p : pool.posts) keep.push_back(p.uri);
    cache.retain(keep);

    auto weights = weights_for_style(config.ranking, options_.presets);
    auto ranked = ranking::rank_feed(pool.posts, curated.eligible, weights);

    run.curation_report = curated.report;
    run.weights_used = weights;
    run.counts.eligible = curated.eligible.size();
    run.counts.excluded = curated.excluded.size();
    run.counts.ranked = ranked.size();

    std::unordered_map<std::string, const CuratedPost*> by_uri;
    for (const auto& cp : curated.eligible) by_uri.emplace(cp.post.uri, &cp);
    feed = std::make_shared<MaterializedFeed>();
    feed->feed_id = feed_id;
    feed->generation_id = run.generation_id;
    feed->generated_at = now;
    feed->weights_used = weights;
    feed->entries.reserve(ranked.size());
    run.entries.reserve(ranked.size());
    for (const auto& r : ranked) {
      const auto* cp = by_uri.at(r.uri);
      feed->entries.push_back({r.uri, r.ranks.borda_score});
      run.entries.push_back({r.uri, cp->score, cp->bucket, cp->post.fetched_via, r.ranks});
    }
  } catch (const Error& e) {
    fail(e);
    throw;
  }

  // Persist derived state first; the feed file swap is the commit point.
  try {
    store_->save_pool(feed_id, pool);
    store_->save_cache(feed_id, cache);
    store_->save_feed(*feed);
  } catch (const Error& e) {
    fail(e);
    throw;
  }
  publish(feed);

  run.status = (run.curation_report.degraded || run.fetch_report.partial()) ? RunStatus::kDegraded
                                                                            : RunStatus::kOk;
  run.finished_at = clock_();
  try {
    record_run(feed_id, run);
  } catch (const Error& e) {
    // The new generation is already live; only the history entry is lost.
    log::error("could not record run", {{"feed_id", feed_id}, {"detail", e.what()}});
  }
  Json f = log_ctx;
  f["status"] = run.status;
  f["counts"] = run.counts;
  log::info("generation finished", f);
  return run;
}

void FeedService::record_run(const std::string& feed_id, GenerationRun run) {
  auto history = store_->load_runs(feed_id);
  history.push_back(std::move(run));
  if (history.size() > options_.run_history) {
    history.erase(history.begin(),
                  history.begin() + static_cast<std::ptrdiff_t>(history.size() - options_.run_history));
  }
  store_->save_runs(feed_id, history);
}

std::vector<GenerationRun> FeedService::runs(const std::string& feed_id, const Actor& actor) {
  load_owned(feed_id, actor, false);
  auto history = store_->load_runs(feed_id);
  std::reverse(history.begin(), history.end());  // newest first
  return history;
}

GenerationRun FeedService::run(const std::string& feed_id, std::uint64_t generation_id,
                               const Actor& actor) {
  load_owned(feed_id, actor, false);
  for (auto& r : store_->load_runs(feed_id)) {
    if (r.generation_id == generation_id) return r;
  }
  throw Error(ErrorCode::kNotFound,
              "no run " + std::to_string(generation_id) + " for feed " + feed_id);
}

std::vector<Post> FeedService::hydrate(const std::string& feed_id,
                                       const std::vector<std::string>& uris, const Actor& actor) {
  load_owned(feed_id, actor, false);
  auto pool = store_->load_pool(feed_id);
  std::unordered_map<std::string, const Post*> by_uri;
  for (const auto& p : pool.posts) by_uri.emplace(p.uri, &p);
  std::vector<Post> out;
  for (const auto& uri : uris) {
    if (auto it = by_uri.find(uri); it != by_uri.end()) out.push_back(*it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

void FeedService::publish(std::shared_ptr<const MaterializedFeed> feed) {
  std::unique_lock lock(published_mutex_);
  published_[feed->feed_id] = std::move(feed);
}

std::shared_ptr<const MaterializedFeed> FeedService::published(const std::string& feed_id) {
  {
    std::shared_lock lock(published_mutex_);
    if (auto it = published_.find(feed_id); it != published_.end()) return it->second;
  }
  std::unique_lock lock(published_mutex_);
  if (auto it = published_.find(feed_id); it != published_.end()) return it->second;
  auto stored = store_->load_feed(feed_id);
  if (!stored) return nullptr;
  auto ptr = std::make_shared<const MaterializedFeed>(std::move(*stored));
  published_[feed_id] = ptr;
  return ptr;
}

SkeletonPage FeedService::skeleton(std::string_view uri, std::size_t limit,
                                   std::optional<std::string_view> cursor) {
  if (limit < 1 || limit > 100) throw Error(ErrorCode::kBadRequest, "limit must be in 1..100");
  auto feed_id = feed_id_from_uri(uri);
  if (!feed_id) throw Error(ErrorCode::kBadRequest, "unknown feed: " + std::string(uri));
  auto config = store_->load_config(*feed_id);
  if (!config || !config->active) {
    throw Error(ErrorCode::kBadRequest, "unknown feed: " + std::string(uri));
  }
  // One snapshot for the whole request: a concurrent swap cannot mix
  // generations within a page.
  auto feed = published(*feed_id);
  if (!feed) throw Error(ErrorCode::kNotFound, "feed has not been generated yet");

  std::size_t offset = 0;
  if (cursor && !cursor->empty()) {
    auto c = Cursor::decode(*cursor);
    if (!c) throw Error(ErrorCode::kBadRequest, "malformed cursor");
    if (c->generation_id == feed->generation_id) {
      if (c->offset > feed->entries.size()) throw Error(ErrorCode::kBadRequest, "cursor out of range");
      offset = c->offset;
    }
  }
  SkeletonPage page;
  auto end = std::min(feed->entries.size(), offset + limit);
  for (auto i = offset; i < end; ++i) page.uris.push_back(feed->entries[i].uri);
  if (end < feed->entries.size()) page.cursor = Cursor{feed->generation_id, end}.encode();
  return page;
}

Json FeedService::describe_feed_generator() {
  Json feeds = Json::array();
  for (const auto& c : store_->list_configs()) {
    if (c.active) feeds.push_back({{"uri", feed_uri(options_.service_did, c.feed_id)}});
  }
  return Json{{"did", options_.service_did}, {"feeds", std::move(feeds)}};
}

}  // namespace bonsai::service
