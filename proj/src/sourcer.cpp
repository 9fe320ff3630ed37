#include "bonsai/sourcer.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/util.hpp"

namespace bonsai::sourcing {

bool FetchReport::partial() const {
  return std::any_of(sources.begin(), sources.end(),
                     [](const SourceFetchReport& r) { return r.status != SourceStatus::kOk; });
}

Sourcer::Sourcer(std::shared_ptr<PlatformAdapter> adapter, SourcerOptions options)
    : adapter_(std::move(adapter)), options_(options) {
  if (options_.per_source_cap == 0) throw Error(ErrorCode::kConfig, "per_source_cap must be >= 1");
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

FetchResult Sourcer::initial_fetch(const FeedConfig& config, Timestamp now) const {
  FetchWindow window{now - options_.window, now, options_.per_source_cap, true};
  return run(config, window, nullptr);
}

FetchResult Sourcer::incremental_fetch(const FeedConfig& config, Timestamp last_update,
                                       Timestamp now,
                                       const std::unordered_set<std::string>& cached) const {
  if (!(last_update < now)) {
    throw Error(ErrorCode::kDomain, "incremental fetch requires last_update < now");
  }
  FetchWindow window{last_update, now, options_.per_source_cap, false};
  return run(config, window, &cached);
}

FetchResult Sourcer::run(const FeedConfig& config, const FetchWindow& window,
                         const std::unordered_set<std::string>* cached) const {
  const auto& sources = config.sources;
  std::vector<std::vector<Post>> per_source(sources.size());
  std::vector<SourceFetchReport> reports(sources.size());

  auto fetch_one = [&](std::size_t i) {
    const Source& source = sources[i];
    auto& rep = reports[i];
    rep.source = source;
    if (!adapter_->supports(source.kind)) {
      rep.status = SourceStatus::kUnsupported;
      rep.error = "adapter does not support " + std::string(to_string(source.kind)) + " sources";
      return;
    }
    AdapterResult fetched;
    auto started = std::chrono::steady_clock::now();
    try {
      fetched = adapter_->fetch(source, window, options_.per_source_timeout);
    } catch (const std::exception& e) {
      rep.status = SourceStatus::kFailed;
      rep.error = e.what();
      return;
    }
    if (std::chrono::steady_clock::now() - started > options_.per_source_timeout) {
      rep.status = SourceStatus::kFailed;
      rep.error = "fetch exceeded per-source timeout";
      return;
    }
    rep.missing_counters = fetched.missing_counters;

    auto& posts = per_source[i];
    for (auto& p : fetched.posts) {
      if (!window.contains(p.created_at)) {
        ++rep.dropped_out_of_window;
        continue;
      }
      p.fetched_via = source;
      posts.push_back(std::move(p));
    }
    std::stable_sort(posts.begin(), posts.end(), [](const Post& a, const Post& b) {
      if (a.created_at != b.created_at) return a.created_at > b.created_at;
      return a.uri < b.uri;
    });
    // The same uri twice from one source counts once toward the cap.
    posts.erase(std::unique(posts.begin(), posts.end(),
                            [](const Post& a, const Post& b) { return a.uri == b.uri; }),
                posts.end());
    if (posts.size() > window.per_source_cap) {
      rep.truncated = posts.size() - window.per_source_cap;
      posts.resize(window.per_source_cap);
    }
    rep.returned = posts.size();
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sources.size(); i = next++) fetch_one(i);
  };
  std::size_t n_workers = std::min(options_.max_in_flight, sources.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  FetchResult result;
  std::size_t ok_sources = 0;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& rep = reports[i];
    if (rep.status == SourceStatus::kOk) {
      ++ok_sources;
    } else {
      log::warn("source fetch skipped", {{"feed_id", config.feed_id},
                                         {"kind", to_string(rep.source.kind)},
                                         {"identifier", rep.source.identifier},
                                         {"status", to_string(rep.status)},
                                         {"error", rep.error}});
    }
    if (rep.dropped_out_of_window > 0 && cached) {
      log::warn("adapter returned posts outside the refresh window",
                {{"identifier", rep.source.identifier}, {"dropped", rep.dropped_out_of_window}});
    }
    for (auto& p : per_source[i]) {
      if (!seen.insert(p.uri).second) {
        ++result.report.duplicates_removed;
        continue;
      }
      if (cached && cached->contains(p.uri)) {
        ++result.report.already_cached;
        continue;
      }
      result.posts.push_back(std::move(p));
    }
  }
  result.report.sources = std::move(reports);
  result.report.total = result.posts.size();

  if (ok_sources == 0) {
    throw Error(ErrorCode::kSourcingFailed,
                sources.empty() ? "feed has no sources" : "no source could be fetched");
  }
  return result;
}

void to_json(Json& j, const SourceFetchReport& r) {
  j = Json{{"kind", r.source.kind},
           {"identifier", r.source.identifier},
           {"status", r.status},
           {"returned", r.returned},
           {"dropped_out_of_window", r.dropped_out_of_window},
           {"truncated", r.truncated},
           {"missing_counters", r.missing_counters}};
  if (!r.error.empty()) j["error"] = r.error;
}

void from_json(const Json& j, SourceFetchReport& r) {
  r = SourceFetchReport{};
  j.at("kind").get_to(r.source.kind);
  j.at("identifier").get_to(r.source.identifier);
  j.at("status").get_to(r.status);
  r.returned = j.value("returned", std::size_t{0});
  r.dropped_out_of_window = j.value("dropped_out_of_window", std::size_t{0});
  r.truncated = j.value("truncated", std::size_t{0});
  r.missing_counters = j.value("missing_counters", std::size_t{0});
  r.error = j.value("error", std::string{});
}

void to_json(Json& j, const FetchReport& r) {
  j = Json{{"sources", r.sources},
           {"duplicates_removed", r.duplicates_removed},
           {"already_cached", r.already_cached},
           {"total", r.total}};
}

void from_json(const Json& j, FetchReport& r) {
  r = FetchReport{};
  j.at("sources").get_to(r.sources);
  r.duplicates_removed = j.value("duplicates_removed", std::size_t{0});
  r.already_cached = j.value("already_cached", std::size_t{0});
  r.total = j.value("total", std::size_t{0});
}

// ---------------------------------------------------------------------------
// FixtureAdapter

FixtureAdapter::FixtureAdapter(std::vector<Entry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    by_identifier_.emplace(entries_[i].source_identifier, i);
  }
}

std::optional<Timestamp> FixtureAdapter::newest_post() const {
  std::optional<Timestamp> out;
  for (const auto& e : entries_) {
    if (!out || e.post.created_at > *out) out = e.post.created_at;
  }
  return out;
}

std::shared_ptr<FixtureAdapter> FixtureAdapter::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open fixture corpus " + path.string());
  return load(in);
}

std::shared_ptr<FixtureAdapter> FixtureAdapter::load(std::istream& in) {
  std::vector<Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    try {
      auto j = Json::parse(line);
      entries.push_back({j.at("source_identifier").get<std::string>(), j.at("post").get<Post>()});
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kConfig,
                  "fixture corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return std::make_shared<FixtureAdapter>(std::move(entries));
}

void FixtureAdapter::set_credentials(std::string handle, std::string app_password) {
  std::lock_guard lock(mutex_);
  handle_ = std::move(handle);
  app_password_ = std::move(app_password);
}

void FixtureAdapter::fail_source(std::string identifier) {
  std::lock_guard lock(mutex_);
  failing_.insert(std::move(identifier));
}

void FixtureAdapter::set_unsupported(SourceKind kind) {
  std::lock_guard lock(mutex_);
  unsupported_.insert(kind);
}

bool FixtureAdapter::supports(SourceKind kind) const {
  std::lock_guard lock(mutex_);
  return !unsupported_.contains(kind);
}

AdapterResult FixtureAdapter::fetch(const Source& source, const FetchWindow& window,
                                    std::chrono::milliseconds /*timeout*/) {
  {
    std::lock_guard lock(mutex_);
    if (failing_.contains(source.identifier)) {
      throw Error(ErrorCode::kSourcingFailed, "fixture source unavailable: " + source.identifier);
    }
  }
  AdapterResult out;
  std::unordered_set<std::string> taken;
  auto take = [&](const Post& p) {
    if (taken.insert(p.uri).second) out.posts.push_back(p);
  };

  bool keyed_hit = false;
  auto [lo, hi] = by_identifier_.equal_range(source.identifier);
  for (auto it = lo; it != hi; ++it) {
    keyed_hit = true;
    take(entries_[it->second].post);
  }

  switch (source.kind) {
    case SourceKind::kFeed:
    case SourceKind::kList:
    case SourceKind::kStarterPack:
      if (!keyed_hit) throw Error(ErrorCode::kNotFound, "unknown source " + source.identifier);
      break;
    case SourceKind::kAccount: {
      for (const auto& e : entries_) {
        if (e.post.author == source.identifier) {
          keyed_hit = true;
          take(e.post);
        }
      }
      if (!keyed_hit) throw Error(ErrorCode::kNotFound, "unknown account " + source.identifier);
      break;
    }
    case SourceKind::kHashtag: {
      auto needle = "#" + source.identifier;
      for (const auto& e : entries_) {
        if (util::contains_icase(e.post.text, needle)) take(e.post);
      }
      break;
    }
    case SourceKind::kSearchQuery:
      for (const auto& e : entries_) {
        if (util::contains_icase(e.post.text, source.identifier)) take(e.post);
      }
      break;
  }

  // Behave like a paginated API: newest first, stop at the window and cap.
  std::stable_sort(out.posts.begin(), out.posts.end(), [](const Post& a, const Post& b) {
    if (a.created_at != b.created_at) return a.created_at > b.created_at;
    return a.uri < b.uri;
  });
  std::erase_if(out.posts, [&](const Post& p) { return !window.contains(p.created_at); });
  if (out.posts.size() > window.per_source_cap) out.posts.resize(window.per_source_cap);
  return out;
}

std::optional<std::string> FixtureAdapter::authenticate(std::string_view handle,
                                                        std::string_view app_password) {
  std::lock_guard lock(mutex_);
  if (handle == handle_ && app_password == app_password_) return std::string(handle);
  return std::nullopt;
}

}  // namespace bonsai::sourcing
