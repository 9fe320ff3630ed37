#pragma once

// Candidate sourcing: pulls posts for each configured source through a
// platform adapter, applies the fetch window and per-source cap, and merges
// the results with uri de-duplication.

#include <chrono>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "bonsai/model.hpp"

namespace bonsai::sourcing {

using bonsai::from_json;
using bonsai::to_json;

struct FetchWindow {
  Timestamp since{};
  Timestamp until{};
  std::size_t per_source_cap = 100;
  // Initial backfill includes a post exactly at `since`; incremental refresh
  // does not, because that instant was covered by the previous run.
  bool include_since = true;

  bool contains(Timestamp t) const {
    return (include_since ? t >= since : t > since) && t <= until;
  }
};

struct AdapterResult {
  std::vector<Post> posts;
  std::size_t missing_counters = 0;  // posts whose counters defaulted to 0
};

class PlatformAdapter {
 public:
  virtual ~PlatformAdapter() = default;

  virtual bool supports(SourceKind kind) const = 0;
  // Posts for one source, ideally newest first and inside the window. The
  // sourcer re-applies the window and cap regardless. Must give up after
  // `timeout`. Throws on failure.
  virtual AdapterResult fetch(const Source& source, const FetchWindow& window,
                              std::chrono::milliseconds timeout) = 0;
  // Verifies a handle + app password. Returns the account identifier on
  // success.
  virtual std::optional<std::string> authenticate(std::string_view handle,
                                                  std::string_view app_password) = 0;
};

enum class SourceStatus { kOk, kFailed, kUnsupported };

struct SourceFetchReport {
  Source source;
  SourceStatus status = SourceStatus::kOk;
  std::size_t returned = 0;
  std::size_t dropped_out_of_window = 0;
  std::size_t truncated = 0;
  std::size_t missing_counters = 0;
  std::string error;
};

struct FetchReport {
  std::vector<SourceFetchReport> sources;
  std::size_t duplicates_removed = 0;
  std::size_t already_cached = 0;
  std::size_t total = 0;

  bool partial() const;
};

struct FetchResult {
  std::vector<Post> posts;
  FetchReport report;
};

struct SourcerOptions {
  std::chrono::hours window{96};
  std::size_t per_source_cap = 100;
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds per_source_timeout{10'000};
};

class Sourcer {
 public:
  explicit Sourcer(std::shared_ptr<PlatformAdapter> adapter, SourcerOptions options = {});

  // Window [now - 96h, now], newest posts first per source, capped. Throws
  // Error(kSourcingFailed) if no source could be fetched.
  FetchResult initial_fetch(const FeedConfig& config, Timestamp now) const;

  // Window (last_update, now]; uris in `cached` are removed.
  FetchResult incremental_fetch(const FeedConfig& config, Timestamp last_update, Timestamp now,
                                const std::unordered_set<std::string>& cached) const;

  const SourcerOptions& options() const { return options_; }

 private:
  FetchResult run(const FeedConfig& config, const FetchWindow& window,
                  const std::unordered_set<std::string>* cached) const;

  std::shared_ptr<PlatformAdapter> adapter_;
  SourcerOptions options_;
};

void to_json(Json& j, const SourceFetchReport& r);
void to_json(Json& j, const FetchReport& r);
void from_json(const Json& j, SourceFetchReport& r);
void from_json(const Json& j, FetchReport& r);

// ---------------------------------------------------------------------------
// Offline adapter over a JSON-lines corpus of {source_identifier, post}.
//
// feed / list / starter_pack / account sources are looked up by identifier
// (accounts also match on post author); an identifier absent from the corpus
// is a fetch failure. hashtag and search_query sources use keyed lookup plus
// a case-insensitive text search over the whole corpus, and never fail.

class FixtureAdapter : public PlatformAdapter {
 public:
  struct Entry {
    std::string source_identifier;
    Post post;
  };

  explicit FixtureAdapter(std::vector<Entry> entries);
  static std::shared_ptr<FixtureAdapter> load(const std::filesystem::path& path);
  static std::shared_ptr<FixtureAdapter> load(std::istream& in);

  void set_credentials(std::string handle, std::string app_password);
  // Test hook: fetching this identifier throws.
  void fail_source(std::string identifier);
  void set_unsupported(SourceKind kind);

  bool supports(SourceKind kind) const override;
  AdapterResult fetch(const Source& source, const FetchWindow& window,
                      std::chrono::milliseconds timeout) override;
  std::optional<std::string> authenticate(std::string_view handle,
                                          std::string_view app_password) override;

  std::size_t size() const { return entries_.size(); }
  // created_at of the newest post in the corpus.
  std::optional<Timestamp> newest_post() const;

 private:
  std::vector<Entry> entries_;
  std::multimap<std::string, std::size_t> by_identifier_;
  mutable std::mutex mutex_;
  std::set<std::string> failing_;
  std::set<SourceKind> unsupported_;
  std::string handle_ = "test.bsky.social";
  std::string app_password_ = "test-app-password";
};

// ---------------------------------------------------------------------------
// Live AT Protocol adapter (XRPC over HTTPS with an app-password session).

struct AtprotoOptions {
  std::string service_url = "https://bsky.social";
  std::string handle;        // account used for read calls
  std::string app_password;
};

class AtprotoAdapter : public PlatformAdapter {
 public:
  explicit AtprotoAdapter(AtprotoOptions options);

  bool supports(SourceKind kind) const override;
  AdapterResult fetch(const Source& source, const FetchWindow& window,
                      std::chrono::milliseconds timeout) override;
  std::optional<std::string> authenticate(std::string_view handle,
                                          std::string_view app_password) override;

  // Converts an app.bsky.feed.defs#postView into a Post. Missing counters
  // default to 0 and set `missing_counters`.
  static Post parse_post_view(const Json& view, bool* missing_counters = nullptr);

 private:
  std::string access_token(std::chrono::milliseconds timeout);

  AtprotoOptions options_;
  std::mutex mutex_;
  std::string access_jwt_;
};

}  // namespace bonsai::sourcing

namespace bonsai {
template <>
struct EnumNames<sourcing::SourceStatus> {
  static constexpr std::array<std::string_view, 3> kNames{"ok", "failed", "unsupported"};
};
}  // namespace bonsai
