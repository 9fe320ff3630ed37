#pragma once

// Feed service: config CRUD with ownership, generation orchestration,
// publication of materialized feeds and the skeleton read path.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "bonsai/catalog.hpp"
#include "bonsai/curator.hpp"
#include "bonsai/error.hpp"
#include "bonsai/lm.hpp"
#include "bonsai/planner.hpp"
#include "bonsai/sourcer.hpp"
#include "bonsai/store.hpp"

namespace bonsai::service {

// A write rejected by validate_config. Maps to HTTP 409 with the list.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

struct ServiceOptions {
  std::string service_did = "did:web:localhost";
  std::chrono::hours retention{24 * 7};  // pool eviction age
  std::size_t run_history = 10;
  std::size_t curation_parallelism = 4;
  PresetTable presets = PresetTable::defaults();
  planner::PlannerOptions planner;
  sourcing::SourcerOptions sourcer;
};

// The caller of a config operation. An absent actor is the local operator
// (CLI admin commands) and bypasses ownership checks.
using Actor = std::optional<std::string>;

struct Cursor {
  std::uint64_t generation_id = 0;
  std::size_t offset = 0;

  std::string encode() const;
  // nullopt for anything that is not "g<generation>:<offset>".
  static std::optional<Cursor> decode(std::string_view text);
};

struct SkeletonPage {
  std::vector<std::string> uris;
  std::optional<std::string> cursor;
};

Json skeleton_to_json(const SkeletonPage& page);

// at://<did>/app.bsky.feed.generator/<feed_id>
std::string feed_uri(std::string_view did, std::string_view feed_id);
// Returns the feed id, or nullopt if `uri` is not a feed-generator uri.
std::optional<std::string> feed_id_from_uri(std::string_view uri);

class FeedService {
 public:
  using Clock = std::function<Timestamp()>;

  FeedService(std::shared_ptr<FeedStore> store, std::shared_ptr<lm::Provider> provider,
              std::shared_ptr<const catalog::Catalog> catalog,
              std::shared_ptr<sourcing::PlatformAdapter> adapter, ServiceOptions options = {});

  void set_clock(Clock clock) { clock_ = std::move(clock); }
  Timestamp now() const { return clock_(); }
  const ServiceOptions& options() const { return options_; }

  // --- sessions ----------------------------------------------------------
  // Throws Error(kUnauthorized) when the adapter rejects the credentials.
  std::string login(std::string_view handle, std::string_view app_password);
  void logout(std::string_view token);
  // Throws Error(kUnauthorized) for an unknown token.
  std::string owner_for_token(std::string_view token) const;

  // --- planning ----------------------------------------------------------
  FeedConfig plan(std::string_view description, std::string_view owner) const;
  std::vector<Source> suggest_sources(const FeedConfig& config) const;

  // --- config CRUD -------------------------------------------------------
  // Assigns feed_id, owner and timestamps. Throws ValidationError.
  FeedConfig create_feed(FeedConfig draft, const Actor& actor);
  FeedConfig update_feed(const std::string& feed_id, FeedConfig next, const Actor& actor);
  FeedConfig get_feed(const std::string& feed_id, const Actor& actor);
  std::vector<FeedConfig> list_feeds(const Actor& actor);
  // Throws Error(kConflict) while a run is in flight.
  void delete_feed(const std::string& feed_id, const Actor& actor);
  FeedConfig set_active(const std::string& feed_id, bool active, const Actor& actor);

  // --- generation --------------------------------------------------------
  // Single-flight per feed: Error(kConflict) if a run is already going.
  GenerationRun generate(const std::string& feed_id, Trigger trigger, const Actor& actor = {});
  bool in_flight(const std::string& feed_id) const;
  std::vector<std::string> active_feed_ids();
  std::vector<GenerationRun> runs(const std::string& feed_id, const Actor& actor);
  GenerationRun run(const std::string& feed_id, std::uint64_t generation_id, const Actor& actor);
  // Post bodies from the feed's cached pool, in the order of `uris`.
  // Unknown uris are skipped.
  std::vector<Post> hydrate(const std::string& feed_id, const std::vector<std::string>& uris,
                            const Actor& actor);

  // --- read path ---------------------------------------------------------
  // Currently published generation, or null.
  std::shared_ptr<const MaterializedFeed> published(const std::string& feed_id);
  // Throws Error(kBadRequest) for an unknown or inactive feed and
  // Error(kNotFound) when no generation has completed.
  SkeletonPage skeleton(std::string_view feed_uri, std::size_t limit,
                        std::optional<std::string_view> cursor);
  Json describe_feed_generator();

 private:
  FeedConfig load_owned(const std::string& feed_id, const Actor& actor, bool mutate);
  GenerationRun run_pipeline(const FeedConfig& config, Trigger trigger);
  void record_run(const std::string& feed_id, GenerationRun run);
  void publish(std::shared_ptr<const MaterializedFeed> feed);

  std::shared_ptr<FeedStore> store_;
  std::shared_ptr<lm::Provider> provider_;
  std::shared_ptr<sourcing::PlatformAdapter> adapter_;
  planner::Planner planner_;
  sourcing::Sourcer sourcer_;
  curation::Curator curator_;
  ServiceOptions options_;
  Clock clock_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::string, std::less<>> sessions_;  // token -> owner

  mutable std::mutex flight_mutex_;
  std::set<std::string> in_flight_;

  // Serializes config writes (create/update/delete/activate).
  std::mutex config_mutex_;

  mutable std::shared_mutex published_mutex_;
  std::map<std::string, std::shared_ptr<const MaterializedFeed>> published_;
};

}  // namespace bonsai::service
