#pragma once

// Persistence for feed configs, materialized feeds, post pools, curation
// caches and run history.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bonsai/curator.hpp"
#include "bonsai/model.hpp"
#include "bonsai/ranker.hpp"
#include "bonsai/sourcer.hpp"

namespace bonsai::service {

using bonsai::from_json;
using bonsai::to_json;

enum class Trigger { kManual, kScheduled };
enum class RunStatus { kOk, kDegraded, kFailed };

// Per-post backtrace kept with a run for the transparency panel.
struct EntryDetail {
  std::string uri;
  int score = 0;
  Bucket bucket = Bucket::kUnspecified;
  std::optional<Source> fetched_via;
  ranking::RankTriple ranks;
};

struct StageCounts {
  std::size_t fetched = 0;     // new posts pulled by this run
  std::size_t candidates = 0;  // cached pool the ranking ran over
  std::size_t eligible = 0;
  std::size_t excluded = 0;
  std::size_t ranked = 0;
};

struct GenerationRun {
  std::string feed_id;
  std::uint64_t generation_id = 0;
  Trigger trigger = Trigger::kManual;
  RunStatus status = RunStatus::kOk;
  StageCounts counts;
  sourcing::FetchReport fetch_report;
  curation::CurationReport curation_report;
  std::optional<RankingWeights> weights_used;
  Timestamp started_at{};
  Timestamp finished_at{};
  std::string error;
  std::vector<EntryDetail> entries;
};

// Cached candidates for a feed between runs.
struct PostPool {
  std::vector<Post> posts;
  std::optional<Timestamp> last_update;
  std::string sources_hash;  // identifies the source list the pool was built from
};

class FeedStore {
 public:
  virtual ~FeedStore() = default;

  virtual std::vector<FeedConfig> list_configs() = 0;
  virtual std::optional<FeedConfig> load_config(const std::string& feed_id) = 0;
  virtual void save_config(const FeedConfig& config) = 0;
  // Removes the config and everything derived from it.
  virtual void delete_feed(const std::string& feed_id) = 0;

  virtual std::optional<MaterializedFeed> load_feed(const std::string& feed_id) = 0;
  // Atomic: a concurrent or later reader sees either the previous feed or
  // the new one in full.
  virtual void save_feed(const MaterializedFeed& feed) = 0;

  virtual PostPool load_pool(const std::string& feed_id) = 0;
  virtual void save_pool(const std::string& feed_id, const PostPool& pool) = 0;

  virtual curation::CurationCache load_cache(const std::string& feed_id) = 0;
  virtual void save_cache(const std::string& feed_id, const curation::CurationCache& cache) = 0;

  virtual std::vector<GenerationRun> load_runs(const std::string& feed_id) = 0;
  virtual void save_runs(const std::string& feed_id, const std::vector<GenerationRun>& runs) = 0;
};

// One directory per concern, one JSON document per feed. Every write goes
// to a temporary file that is fsync'ed and renamed over the target.
class FileStore : public FeedStore {
 public:
  // Creates the directory tree; throws Error(kStorage) if it is unusable.
  explicit FileStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  std::vector<FeedConfig> list_configs() override;
  std::optional<FeedConfig> load_config(const std::string& feed_id) override;
  void save_config(const FeedConfig& config) override;
  void delete_feed(const std::string& feed_id) override;
  std::optional<MaterializedFeed> load_feed(const std::string& feed_id) override;
  void save_feed(const MaterializedFeed& feed) override;
  PostPool load_pool(const std::string& feed_id) override;
  void save_pool(const std::string& feed_id, const PostPool& pool) override;
  curation::CurationCache load_cache(const std::string& feed_id) override;
  void save_cache(const std::string& feed_id, const curation::CurationCache& cache) override;
  std::vector<GenerationRun> load_runs(const std::string& feed_id) override;
  void save_runs(const std::string& feed_id, const std::vector<GenerationRun>& runs) override;

 private:
  std::filesystem::path path_for(std::string_view kind, const std::string& feed_id) const;
  std::optional<Json> read_json(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path, const Json& doc) const;

  std::filesystem::path root_;
};

// Writes a file atomically (temp file, fsync, rename, directory fsync).
void atomic_write(const std::filesystem::path& path, std::string_view contents);

void to_json(Json& j, const EntryDetail& d);
void from_json(const Json& j, EntryDetail& d);
void to_json(Json& j, const StageCounts& c);
void from_json(const Json& j, StageCounts& c);
// `with_entries` controls whether the per-post backtrace is included.
Json run_to_json(const GenerationRun& run, bool with_entries);
void to_json(Json& j, const GenerationRun& r);
void from_json(const Json& j, GenerationRun& r);

}  // namespace bonsai::service

namespace bonsai {
template <>
struct EnumNames<service::Trigger> {
  static constexpr std::array<std::string_view, 2> kNames{"manual", "scheduled"};
};
template <>
struct EnumNames<service::RunStatus> {
  static constexpr std::array<std::string_view, 3> kNames{"ok", "degraded", "failed"};
};
}  // namespace bonsai
