#include "bonsai/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/util.hpp"

namespace bonsai::service {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void throw_io(const std::string& what, const fs::path& path) {
  throw Error(ErrorCode::kStorage, what + " " + path.string() + ": " + std::strerror(errno));
}

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_io("write", path);
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void fsync_dir(const fs::path& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

// Feed ids come from clients; keep them from escaping the data directory.
void check_feed_id(const std::string& feed_id) {
  if (feed_id.empty() || feed_id.size() > 128) {
    throw Error(ErrorCode::kBadRequest, "invalid feed id");
  }
  for (char c : feed_id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '-' || c == '_';
    if (!ok) throw Error(ErrorCode::kBadRequest, "invalid feed id: " + feed_id);
  }
}

constexpr std::array<std::string_view, 5> kKinds{"configs", "feeds", "pools", "cache", "runs"};

}  // namespace

void atomic_write(const fs::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp-" + util::random_token(6);
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw_io("open", tmp);
  try {
    write_all(fd, contents, tmp);
    if (::fsync(fd) != 0) throw_io("fsync", tmp);
  } catch (...) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    int saved = errno;
    ::unlink(tmp.c_str());
    errno = saved;
    throw_io("rename", path);
  }
  fsync_dir(path.parent_path());
}

FileStore::FileStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  for (auto kind : kKinds) {
    fs::create_directories(root_ / kind, ec);
    if (ec) {
      throw Error(ErrorCode::kStorage,
                  "cannot create " + (root_ / kind).string() + ": " + ec.message());
    }
  }
  // Leftovers from writes interrupted by a crash.
  for (auto kind : kKinds) {
    for (const auto& e : fs::directory_iterator(root_ / kind, ec)) {
      if (e.path().filename().string().find(".tmp-") != std::string::npos) {
        fs::remove(e.path(), ec);
      }
    }
  }
}

fs::path FileStore::path_for(std::string_view kind, const std::string& feed_id) const {
  check_feed_id(feed_id);
  return root_ / kind / (feed_id + ".json");
}

std::optional<Json> FileStore::read_json(const fs::path& path) const {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kStorage, "corrupt " + path.string() + ": " + e.what());
  }
}

void FileStore::write_json(const fs::path& path, const Json& doc) const {
  atomic_write(path, doc.dump());
}

std::vector<FeedConfig> FileStore::list_configs() {
  std::vector<FeedConfig> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(root_ / "configs", ec)) {
    if (e.path().extension() != ".json") continue;
    auto id = e.path().stem().string();
    try {
      if (auto c = load_config(id)) out.push_back(std::move(*c));
    } catch (const std::exception& ex) {
      log::error("skipping unreadable config", {{"feed_id", id}, {"detail", ex.what()}});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const FeedConfig& a, const FeedConfig& b) { return a.feed_id < b.feed_id; });
  return out;
}

std::optional<FeedConfig> FileStore::load_config(const std::string& feed_id) {
  auto j = read_json(path_for("configs", feed_id));
  if (!j) return std::nullopt;
  return j->get<FeedConfig>();
}

void FileStore::save_config(const FeedConfig& config) {
  write_json(path_for("configs", config.feed_id), config);
}

void FileStore::delete_feed(const std::string& feed_id) {
  for (auto kind : kKinds) {
    std::error_code ec;
    fs::remove(path_for(kind, feed_id), ec);
    if (ec) throw Error(ErrorCode::kStorage, "cannot delete " + feed_id + ": " + ec.message());
  }
}

std::optional<MaterializedFeed> FileStore::load_feed(const std::string& feed_id) {
  auto j = read_json(path_for("feeds", feed_id));
  if (!j) return std::nullopt;
  return j->get<MaterializedFeed>();
}

void FileStore::save_feed(const MaterializedFeed& feed) {
  write_json(path_for("feeds", feed.feed_id), feed);
}

PostPool FileStore::load_pool(const std::string& feed_id) {
  PostPool pool;
  auto j = read_json(path_for("pools", feed_id));
  if (!j) return pool;
  j->at("posts").get_to(pool.posts);
  if (auto it = j->find("last_update"); it != j->end() && !it->is_null()) {
    pool.last_update = it->get<Timestamp>();
  }
  pool.sources_hash = j->value("sources_hash", "");
  return pool;
}

void FileStore::save_pool(const std::string& feed_id, const PostPool& pool) {
  Json j{{"posts", pool.posts}, {"sources_hash", pool.sources_hash}};
  j["last_update"] = pool.last_update ? Json(*pool.last_update) : Json();
  write_json(path_for("pools", feed_id), j);
}

curation::CurationCache FileStore::load_cache(const std::string& feed_id) {
  auto j = read_json(path_for("cache", feed_id));
  if (!j) return {};
  return curation::CurationCache::from_json(*j);
}

void FileStore::save_cache(const std::string& feed_id, const curation::CurationCache& cache) {
  write_json(path_for("cache", feed_id), cache.to_json());
}

std::vector<GenerationRun> FileStore::load_runs(const std::string& feed_id) {
  auto j = read_json(path_for("runs", feed_id));
  if (!j) return {};
  return j->get<std::vector<GenerationRun>>();
}

void FileStore::save_runs(const std::string& feed_id, const std::vector<GenerationRun>& runs) {
  write_json(path_for("runs", feed_id), Json(runs));
}

// ---------------------------------------------------------------------------

void to_json(Json& j, const EntryDetail& d) {
  j = Json{{"uri", d.uri}, {"score", d.score}, {"bucket", d.bucket}, {"ranks", d.ranks}};
  j["fetched_via"] = d.fetched_via ? Json(*d.fetched_via) : Json();
}

void from_json(const Json& j, EntryDetail& d) {
  j.at("uri").get_to(d.uri);
  j.at("score").get_to(d.score);
  j.at("bucket").get_to(d.bucket);
  j.at("ranks").get_to(d.ranks);
  d.fetched_via.reset();
  if (auto it = j.find("fetched_via"); it != j.end() && !it->is_null()) {
    d.fetched_via = it->get<Source>();
  }
}

void to_json(Json& j, const StageCounts& c) {
  j = Json{{"fetched", c.fetched},
           {"candidates", c.candidates},
           {"eligible", c.eligible},
           {"excluded", c.excluded},
           {"ranked", c.ranked}};
}

void from_json(const Json& j, StageCounts& c) {
  c.fetched = j.value("fetched", std::size_t{0});
  c.candidates = j.value("candidates", std::size_t{0});
  c.eligible = j.value("eligible", std::size_t{0});
  c.excluded = j.value("excluded", std::size_t{0});
  c.ranked = j.value("ranked", std::size_t{0});
}

Json run_to_json(const GenerationRun& r, bool with_entries) {
  Json j{{"feed_id", r.feed_id},
         {"generation_id", r.generation_id},
         {"trigger", r.trigger},
         {"status", r.status},
         {"counts", r.counts},
         {"fetch_report", r.fetch_report},
         {"curation_report", r.curation_report},
         {"started_at", r.started_at},
         {"finished_at", r.finished_at},
         {"error", r.error}};
  j["weights_used"] = r.weights_used ? Json(*r.weights_used) : Json();
  if (with_entries) j["entries"] = r.entries;
  return j;
}

void to_json(Json& j, const GenerationRun& r) { j = run_to_json(r, true); }

void from_json(const Json& j, GenerationRun& r) {
  r = GenerationRun{};
  j.at("feed_id").get_to(r.feed_id);
  j.at("generation_id").get_to(r.generation_id);
  j.at("trigger").get_to(r.trigger);
  j.at("status").get_to(r.status);
  j.at("counts").get_to(r.counts);
  j.at("fetch_report").get_to(r.fetch_report);
  j.at("curation_report").get_to(r.curation_report);
  j.at("started_at").get_to(r.started_at);
  j.at("finished_at").get_to(r.finished_at);
  r.error = j.value("error", "");
  if (auto it = j.find("weights_used"); it != j.end() && !it->is_null()) {
    r.weights_used = it->get<RankingWeights>();
  }
  if (auto it = j.find("entries"); it != j.end()) it->get_to(r.entries);
}

}  // namespace bonsai::service
