#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"

#include "bonsai/error.hpp"
#include "bonsai/store.hpp"
#include "test_support.hpp"

using namespace bonsai;
using namespace bonsai::service;
using namespace testsupport;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MaterializedFeed big_feed(std::size_t n) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> num(1, 300);
  MaterializedFeed f;
  f.feed_id = "big";
  f.generation_id = 7;
  f.generated_at = fixture_now();
  f.weights_used = PresetTable::defaults().trending;
  for (std::size_t i = 0; i < n; ++i) {
    f.entries.push_back({"at://did:plc:x/app.bsky.feed.post/" + std::to_string(i), num(rng) / 10.0});
  }
  return f;
}

FeedConfig config(const std::string& id) {
  FeedConfig c;
  c.feed_id = id;
  c.owner = "me.test";
  c.description = "cats";
  c.sources = {{SourceKind::kHashtag, "cats", "#cats", SourceOrigin::kUserAdded}};
  c.created_at = fixture_now();
  c.updated_at = fixture_now();
  return c;
}

std::size_t tmp_files(const std::filesystem::path& root) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.path().filename().string().find(".tmp-") != std::string::npos) ++n;
  }
  return n;
}

}  // namespace

TEST_SUITE("store") {
  TEST_CASE("materialized feed with 1000 entries round trips byte for byte") {
    TempDir a, b;
    FileStore sa(a.path()), sb(b.path());
    auto feed = big_feed(1000);
    sa.save_feed(feed);
    auto loaded = sa.load_feed("big");
    REQUIRE(loaded.has_value());
    CHECK(*loaded == feed);
    sb.save_feed(*loaded);
    CHECK(slurp(a.path() / "feeds" / "big.json") == slurp(b.path() / "feeds" / "big.json"));
    CHECK(tmp_files(a.path()) == 0);
  }

  TEST_CASE("configs are listed in id order and deleted with their data") {
    TempDir dir;
    FileStore s(dir.path());
    s.save_config(config("zeta"));
    s.save_config(config("alpha"));
    auto all = s.list_configs();
    REQUIRE(all.size() == 2);
    CHECK(all[0].feed_id == "alpha");
    CHECK(s.load_config("zeta") == config("zeta"));
    auto feed = big_feed(3);
    feed.feed_id = "zeta";
    s.save_feed(feed);
    s.delete_feed("zeta");
    CHECK_FALSE(s.load_config("zeta").has_value());
    CHECK_FALSE(s.load_feed("zeta").has_value());
    CHECK(s.list_configs().size() == 1);
  }

  TEST_CASE("pool, cache and runs round trip") {
    TempDir dir;
    FileStore s(dir.path());
    PostPool pool;
    pool.posts = {make_post("at://a", fixture_now(), 1, 2, 3, "hello")};
    pool.last_update = fixture_now();
    pool.sources_hash = "abc";
    s.save_pool("f", pool);
    auto back = s.load_pool("f");
    CHECK(back.posts == pool.posts);
    CHECK(back.last_update == pool.last_update);
    CHECK(back.sources_hash == "abc");
    CHECK(s.load_pool("missing").posts.empty());

    curation::CurationCache cache;
    cache.put("at://a", "h", {7, std::string("matched")});
    s.save_cache("f", cache);
    CHECK(s.load_cache("f").get("at://a", "h")->score == 7);

    GenerationRun run;
    run.feed_id = "f";
    run.generation_id = 2;
    run.trigger = Trigger::kScheduled;
    run.status = RunStatus::kDegraded;
    run.counts = {20, 20, 16, 4, 16};
    run.started_at = fixture_now();
    run.finished_at = fixture_now() + std::chrono::milliseconds(12);
    run.weights_used = PresetTable::defaults().balanced;
    run.entries.push_back({"at://a", 6, Bucket::kPrefer, std::nullopt, {3, 1, 1, 1.8}});
    s.save_runs("f", {run});
    auto runs = s.load_runs("f");
    REQUIRE(runs.size() == 1);
    CHECK(runs[0].status == RunStatus::kDegraded);
    CHECK(runs[0].counts.eligible == 16);
    REQUIRE(runs[0].entries.size() == 1);
    CHECK(runs[0].entries[0].ranks.borda_score == 1.8);
    CHECK_FALSE(run_to_json(run, false).contains("entries"));
  }

  TEST_CASE("invalid feed ids are rejected before touching the disk") {
    TempDir dir;
    FileStore s(dir.path());
    for (const char* bad : {"../escape", "", "a/b", "with space"}) {
      try {
        s.load_config(bad);
        FAIL("expected rejection");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kBadRequest);
      }
    }
  }

  TEST_CASE("corrupt files are storage errors; leftover temp files are cleaned") {
    TempDir dir;
    {
      FileStore s(dir.path());
      s.save_config(config("ok"));
    }
    std::ofstream(dir.path() / "configs" / "ok.json") << "{truncated";
    std::ofstream(dir.path() / "feeds" / "ok.json.tmp-123") << "partial";
    FileStore s(dir.path());
    CHECK(tmp_files(dir.path()) == 0);
    try {
      s.load_config("ok");
      FAIL("expected storage error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kStorage);
    }
  }

  TEST_CASE("atomic_write replaces the target") {
    TempDir dir;
    auto p = dir.path() / "x.json";
    atomic_write(p, "one");
    atomic_write(p, "two");
    CHECK(slurp(p) == "two");
    CHECK(tmp_files(dir.path()) == 0);
  }

  TEST_CASE("unusable root is a storage error") {
    TempDir dir;
    std::ofstream(dir.path() / "file") << "x";
    CHECK_THROWS_AS(FileStore(dir.path() / "file" / "sub"), Error);
  }
}
