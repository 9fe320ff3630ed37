// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/ranker.hpp"
#include "service_harness.hpp"

using namespace bonsai;
using namespace testsupport;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
  void expect(bool cond, const std::string& why) {
    if (!cond) fail(why);
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << std::fixed << v;
  return ss.str();
}

struct Outcome {
  int exit_code = -1;
  std::string out;
};

Outcome run_cli(const std::string& args) {
  std::string cmd = std::string(BONSAI_CLI_PATH) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  int status = ::pclose(pipe);
  o.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::vector<std::string> uris_of(const std::vector<ranking::RankedEntry>& r) {
  std::vector<std::string> out;
  for (const auto& e : r) out.push_back(e.uri);
  return out;
}

std::vector<std::string> walk(service::FeedService& s, const std::string& uri, std::size_t limit) {
  std::vector<std::string> out;
  std::optional<std::string> cursor;
  for (int guard = 0; guard < 10000; ++guard) {
    auto page = s.skeleton(uri, limit, cursor ? std::optional<std::string_view>(*cursor) : std::nullopt);
    out.insert(out.end(), page.uris.begin(), page.uris.end());
    if (!page.cursor) break;
    cursor = page.cursor;
  }
  return out;
}

// ---------------------------------------------------------------------------

Check borda_oracle() {
  Check c;
  auto t0 = Clock::now();
  std::mt19937_64 rng(20250601);
  auto triples = simplex_tenths();
  std::size_t compared = 0;
  for (int i = 0; i < 600; ++i) {
    auto inst = random_instance(rng, 6);
    for (const auto& w : triples) {
      auto diff = compare_with_oracle(inst, w);
      ++compared;
      if (!diff.empty()) c.fail("instance " + std::to_string(i) + ": " + diff);
    }
  }
  double secs = seconds_since(t0);
  c.expect(secs < 60.0, "took " + fmt(secs) + " s");
  if (c.ok) c.detail = "600 instances x 66 weight triples = " + std::to_string(compared) +
                       " comparisons in " + fmt(secs) + " s";
  return c;
}

Check worked_example() {
  Check c;
  auto a = make_post("a", at_ms(2000), 1);
  auto b = make_post("b", at_ms(1000), 6);
  auto p = make_post("c", at_ms(3000), 9);
  std::vector<Post> all{a, b, p};
  std::vector<CuratedPost> eligible{curated(a, 9), curated(b, 6), curated(p, 4)};
  auto r = ranking::rank_feed(all, eligible, PresetTable::defaults().balanced);
  c.expect(uris_of(r) == std::vector<std::string>{"c", "a", "b"}, "order differs");
  if (r.size() == 3) {
    c.expect(r[0].ranks.borda_score == 1.8 && r[1].ranks.borda_score == 1.9 &&
                 r[2].ranks.borda_score == 2.3,
             "scores differ");
  }
  // Same instance through the oracle.
  std::vector<oracle::Item> items{{"a", 2000, 1, 0, 0, 9}, {"b", 1000, 6, 0, 0, 6}, {"c", 3000, 9, 0, 0, 4}};
  auto o = oracle::rank(items, 4, 3, 3);
  c.expect(o.size() == 3 && o[0].uri == "c" && o[0].scaled_score == 18 && o[1].scaled_score == 19 &&
               o[2].scaled_score == 23,
           "oracle disagrees with the hand computation");
  if (c.ok) c.detail = "[c, a, b] with 1.8 / 1.9 / 2.3";
  return c;
}

Check degenerate_weights() {
  Check c;
  std::mt19937_64 rng(77);
  auto order_by = [](std::vector<CuratedPost> e, auto key) {
    std::stable_sort(e.begin(), e.end(), [&](const CuratedPost& x, const CuratedPost& y) {
      auto kx = key(x), ky = key(y);
      if (kx != ky) return kx > ky;
      if (x.post.created_at != y.post.created_at) return x.post.created_at > y.post.created_at;
      return x.post.uri < y.post.uri;
    });
    std::vector<std::string> out;
    for (const auto& p : e) out.push_back(p.post.uri);
    return out;
  };
  for (int i = 0; i < 100; ++i) {
    auto inst = random_instance(rng, 12);
    auto rel = uris_of(ranking::rank_feed(inst.candidates, inst.eligible, {Rational(1), Rational(0), Rational(0)}));
    c.expect(rel == order_by(inst.eligible, [](const CuratedPost& p) { return std::int64_t{p.score}; }),
             "relevance-only order differs on instance " + std::to_string(i));
    auto rec = uris_of(ranking::rank_feed(inst.candidates, inst.eligible, {Rational(0), Rational(0), Rational(1)}));
    c.expect(rec == order_by(inst.eligible,
                             [](const CuratedPost& p) { return p.post.created_at.time_since_epoch().count(); }),
             "recency-only order differs on instance " + std::to_string(i));
    auto eng = uris_of(ranking::rank_feed(inst.candidates, inst.eligible, {Rational(0), Rational(1), Rational(0)}));
    c.expect(eng == order_by(inst.eligible,
                             [](const CuratedPost& p) { return p.post.likes + 3 * p.post.reposts + 2 * p.post.replies; }),
             "engagement-only order differs on instance " + std::to_string(i));
  }
  if (c.ok) c.detail = "100 instances for each of (1,0,0), (0,0,1), (0,1,0)";
  return c;
}

Check engagement_formula() {
  Check c;
  std::mt19937_64 rng(10'000);
  std::uniform_int_distribution<std::int64_t> d(0, 1'000'000);
  for (int i = 0; i < 10'000; ++i) {
    auto l = d(rng), r = d(rng), p = d(rng);
    auto post = make_post("x", at_ms(0), l, r, p);
    if (ranking::engagement_score(post) != l + 3 * r + 2 * p) {
      c.fail("mismatch at likes=" + std::to_string(l));
      break;
    }
  }
  if (c.ok) c.detail = "10000 random (likes, reposts, replies) triples";
  return c;
}

Check filter_soundness() {
  Check c;
  ServiceHarness h;
  auto cfg = h.create("feed_20.json");
  auto run = h.service->generate(cfg.feed_id, service::Trigger::kManual, cfg.owner);
  c.expect(run.counts.fetched == 20, "fetched=" + std::to_string(run.counts.fetched));
  c.expect(run.counts.eligible == 16, "eligible=" + std::to_string(run.counts.eligible));
  c.expect(run.counts.ranked == 16, "ranked=" + std::to_string(run.counts.ranked));

  // The excluded set comes from the fixture text, not from the service.
  std::set<std::string> never;
  std::ifstream in(fixture("corpus_20.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    auto post = Json::parse(line).at("post").get<Post>();
    auto lower = util::to_lower(post.text);
    if (lower.find("politics") != std::string::npos || lower.find("election") != std::string::npos)
      never.insert(post.uri);
  }
  c.expect(never.size() == 4, "fixture should hold 4 never-keyword posts");
  auto uri = service::feed_uri(h.service->options().service_did, cfg.feed_id);
  std::size_t pages_checked = 0;
  for (std::size_t limit = 1; limit <= 20; ++limit) {
    auto all = walk(*h.service, uri, limit);
    ++pages_checked;
    c.expect(all.size() == 16, "walk with limit " + std::to_string(limit) + " returned " +
                                   std::to_string(all.size()));
    for (const auto& u : all) c.expect(!never.count(u), "excluded uri served: " + u);
  }
  if (c.ok)
    c.detail = "fetched=20 eligible=16 ranked=16; no excluded uri in walks with limit 1..20";
  return c;
}

Check bucket_partition() {
  Check c;
  const std::array<Bucket, 11> want{Bucket::kNever,         Bucket::kShowLess,       Bucket::kShowLess,
                                    Bucket::kUnspecified,   Bucket::kUnspecified,    Bucket::kPrefer,
                                    Bucket::kPrefer,        Bucket::kPrefer,         Bucket::kStronglyPrefer,
                                    Bucket::kStronglyPrefer, Bucket::kStronglyPrefer};
  for (int s = 0; s <= 10; ++s) {
    c.expect(bucket_for_score(s) == want[static_cast<std::size_t>(s)], "score " + std::to_string(s));
  }
  for (int s : {-1, 11}) {
    try {
      bucket_for_score(s);
      c.fail("score " + std::to_string(s) + " accepted");
    } catch (const Error&) {
    }
  }
  if (c.ok) c.detail = "0 never, 1-2 show_less, 3-4 unspecified, 5-7 prefer, 8-10 strongly_prefer";
  return c;
}

Check sourcing_windows() {
  Check c;
  auto adapter = sourcing::FixtureAdapter::load(fixture("source_150.jsonl"));
  sourcing::Sourcer sourcer(adapter);
  auto now = fixture_now();
  auto since = now - std::chrono::hours(96);

  std::map<std::string, std::vector<Post>> raw;
  std::ifstream in(fixture("source_150.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    auto j = Json::parse(line);
    raw[j.at("source_identifier")].push_back(j.at("post").get<Post>());
  }
  auto config_for = [](const std::string& id) {
    FeedConfig cfg;
    cfg.description = "x";
    cfg.sources = {{SourceKind::kFeed, id, id, SourceOrigin::kUserAdded}};
    return cfg;
  };
  auto newest_in_window = [&](std::vector<Post> posts, Timestamp lo, bool inclusive) {
    std::erase_if(posts, [&](const Post& p) {
      return !((inclusive ? p.created_at >= lo : p.created_at > lo) && p.created_at <= now);
    });
    std::sort(posts.begin(), posts.end(), [](const Post& a, const Post& b) {
      if (a.created_at != b.created_at) return a.created_at > b.created_at;
      return a.uri < b.uri;
    });
    if (posts.size() > 100) posts.resize(100);
    std::set<std::string> out;
    for (const auto& p : posts) out.insert(p.uri);
    return out;
  };
  auto got_set = [](const std::vector<Post>& posts) {
    std::set<std::string> out;
    for (const auto& p : posts) out.insert(p.uri);
    return out;
  };

  for (const auto& id : {"window150", "cap150"}) {
    c.expect(raw[id].size() == 150, std::string(id) + " fixture size");
    auto res = sourcer.initial_fetch(config_for(id), now);
    c.expect(res.posts.size() == 100, std::string(id) + " returned " + std::to_string(res.posts.size()));
    c.expect(got_set(res.posts) == newest_in_window(raw[id], since, true),
             std::string(id) + " is not the newest 100 in the window");
  }
  auto w = sourcer.initial_fetch(config_for("window150"), now);
  auto got = got_set(w.posts);
  bool boundary = false, outside = false;
  for (const auto& p : raw["window150"]) {
    if (p.created_at == since) boundary = got.count(p.uri) > 0;
    if (p.created_at == since - std::chrono::milliseconds(1)) outside = got.count(p.uri) > 0;
  }
  c.expect(boundary, "boundary post at now-96h missing");
  c.expect(!outside, "post at now-96h-1ms included");

  auto last = now - std::chrono::hours(30);
  std::unordered_set<std::string> cached;
  for (const auto& p : raw["window150"]) {
    if (p.created_at > last && cached.size() < 5) cached.insert(p.uri);
  }
  auto inc = sourcer.incremental_fetch(config_for("window150"), last, now, cached);
  auto want = newest_in_window(raw["window150"], last, false);
  for (const auto& u : cached) want.erase(u);
  c.expect(got_set(inc.posts) == want, "incremental set differs");
  if (c.ok)
    c.detail = "newest 100 of 150 in window; boundary kept; incremental returned " +
               std::to_string(inc.posts.size()) + " posts in (last_update, now] minus 5 cached";
  return c;
}

Check pagination() {
  Check c;
  ServiceHarness h;
  auto cfg = h.create("feed_7.json");
  h.service->generate(cfg.feed_id, service::Trigger::kManual, cfg.owner);
  auto uri = service::feed_uri(h.service->options().service_did, cfg.feed_id);
  auto published = h.service->published(cfg.feed_id);
  std::vector<std::string> materialized;
  for (const auto& e : published->entries) materialized.push_back(e.uri);
  c.expect(materialized.size() == 7, "materialized size " + std::to_string(materialized.size()));

  std::vector<std::string> walked;
  std::vector<std::string> cursors;
  std::optional<std::string> cursor;
  for (int guard = 0; guard < 100; ++guard) {
    auto page = h.service->skeleton(uri, 2, cursor ? std::optional<std::string_view>(*cursor) : std::nullopt);
    c.expect(page.uris.size() <= 2, "page larger than limit");
    walked.insert(walked.end(), page.uris.begin(), page.uris.end());
    if (!page.cursor) break;
    cursors.push_back(*page.cursor);
    cursor = page.cursor;
  }
  c.expect(walked == materialized, "walk does not reproduce the materialized order");
  c.expect(cursors.size() == 3, "expected 4 pages");

  h.advance(std::chrono::minutes(5));
  h.service->generate(cfg.feed_id, service::Trigger::kManual, cfg.owner);
  auto restarted = h.service->skeleton(uri, 2, std::string_view(cursors[1]));
  auto fresh = h.service->published(cfg.feed_id);
  c.expect(fresh->generation_id == 2, "second generation not published");
  c.expect(restarted.uris.size() == 2 && restarted.uris[0] == fresh->entries[0].uri &&
               restarted.uris[1] == fresh->entries[1].uri,
           "stale cursor did not restart at offset 0");
  if (c.ok) c.detail = "4 pages reproduce 7 entries; cursor " + cursors[1] + " restarts on generation 2";
  return c;
}

// Provider that reports its first call through a pipe, then stalls.
class SignallingProvider : public lm::MockProvider {
 public:
  SignallingProvider(lm::MockRules rules, int fd) : MockProvider(std::move(rules)), fd_(fd) {}

 protected:
  Json generate(const lm::Request& r, const lm::RepairContext* repair) override {
    if (!signalled_.exchange(true)) {
      char b = 'x';
      if (::write(fd_, &b, 1) != 1) std::abort();
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    return MockProvider::generate(r, repair);
  }

 private:
  int fd_;
  std::atomic<bool> signalled_{false};
};

std::unique_ptr<service::FeedService> open_service(const std::filesystem::path& root,
                                                   std::shared_ptr<lm::Provider> provider) {
  auto store = std::make_shared<service::FileStore>(root);
  auto adapter = fixture_adapter({"corpus_20.jsonl", "corpus_7.jsonl"});
  auto s = std::make_unique<service::FeedService>(store, std::move(provider), nullptr, adapter);
  s->set_clock([] { return fixture_now(); });
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Check crash_recovery() {
  Check c;
  TempDir dir;
  auto root = dir.path() / "data";
  auto rules = lm::load_mock_rules(fixture("mock_rules.json"));
  std::vector<std::string> before;
  std::string feed_file_before;
  const auto feed_path = root / "feeds" / "cats20.json";
  {
    auto s = open_service(root, std::make_shared<lm::MockProvider>(rules));
    auto cfg = fixture_config("feed_20.json");
    s->create_feed(cfg, cfg.owner);
    s->generate("cats20", service::Trigger::kManual, cfg.owner);
    // Change the intent so the next generation differs from the first.
    cfg.ranking = RankingStyle::of(RankingPreset::kTrending);
    cfg.include_prompts.pop_back();
    s->update_feed("cats20", cfg, cfg.owner);
    before = walk(*s, service::feed_uri(s->options().service_did, "cats20"), 100);
    feed_file_before = slurp(feed_path);
  }

  int fds[2];
  if (::pipe(fds) != 0) {
    c.fail("pipe failed");
    return c;
  }
  std::cout.flush();
  pid_t pid = ::fork();
  if (pid == 0) {
    ::close(fds[0]);
    try {
      auto s = open_service(root, std::make_shared<SignallingProvider>(rules, fds[1]));
      s->generate("cats20", service::Trigger::kManual);
    } catch (...) {
    }
    ::_exit(0);
  }
  ::close(fds[1]);
  char b = 0;
  bool started = ::read(fds[0], &b, 1) == 1;
  ::close(fds[0]);
  c.expect(started, "child never reached curation");
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  c.expect(WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL, "child finished before the kill");

  auto s = open_service(root, std::make_shared<lm::MockProvider>(rules));
  auto served = s->published("cats20");
  c.expect(served && served->generation_id == 1, "restart does not serve generation 1");
  auto after = walk(*s, service::feed_uri(s->options().service_did, "cats20"), 100);
  c.expect(after == before, "served order changed after the crash");
  c.expect(slurp(feed_path) == feed_file_before, "feed file changed on disk");
  auto run = s->generate("cats20", service::Trigger::kManual);
  c.expect(run.status == service::RunStatus::kOk, "service does not recover after the crash");
  if (c.ok)
    c.detail = "SIGKILL mid-generation; restart serves generation 1 (" + std::to_string(after.size()) +
               " posts) byte-identical, next run gets generation " + std::to_string(run.generation_id);
  return c;
}

Check determinism() {
  Check c;
  auto args = "run --config " + q(fixture("feed_20.json")) + " --corpus " + q(fixture("corpus_20.jsonl")) +
              " --mock-rules " + q(fixture("mock_rules.json"));
  auto a = run_cli(args);
  auto b = run_cli(args);
  c.expect(a.exit_code == 0 && b.exit_code == 0, "non-zero exit");
  c.expect(!a.out.empty() && a.out == b.out, "feed_20 outputs differ");
  auto desc = "run --description 'Cute cat photos and tuxedo cats, some dog pictures, no politics' --catalog " +
              q(fixture("catalog.jsonl")) + " --corpus " + q(fixture("corpus_500.jsonl")) + " --mock-rules " +
              q(fixture("mock_rules.json")) + " --json";
  auto x = run_cli(desc);
  auto y = run_cli(desc);
  c.expect(x.exit_code == 0 && y.exit_code == 0, "non-zero exit on planned run");
  c.expect(!x.out.empty() && x.out == y.out, "planned 500-post outputs differ");
  if (c.ok)
    c.detail = "byte-identical stdout: " + std::to_string(a.out.size()) + " and " +
               std::to_string(x.out.size()) + " bytes";
  return c;
}

Check end_to_end() {
  Check c;
  auto args = "run --description 'Cute cat photos and tuxedo cats, some dog pictures, no politics' --catalog " +
              q(fixture("catalog.jsonl")) + " --corpus " + q(fixture("corpus_500.jsonl")) + " --mock-rules " +
              q(fixture("mock_rules.json")) + " --json";
  std::size_t corpus_lines = 0;
  {
    std::ifstream in(fixture("corpus_500.jsonl"));
    std::string line;
    while (std::getline(in, line)) ++corpus_lines;
  }
  c.expect(corpus_lines == 500, "corpus has " + std::to_string(corpus_lines) + " posts");
  auto t0 = Clock::now();
  auto r = run_cli(args);
  double secs = seconds_since(t0);
  c.expect(r.exit_code == 0, "exit code " + std::to_string(r.exit_code));
  c.expect(secs < 5.0, "took " + fmt(secs) + " s");
  Json j;
  try {
    j = Json::parse(r.out);
  } catch (const std::exception&) {
    c.fail("output is not JSON");
    return c;
  }
  auto ranked = j.at("counts").at("ranked").get<std::size_t>();
  c.expect(ranked > 0, "nothing ranked");
  if (c.ok)
    c.detail = "plan->source->curate->rank in " + fmt(secs) + " s; fetched=" +
               j.at("counts").at("fetched").dump() + " ranked=" + std::to_string(ranked);
  return c;
}

}  // namespace

int main() {
  log::set_level(log::Level::kOff);
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
      {"borda-oracle-equivalence", borda_oracle},
      {"worked-example", worked_example},
      {"degenerate-weights", degenerate_weights},
      {"engagement-formula", engagement_formula},
      {"curation-filter-soundness", filter_soundness},
      {"bucket-partition", bucket_partition},
      {"sourcing-windows", sourcing_windows},
      {"skeleton-pagination", pagination},
      {"crash-recovery", crash_recovery},
      {"determinism", determinism},
      {"end-to-end-500", end_to_end},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.fail(std::string("exception: ") + e.what());
    }
    std::cout << (c.ok ? "PASS " : "FAIL ") << name << ": " << c.detail << std::endl;
    if (!c.ok) ++failed;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
