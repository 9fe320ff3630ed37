#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "doctest.h"

#include "test_support.hpp"

using namespace testsupport;

namespace {

struct Outcome {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI with stdout captured and stderr discarded.
Outcome cli(const std::string& args) {
  std::string cmd = std::string(BONSAI_CLI_PATH) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  int status = ::pclose(pipe);
  o.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string f(const std::string& name) { return "'" + fixture(name).string() + "'"; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::string run_20(const std::string& extra = "") {
  return "run --config " + f("feed_20.json") + " --corpus " + f("corpus_20.jsonl") +
         " --mock-rules " + f("mock_rules.json") + " " + extra;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("run prints one line per ranked post and is deterministic") {
    auto a = cli(run_20());
    auto b = cli(run_20());
    REQUIRE(a.exit_code == 0);
    CHECK(a.out == b.out);
    auto ls = lines(a.out);
    REQUIRE(ls.size() == 17);
    CHECK(ls.back() == "# fetched=20 eligible=16 ranked=16");
    CHECK(ls[0].rfind("1\tat://", 0) == 0);
  }

  TEST_CASE("json output carries counts and entries") {
    auto r = cli(run_20("--json"));
    REQUIRE(r.exit_code == 0);
    auto j = bonsai::Json::parse(r.out);
    CHECK(j.at("counts").at("ranked") == 16);
    CHECK(j.at("entries").size() == 16);
    CHECK(j.at("excluded_uris").size() == 4);
  }

  TEST_CASE("custom weights: relevance only orders by curation score") {
    auto r = cli(run_20("--weights 1,0,0 --json"));
    REQUIRE(r.exit_code == 0);
    auto entries = bonsai::Json::parse(r.out).at("entries");
    for (std::size_t i = 1; i < entries.size(); ++i) {
      CHECK(entries[i - 1].at("score").get<int>() >= entries[i].at("score").get<int>());
    }
  }

  TEST_CASE("invalid weights are a usage error") {
    CHECK(cli(run_20("--weights 0.9,0,0")).exit_code == 2);
    CHECK(cli(run_20("--weights loud")).exit_code == 2);
    CHECK(cli("run --corpus " + f("corpus_20.jsonl")).exit_code == 2);
    CHECK(cli("no-such-command").exit_code == 2);
  }

  TEST_CASE("plan") {
    auto ok = cli("plan --description 'Cute cat photos, no politics' --catalog " + f("catalog.jsonl") +
                  " --mock-rules " + f("mock_rules.json"));
    REQUIRE(ok.exit_code == 0);
    auto draft = bonsai::Json::parse(ok.out);
    CHECK_FALSE(draft.at("sources").empty());
    CHECK(cli("plan --description ''").exit_code == 2);
    CHECK(cli("plan --description cats --lm-url http://127.0.0.1:1/v1").exit_code == 3);
  }

  TEST_CASE("admin commands against a config") {
    TempDir dir;
    auto cfg_path = dir.path() / "service.json";
    auto doc = bonsai::Json::parse(std::ifstream(fixture("service_config.json")));
    doc["data_dir"] = (dir.path() / "data").string();
    doc["adapter"]["corpus"] = fixture("corpus_20.jsonl").string();
    doc["catalog"] = fixture("catalog.jsonl").string();
    doc["lm"]["mock_rules"] = fixture("mock_rules.json").string();
    std::ofstream(cfg_path) << doc.dump();
    auto cfg = "--config '" + cfg_path.string() + "'";

    auto empty = cli("feeds list " + cfg + " --json");
    REQUIRE(empty.exit_code == 0);
    CHECK(bonsai::Json::parse(empty.out).empty());
    CHECK(cli("feeds generate --id nope " + cfg).exit_code == 4);
    REQUIRE(cli("feeds create --file " + f("feed_20.json") + " " + cfg).exit_code == 0);
    auto gen = cli("feeds generate --id cats20 --now 2025-06-01T12:00:00Z " + cfg);
    REQUIRE(gen.exit_code == 0);
    CHECK(bonsai::Json::parse(gen.out).at("counts").at("ranked") == 16);
    CHECK(cli("feeds deactivate --id cats20 " + cfg).exit_code == 0);
    auto shown = bonsai::Json::parse(cli("feeds show --id cats20 " + cfg).out);
    CHECK(shown.at("active") == false);
    CHECK(bonsai::Json::parse(cli("feeds list --json " + cfg).out).size() == 1);
  }

  TEST_CASE("serve rejects a bad config") {
    TempDir dir;
    auto cfg_path = dir.path() / "bad.json";
    std::ofstream(cfg_path) << R"({"prot": 1})";
    CHECK(cli("serve --config '" + cfg_path.string() + "'").exit_code == 2);
    CHECK(cli("serve --config /nonexistent/bonsai.json").exit_code == 2);
  }
}
