#include <atomic>
#include <cstdlib>
#include <thread>

#include "doctest.h"

#include "bonsai/error.hpp"
#include "bonsai/lm.hpp"
#include "server_thread.hpp"

using namespace bonsai;
using namespace bonsai::lm;
using testsupport::ServerThread;

namespace {

std::string envelope(const std::string& content) {
  return Json{{"choices", Json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}
      .dump();
}

Request curate_request() {
  Request r;
  r.task = Task::kCurate;
  r.system_prompt = "score";
  r.user_payload = {{"post", {{"uri", "at://p"}, {"author", "a"}, {"text", "cats"}, {"media", Json::array()}}},
                    {"include_prompts", Json::array()},
                    {"limit_prompts", Json::array()}};
  return r;
}

HttpProviderOptions options_for(const ServerThread& server) {
  HttpProviderOptions o;
  o.base_url = server.url() + "/v1";
  o.model = "test-model";
  o.api_key_env = "BONSAI_TEST_LM_KEY";
  o.timeout = std::chrono::milliseconds(1000);
  o.max_retries = 2;
  o.backoff_base = std::chrono::milliseconds(5);
  return o;
}

ErrorCode code_of(HttpProvider& p) {
  try {
    p.complete(curate_request());
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kDomain;
}

}  // namespace

TEST_SUITE("lm_http") {
  TEST_CASE("posts a chat-completions request and parses the reply") {
    ::setenv("BONSAI_TEST_LM_KEY", "sekrit", 1);
    httplib::Server server;
    Json seen;
    std::string auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      seen = Json::parse(req.body);
      auth = req.get_header_value("Authorization");
      res.set_content(envelope(R"({"include": true, "score": 8})"), "application/json");
    });
    ServerThread thread(server);
    HttpProvider p(options_for(thread));
    auto out = p.complete(curate_request());
    CHECK(out.content.at("score") == 8);
    CHECK(auth == "Bearer sekrit");
    CHECK(seen.at("model") == "test-model");
    REQUIRE(seen.at("messages").size() == 2);
    CHECK(seen.at("messages")[0].at("role") == "system");
    CHECK(Json::parse(seen.at("messages")[1].at("content").get<std::string>()).contains("post"));
    ::unsetenv("BONSAI_TEST_LM_KEY");
  }

  TEST_CASE("retries server errors with backoff") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      if (++calls == 1) {
        res.status = 503;
        return;
      }
      res.set_content(envelope(R"({"include": true, "score": 5})"), "application/json");
    });
    ServerThread thread(server);
    HttpProvider p(options_for(thread));
    CHECK(p.complete(curate_request()).content.at("score") == 5);
    CHECK(calls == 2);
  }

  TEST_CASE("non-JSON content goes through the repair prompt") {
    httplib::Server server;
    std::atomic<int> calls{0};
    Json second;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      if (++calls == 1) {
        res.set_content(envelope("I think this one is a 7"), "application/json");
        return;
      }
      second = Json::parse(req.body);
      res.set_content(envelope(R"({"include": true, "score": 7})"), "application/json");
    });
    ServerThread thread(server);
    HttpProvider p(options_for(thread));
    auto out = p.complete(curate_request());
    CHECK(out.content.at("score") == 7);
    CHECK(calls == 2);
    REQUIRE(second.at("messages").size() == 4);
    CHECK(second.at("messages")[2].at("content") == "I think this one is a 7");
  }

  TEST_CASE("persistent 5xx becomes PROVIDER_UNREACHABLE after all retries") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 500;
    });
    ServerThread thread(server);
    HttpProvider p(options_for(thread));
    CHECK(code_of(p) == ErrorCode::kProviderUnreachable);
    CHECK(calls == 3);
  }

  TEST_CASE("client errors are not retried") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 401;
    });
    ServerThread thread(server);
    HttpProvider p(options_for(thread));
    CHECK(code_of(p) == ErrorCode::kProviderUnreachable);
    CHECK(calls == 1);
  }

  TEST_CASE("slow server maps to TIMEOUT") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      res.set_content(envelope(R"({"include": true, "score": 5})"), "application/json");
    });
    ServerThread thread(server);
    auto o = options_for(thread);
    o.timeout = std::chrono::milliseconds(150);
    o.max_retries = 0;
    HttpProvider p(o);
    CHECK(code_of(p) == ErrorCode::kTimeout);
  }

  TEST_CASE("unreachable endpoint maps to PROVIDER_UNREACHABLE") {
    HttpProviderOptions o;
    o.base_url = "http://127.0.0.1:1/v1";
    o.max_retries = 1;
    o.backoff_base = std::chrono::milliseconds(1);
    o.timeout = std::chrono::milliseconds(500);
    HttpProvider p(o);
    CHECK(code_of(p) == ErrorCode::kProviderUnreachable);
  }

  TEST_CASE("base url without a scheme is a config error") {
    HttpProviderOptions o;
    o.base_url = "localhost:8080/v1";
    CHECK_THROWS_AS(HttpProvider{o}, Error);
  }
}
