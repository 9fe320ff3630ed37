#include <cstdlib>
#include <thread>

#include "bonsai/error.hpp"
#include "bonsai/lm.hpp"
#include "bonsai/log.hpp"
#include "httplib.h"

namespace bonsai::lm {

namespace {

// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_base_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfig, "lm base_url must include a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  auto path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

bool is_timeout(httplib::Error e) {
  return e == httplib::Error::ConnectionTimeout || e == httplib::Error::Read ||
         e == httplib::Error::Write;
}

}  // namespace

HttpProvider::HttpProvider(HttpProviderOptions options)
    : Provider(options.max_in_flight), options_(std::move(options)) {
  std::tie(origin_, path_prefix_) = split_base_url(options_.base_url);
}

Json HttpProvider::generate(const Request& request, const RepairContext* repair) {
  Json messages = Json::array();
  messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", request.user_payload.dump()}});
  if (repair) {
    messages.push_back({{"role", "assistant"}, {"content", repair->previous_output}});
    messages.push_back({{"role", "user"},
                        {"content", "Your previous reply was rejected: " + repair->error +
                                        ". Reply again with only a JSON object that satisfies "
                                        "the required schema."}});
  }
  Json body{{"model", options_.model},
            {"messages", messages},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens},
            {"response_format", {{"type", "json_object"}}}};

  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
  const auto payload = body.dump();
  const auto path = path_prefix_ + "/chat/completions";

  ErrorCode last_code = ErrorCode::kProviderUnreachable;
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      auto delay = options_.backoff_base * (1 << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }
    httplib::Client client(origin_);
    client.set_connection_timeout(seconds.count(), usec.count());
    client.set_read_timeout(seconds.count(), usec.count());
    client.set_write_timeout(seconds.count(), usec.count());
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_code = is_timeout(res.error()) ? ErrorCode::kTimeout : ErrorCode::kProviderUnreachable;
      last_error = httplib::to_string(res.error());
      log::warn("lm request failed", {{"attempt", attempt + 1}, {"error", last_error}});
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_code = ErrorCode::kProviderUnreachable;
      last_error = "HTTP " + std::to_string(res->status);
      log::warn("lm request failed", {{"attempt", attempt + 1}, {"status", res->status}});
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kProviderUnreachable,
                  "lm provider returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    // Anything that is not a JSON object is returned as a string so the
    // schema check rejects it and triggers the repair prompt.
    try {
      auto envelope = Json::parse(res->body);
      const auto& content = envelope.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) return content;
      try {
        return Json::parse(content.get<std::string>());
      } catch (const Json::parse_error&) {
        return content;
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kProviderUnreachable,
                  std::string("malformed chat-completions envelope: ") + e.what());
    }
  }
  throw Error(last_code, "lm provider failed after " + std::to_string(options_.max_retries + 1) +
                             " attempts: " + last_error);
}

}  // namespace bonsai::lm
