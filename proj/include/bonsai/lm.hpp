#pragma once

// Language-model provider abstraction.
//
// Every provider returns structured JSON validated against the task's
// response schema. An invalid generation gets exactly one repair re-prompt
// that echoes the validation error; a second invalid generation surfaces as
// SCHEMA_VIOLATION. Callers never see partially valid output.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "bonsai/error.hpp"
#include "bonsai/model.hpp"

namespace bonsai::lm {

enum class Task { kPlan, kSuggestSources, kCurate };

std::string_view task_name(Task task);

struct Request {
  Task task = Task::kCurate;
  std::string system_prompt;
  Json user_payload = Json::object();
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

struct Response {
  Json content;
  Json provider_meta = Json::object();
};

// Both return a human-readable reason on failure.
std::optional<std::string> validate_request(const Request& request);
std::optional<std::string> validate_response(Task task, const Json& content);

// Previous invalid output and why it was rejected, passed to the repair call.
struct RepairContext {
  std::string previous_output;
  std::string error;
};

class Provider {
 public:
  explicit Provider(std::ptrdiff_t max_in_flight = 4);
  virtual ~Provider() = default;
  Provider(const Provider&) = delete;
  Provider& operator=(const Provider&) = delete;

  // Throws Error with kProviderUnreachable, kSchemaViolation or kTimeout.
  // Safe to call concurrently; at most `max_in_flight` calls dispatch at once.
  Response complete(const Request& request);

 protected:
  // One raw generation. May throw Error(kProviderUnreachable | kTimeout).
  virtual Json generate(const Request& request, const RepairContext* repair) = 0;

 private:
  std::counting_semaphore<1024> slots_;
};

// ---------------------------------------------------------------------------
// Deterministic mock driven by a keyword rule table.

struct CurateRule {
  std::string keyword;
  int score = 3;
};

struct PlanRule {
  std::string keyword;
  std::vector<std::string> search_terms;  // catalog queries
  std::vector<Source> sources;            // proposed sources of any kind
};

struct MockRules {
  std::vector<CurateRule> curate;
  std::vector<PlanRule> plan;
  int default_score = 3;
};

// Duplicate keywords (case-insensitive): the last entry wins, with a warning.
MockRules parse_mock_rules(const Json& doc);
// Empty or whitespace-only file yields an empty table. Throws Error(kConfig).
MockRules load_mock_rules(const std::filesystem::path& path);

class MockProvider : public Provider {
 public:
  explicit MockProvider(MockRules rules, std::ptrdiff_t max_in_flight = 4);

  const MockRules& rules() const { return rules_; }

  // Test hooks: fail every call with `code`, or delay each call.
  void fail_with(std::optional<ErrorCode> code) { fail_with_ = code; }
  void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

  // Pure rule evaluation, exposed for direct testing.
  Json curate(const Json& payload) const;
  Json plan(const Json& payload) const;
  Json suggest_sources(const Json& payload) const;

 protected:
  Json generate(const Request& request, const RepairContext* repair) override;

 private:
  MockRules rules_;
  std::optional<ErrorCode> fail_with_;
  std::chrono::milliseconds latency_{0};
};

// ---------------------------------------------------------------------------
// Remote chat-completions client.

struct HttpProviderOptions {
  std::string base_url = "https://api.openai.com/v1";  // POST {base_url}/chat/completions
  std::string model = "gpt-4o";
  std::string api_key_env = "BONSAI_LM_API_KEY";
  std::chrono::milliseconds timeout{30'000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  std::ptrdiff_t max_in_flight = 4;
};

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderOptions options);

 protected:
  Json generate(const Request& request, const RepairContext* repair) override;

 private:
  HttpProviderOptions options_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // e.g. "/v1"
};

}  // namespace bonsai::lm
