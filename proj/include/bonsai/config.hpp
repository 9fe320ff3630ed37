#pragma once

// Service configuration file and the wiring that turns it into a running
// FeedService.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "bonsai/catalog.hpp"
#include "bonsai/lm.hpp"
#include "bonsai/scheduler.hpp"
#include "bonsai/service.hpp"
#include "bonsai/sourcer.hpp"
#include "bonsai/store.hpp"

namespace bonsai::app {

struct LmConfig {
  std::string provider = "mock";  // mock | http
  std::filesystem::path mock_rules;  // empty: no rules, every post scores the default
  int mock_latency_ms = 0;
  lm::HttpProviderOptions http;
  std::size_t max_in_flight = 4;
};

struct AdapterConfig {
  std::string kind = "fixture";  // fixture | atproto
  std::filesystem::path corpus;  // fixture
  std::string service_url = "https://bsky.social";
  std::string handle;
  std::string app_password_env = "BONSAI_APP_PASSWORD";
};

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::filesystem::path data_dir = "data";
  std::string service_did = "did:web:localhost";
  std::string log_level = "info";

  std::int64_t refresh_interval_seconds = 1800;
  double refresh_jitter = 0.10;
  std::size_t scheduler_workers = 2;

  std::int64_t window_hours = 96;
  std::size_t per_source_cap = 100;
  std::size_t sourcing_concurrency = 4;
  std::int64_t source_timeout_ms = 10'000;
  std::size_t curation_concurrency = 4;
  std::int64_t retention_days = 7;
  std::size_t run_history = 10;

  PresetTable presets = PresetTable::defaults();
  LmConfig lm;
  AdapterConfig adapter;
  std::filesystem::path catalog;  // empty: planner runs without catalog hits
};

// Unknown keys and wrong types throw Error(kConfig). Relative paths are
// resolved against `base_dir`.
ServiceConfig parse_service_config(const Json& doc,
                                   const std::filesystem::path& base_dir = {});
// Reads the file, then applies BONSAI_<KEY> environment overrides for the
// scalar top-level keys (e.g. BONSAI_PORT, BONSAI_REFRESH_INTERVAL_SECONDS).
ServiceConfig load_service_config(const std::filesystem::path& path);
void apply_env_overrides(ServiceConfig& config);

service::ServiceOptions service_options(const ServiceConfig& config);
service::SchedulerOptions scheduler_options(const ServiceConfig& config);

std::shared_ptr<lm::Provider> make_provider(const LmConfig& config);
std::shared_ptr<sourcing::PlatformAdapter> make_adapter(const AdapterConfig& config);

// Everything a server or admin command needs, built from one config.
struct App {
  ServiceConfig config;
  std::shared_ptr<service::FeedStore> store;
  std::shared_ptr<lm::Provider> provider;
  std::shared_ptr<const catalog::Catalog> catalog;
  std::shared_ptr<sourcing::PlatformAdapter> adapter;
  std::unique_ptr<service::FeedService> service;
};

// Throws Error(kConfig) or Error(kStorage) when a dependency cannot be set up.
std::unique_ptr<App> build_app(const ServiceConfig& config);

}  // namespace bonsai::app
