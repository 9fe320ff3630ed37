#include "bonsai/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/util.hpp"

namespace bonsai::app {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const Json& obj, std::string_view where, std::set<std::string> known) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.contains(key)) {
      throw Error(ErrorCode::kConfig, "unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    it->get_to(out);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_path(const Json& obj, const char* key, fs::path& out, const fs::path& base) {
  std::string s;
  read(obj, key, s);
  if (s.empty()) return;
  fs::path p(s);
  out = (p.is_relative() && !base.empty()) ? base / p : p;
}

template <typename T>
void require_positive(T value, const char* key) {
  if (value <= 0) throw Error(ErrorCode::kConfig, std::string(key) + " must be positive");
}

}  // namespace

ServiceConfig parse_service_config(const Json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "service config must be a JSON object");
  reject_unknown(doc, "service config",
                 {"host", "port", "data_dir", "service_did", "log_level",
                  "refresh_interval_seconds", "refresh_jitter", "scheduler_workers",
                  "window_hours", "per_source_cap", "sourcing_concurrency", "source_timeout_ms",
                  "curation_concurrency", "retention_days", "run_history", "presets", "lm",
                  "adapter", "catalog"});
  ServiceConfig c;
  read(doc, "host", c.host);
  read(doc, "port", c.port);
  read_path(doc, "data_dir", c.data_dir, base_dir);
  if (!doc.contains("data_dir") && !base_dir.empty()) c.data_dir = base_dir / c.data_dir;
  read(doc, "service_did", c.service_did);
  read(doc, "log_level", c.log_level);
  read(doc, "refresh_interval_seconds", c.refresh_interval_seconds);
  read(doc, "refresh_jitter", c.refresh_jitter);
  read(doc, "scheduler_workers", c.scheduler_workers);
  read(doc, "window_hours", c.window_hours);
  read(doc, "per_source_cap", c.per_source_cap);
  read(doc, "sourcing_concurrency", c.sourcing_concurrency);
  read(doc, "source_timeout_ms", c.source_timeout_ms);
  read(doc, "curation_concurrency", c.curation_concurrency);
  read(doc, "retention_days", c.retention_days);
  read(doc, "run_history", c.run_history);
  read_path(doc, "catalog", c.catalog, base_dir);
  if (auto it = doc.find("presets"); it != doc.end()) {
    try {
      c.presets = it->get<PresetTable>();
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kConfig, std::string("bad presets: ") + e.what());
    }
  }

  if (auto it = doc.find("lm"); it != doc.end()) {
    const Json& lm = *it;
    if (!lm.is_object()) throw Error(ErrorCode::kConfig, "lm must be an object");
    reject_unknown(lm, "lm",
                   {"provider", "mock_rules", "mock_latency_ms", "base_url", "model",
                    "api_key_env", "timeout_ms", "max_retries", "max_in_flight"});
    read(lm, "provider", c.lm.provider);
    read_path(lm, "mock_rules", c.lm.mock_rules, base_dir);
    read(lm, "mock_latency_ms", c.lm.mock_latency_ms);
    read(lm, "base_url", c.lm.http.base_url);
    read(lm, "model", c.lm.http.model);
    read(lm, "api_key_env", c.lm.http.api_key_env);
    std::int64_t timeout_ms = c.lm.http.timeout.count();
    read(lm, "timeout_ms", timeout_ms);
    c.lm.http.timeout = std::chrono::milliseconds(timeout_ms);
    read(lm, "max_retries", c.lm.http.max_retries);
    read(lm, "max_in_flight", c.lm.max_in_flight);
  }
  if (auto it = doc.find("adapter"); it != doc.end()) {
    const Json& ad = *it;
    if (!ad.is_object()) throw Error(ErrorCode::kConfig, "adapter must be an object");
    reject_unknown(ad, "adapter", {"kind", "corpus", "service_url", "handle", "app_password_env"});
    read(ad, "kind", c.adapter.kind);
    read_path(ad, "corpus", c.adapter.corpus, base_dir);
    read(ad, "service_url", c.adapter.service_url);
    read(ad, "handle", c.adapter.handle);
    read(ad, "app_password_env", c.adapter.app_password_env);
  }

  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::kConfig, "port out of range");
  require_positive(c.refresh_interval_seconds, "refresh_interval_seconds");
  if (c.refresh_jitter < 0 || c.refresh_jitter >= 1) {
    throw Error(ErrorCode::kConfig, "refresh_jitter must be in [0, 1)");
  }
  require_positive(c.window_hours, "window_hours");
  require_positive(c.per_source_cap, "per_source_cap");
  require_positive(c.sourcing_concurrency, "sourcing_concurrency");
  require_positive(c.source_timeout_ms, "source_timeout_ms");
  require_positive(c.curation_concurrency, "curation_concurrency");
  require_positive(c.retention_days, "retention_days");
  require_positive(c.run_history, "run_history");
  require_positive(c.lm.max_in_flight, "lm.max_in_flight");
  static const std::set<std::string> kLevels{"debug", "info", "warn", "error", "off"};
  if (!kLevels.contains(c.log_level)) {
    throw Error(ErrorCode::kConfig, "log_level must be one of debug, info, warn, error, off");
  }
  if (c.lm.provider != "mock" && c.lm.provider != "http") {
    throw Error(ErrorCode::kConfig, "lm.provider must be 'mock' or 'http'");
  }
  if (c.adapter.kind != "fixture" && c.adapter.kind != "atproto") {
    throw Error(ErrorCode::kConfig, "adapter.kind must be 'fixture' or 'atproto'");
  }
  if (c.adapter.kind == "fixture" && c.adapter.corpus.empty()) {
    throw Error(ErrorCode::kConfig, "adapter.corpus is required for the fixture adapter");
  }
  return c;
}

void apply_env_overrides(ServiceConfig& c) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v) return std::nullopt;
    return std::string(v);
  };
  auto as_int = [](const std::string& name, const std::string& v) -> std::int64_t {
    try {
      std::size_t used = 0;
      auto n = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, name + " must be an integer, got '" + v + "'");
    }
  };
  auto as_double = [](const std::string& name, const std::string& v) -> double {
    try {
      std::size_t used = 0;
      auto d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, name + " must be a number, got '" + v + "'");
    }
  };
  auto size = [&](const char* name, std::size_t& out) {
    if (auto v = env(name)) {
      auto n = as_int(name, *v);
      if (n <= 0) throw Error(ErrorCode::kConfig, std::string(name) + " must be positive");
      out = static_cast<std::size_t>(n);
    }
  };
  auto i64 = [&](const char* name, std::int64_t& out) {
    if (auto v = env(name)) {
      out = as_int(name, *v);
      if (out <= 0) throw Error(ErrorCode::kConfig, std::string(name) + " must be positive");
    }
  };

  if (auto v = env("BONSAI_HOST")) c.host = *v;
  if (auto v = env("BONSAI_PORT")) {
    auto p = as_int("BONSAI_PORT", *v);
    if (p < 0 || p > 65535) throw Error(ErrorCode::kConfig, "BONSAI_PORT out of range");
    c.port = static_cast<int>(p);
  }
  if (auto v = env("BONSAI_DATA_DIR")) c.data_dir = *v;
  if (auto v = env("BONSAI_SERVICE_DID")) c.service_did = *v;
  if (auto v = env("BONSAI_LOG_LEVEL")) c.log_level = *v;
  i64("BONSAI_REFRESH_INTERVAL_SECONDS", c.refresh_interval_seconds);
  if (auto v = env("BONSAI_REFRESH_JITTER")) {
    c.refresh_jitter = as_double("BONSAI_REFRESH_JITTER", *v);
    if (c.refresh_jitter < 0 || c.refresh_jitter >= 1) {
      throw Error(ErrorCode::kConfig, "BONSAI_REFRESH_JITTER must be in [0, 1)");
    }
  }
  size("BONSAI_SCHEDULER_WORKERS", c.scheduler_workers);
  i64("BONSAI_WINDOW_HOURS", c.window_hours);
  size("BONSAI_PER_SOURCE_CAP", c.per_source_cap);
  size("BONSAI_SOURCING_CONCURRENCY", c.sourcing_concurrency);
  i64("BONSAI_SOURCE_TIMEOUT_MS", c.source_timeout_ms);
  size("BONSAI_CURATION_CONCURRENCY", c.curation_concurrency);
  i64("BONSAI_RETENTION_DAYS", c.retention_days);
  size("BONSAI_RUN_HISTORY", c.run_history);
  if (auto v = env("BONSAI_CATALOG")) c.catalog = *v;
}

ServiceConfig load_service_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto config = parse_service_config(doc, path.parent_path());
  apply_env_overrides(config);
  return config;
}

service::ServiceOptions service_options(const ServiceConfig& c) {
  service::ServiceOptions o;
  o.service_did = c.service_did;
  o.retention = std::chrono::hours(24 * c.retention_days);
  o.run_history = c.run_history;
  o.curation_parallelism = c.curation_concurrency;
  o.presets = c.presets;
  o.sourcer.window = std::chrono::hours(c.window_hours);
  o.sourcer.per_source_cap = c.per_source_cap;
  o.sourcer.max_in_flight = c.sourcing_concurrency;
  o.sourcer.per_source_timeout = std::chrono::milliseconds(c.source_timeout_ms);
  return o;
}

service::SchedulerOptions scheduler_options(const ServiceConfig& c) {
  service::SchedulerOptions o;
  o.interval = std::chrono::seconds(c.refresh_interval_seconds);
  o.jitter = c.refresh_jitter;
  o.workers = c.scheduler_workers;
  return o;
}

std::shared_ptr<lm::Provider> make_provider(const LmConfig& c) {
  const auto in_flight = static_cast<std::ptrdiff_t>(c.max_in_flight);
  if (c.provider == "http") {
    auto opts = c.http;
    opts.max_in_flight = in_flight;
    return std::make_shared<lm::HttpProvider>(opts);
  }
  lm::MockRules rules;
  if (!c.mock_rules.empty()) rules = lm::load_mock_rules(c.mock_rules);
  auto mock = std::make_shared<lm::MockProvider>(std::move(rules), in_flight);
  if (c.mock_latency_ms > 0) mock->set_latency(std::chrono::milliseconds(c.mock_latency_ms));
  return mock;
}

std::shared_ptr<sourcing::PlatformAdapter> make_adapter(const AdapterConfig& c) {
  if (c.kind == "atproto") {
    sourcing::AtprotoOptions opts;
    opts.service_url = c.service_url;
    opts.handle = c.handle;
    if (const char* pw = std::getenv(c.app_password_env.c_str())) opts.app_password = pw;
    return std::make_shared<sourcing::AtprotoAdapter>(opts);
  }
  return sourcing::FixtureAdapter::load(c.corpus);
}

std::unique_ptr<App> build_app(const ServiceConfig& config) {
  auto app = std::make_unique<App>();
  app->config = config;
  app->store = std::make_shared<service::FileStore>(config.data_dir);
  app->provider = make_provider(config.lm);
  if (!config.catalog.empty()) {
    catalog::IngestReport report;
    app->catalog =
        std::make_shared<const catalog::Catalog>(catalog::Catalog::ingest(config.catalog, &report));
    log::info("catalog loaded", Json(report));
  }
  app->adapter = make_adapter(config.adapter);
  app->service = std::make_unique<service::FeedService>(app->store, app->provider, app->catalog,
                                                        app->adapter, service_options(config));
  return app;
}

}  // namespace bonsai::app
