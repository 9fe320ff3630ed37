// bonsai: operator and offline-experiment command-line tool.
//
// Exit codes: 0 ok, 2 validation or config error, 3 language-model provider
// error, 4 not found, 5 anything else.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "bonsai/config.hpp"
#include "bonsai/error.hpp"
#include "bonsai/http_server.hpp"
#include "bonsai/log.hpp"
#include "bonsai/pipeline.hpp"
#include "bonsai/planner.hpp"
#include "bonsai/scheduler.hpp"
#include "bonsai/util.hpp"

namespace {

using namespace bonsai;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain:
    case ErrorCode::kBadRequest:
    case ErrorCode::kValidation:
    case ErrorCode::kConfig:
      return 2;
    case ErrorCode::kPlanFailed:
    case ErrorCode::kProviderUnreachable:
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kTimeout:
      return 3;
    case ErrorCode::kNotFound:
      return 4;
    default:
      return 5;
  }
}

int report(const Error& e) {
  std::cerr << http::error_body(e).dump() << "\n";
  return exit_code_for(e.code());
}

Json read_json_file(const std::string& path, std::string_view what) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open " + std::string(what) + " " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string(what) + " " + path + " is not valid JSON: " + e.what());
  }
}

std::shared_ptr<lm::Provider> cli_provider(const std::string& mock_rules, const std::string& lm_url,
                                           const std::string& lm_model) {
  app::LmConfig lm;
  if (!lm_url.empty()) {
    lm.provider = "http";
    lm.http.base_url = lm_url;
    if (!lm_model.empty()) lm.http.model = lm_model;
  }
  lm.mock_rules = mock_rules;
  return app::make_provider(lm);
}

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// --- plan ------------------------------------------------------------------

struct PlanArgs {
  std::string description;
  std::string catalog;
  std::string mock_rules;
  std::string lm_url;
  std::string lm_model;
  std::string owner = "local";
};

int cmd_plan(const PlanArgs& a) {
  std::shared_ptr<const catalog::Catalog> cat;
  if (!a.catalog.empty()) {
    cat = std::make_shared<const catalog::Catalog>(catalog::Catalog::ingest(a.catalog));
  }
  planner::Planner planner(cli_provider(a.mock_rules, a.lm_url, a.lm_model), cat);
  auto draft = planner.plan(a.description, a.owner);
  std::cout << Json(draft).dump(2) << "\n";
  return 0;
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string description;
  std::string corpus;
  std::string catalog;
  std::string weights = "balanced";
  std::string now;
  std::string mock_rules;
  bool json = false;
};

int cmd_run(const RunArgs& a) {
  auto provider = cli_provider(a.mock_rules, "", "");
  auto adapter = sourcing::FixtureAdapter::load(a.corpus);

  FeedConfig config;
  if (!a.config.empty()) {
    try {
      config = read_json_file(a.config, "config").get<FeedConfig>();
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kValidation, "config " + a.config + ": " + e.what());
    }
  } else {
    std::shared_ptr<const catalog::Catalog> cat;
    if (!a.catalog.empty()) {
      cat = std::make_shared<const catalog::Catalog>(catalog::Catalog::ingest(a.catalog));
    }
    config = planner::Planner(provider, cat).plan(a.description, "local");
  }
  if (auto violations = validate_config(config); !violations.empty()) {
    for (const auto& v : violations) {
      std::cerr << v.code << "\t" << v.path << "\t" << v.message << "\n";
    }
    return 2;
  }

  auto weights = pipeline::parse_weights(a.weights);
  // Default "now" is the newest post in the corpus so repeated runs agree.
  Timestamp now;
  if (!a.now.empty()) {
    now = parse_rfc3339(a.now);
  } else if (auto newest = adapter->newest_post()) {
    now = *newest;
  } else {
    now = now_utc();
  }

  auto result = pipeline::run(config, weights, now, adapter, provider);
  if (a.json) {
    std::cout << Json(result).dump(2) << "\n";
    return 0;
  }
  std::size_t position = 0;
  for (const auto& p : result.ranked) {
    std::cout << ++position << "\t" << p.uri << "\t" << format_score(p.ranks.borda_score) << "\t"
              << p.score << "\t" << to_string(p.bucket) << "\n";
  }
  std::cout << "# fetched=" << result.fetched << " eligible=" << result.eligible
            << " ranked=" << result.ranked.size() << "\n";
  return 0;
}

// --- serve -----------------------------------------------------------------

std::atomic<http::ApiServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const std::string& config_path, int port_override) {
  auto config = app::load_service_config(config_path);
  if (port_override >= 0) config.port = port_override;
  log::set_level(config.log_level);
  auto application = app::build_app(config);

  service::RefreshScheduler scheduler(*application->service, app::scheduler_options(config));
  http::ApiServer server(*application->service);
  int port = server.bind(config.host, config.port);
  if (port < 0) {
    throw Error(ErrorCode::kConfig,
                "cannot bind " + config.host + ":" + std::to_string(config.port));
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  scheduler.start();
  log::info("listening", {{"host", config.host}, {"port", port}});
  std::cout << "listening on " << config.host << ":" << port << std::endl;
  server.serve();
  g_server = nullptr;
  scheduler.stop();
  log::info("shut down");
  return 0;
}

// --- feeds -----------------------------------------------------------------

std::unique_ptr<app::App> admin_app(const std::string& config_path) {
  auto config = app::load_service_config(config_path);
  return app::build_app(config);
}

int cmd_feeds_list(const std::string& config_path, bool json) {
  auto a = admin_app(config_path);
  auto feeds = a->service->list_feeds(std::nullopt);
  if (json) {
    std::cout << Json(feeds).dump(2) << "\n";
    return 0;
  }
  std::cout << "feed_id\towner\tactive\tgeneration\tdescription\n";
  for (const auto& f : feeds) {
    auto published = a->service->published(f.feed_id);
    std::cout << f.feed_id << "\t" << f.owner << "\t" << (f.active ? "yes" : "no") << "\t"
              << (published ? std::to_string(published->generation_id) : "-") << "\t"
              << f.description << "\n";
  }
  return 0;
}

int cmd_feeds_generate(const std::string& config_path, const std::string& id,
                       const std::string& now) {
  auto a = admin_app(config_path);
  if (!now.empty()) {
    auto fixed = parse_rfc3339(now);
    a->service->set_clock([fixed] { return fixed; });
  }
  auto run = a->service->generate(id, service::Trigger::kManual);
  std::cout << service::run_to_json(run, false).dump(2) << "\n";
  return 0;
}

int cmd_feeds_set_active(const std::string& config_path, const std::string& id, bool active) {
  auto a = admin_app(config_path);
  auto config = a->service->set_active(id, active, std::nullopt);
  std::cout << Json(config).dump(2) << "\n";
  return 0;
}

int cmd_feeds_create(const std::string& config_path, const std::string& file) {
  auto a = admin_app(config_path);
  FeedConfig draft;
  try {
    draft = read_json_file(file, "feed config").get<FeedConfig>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kValidation, "feed config " + file + ": " + e.what());
  }
  auto created = a->service->create_feed(std::move(draft), std::nullopt);
  std::cout << Json(created).dump(2) << "\n";
  return 0;
}

int cmd_feeds_show(const std::string& config_path, const std::string& id) {
  auto a = admin_app(config_path);
  std::cout << Json(a->service->get_feed(id, std::nullopt)).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"bonsai: intentional feed builder and feed-generator service"};
  cli.require_subcommand(1);
  std::string log_level = "warn";
  cli.add_option("--log-level", log_level, "debug|info|warn|error|off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  PlanArgs plan;
  auto* plan_cmd = cli.add_subcommand("plan", "Draft a feed config from a description");
  plan_cmd->add_option("--description", plan.description, "Natural-language feed intent")
      ->required();
  plan_cmd->add_option("--catalog", plan.catalog, "Source catalog (JSON lines)");
  plan_cmd->add_option("--mock-rules", plan.mock_rules, "Mock provider rule table");
  plan_cmd->add_option("--lm-url", plan.lm_url, "Chat-completions base URL (enables HTTP provider)");
  plan_cmd->add_option("--lm-model", plan.lm_model, "Model name for the HTTP provider");
  plan_cmd->add_option("--owner", plan.owner, "Owner recorded in the draft");

  RunArgs run;
  auto* run_cmd = cli.add_subcommand("run", "Offline source -> curate -> rank over a corpus");
  auto* run_config = run_cmd->add_option("--config", run.config, "Feed config JSON");
  auto* run_desc =
      run_cmd->add_option("--description", run.description, "Plan a config from this intent");
  run_config->excludes(run_desc);
  run_cmd->add_option("--corpus", run.corpus, "Fixture corpus (JSON lines)")->required();
  run_cmd->add_option("--catalog", run.catalog, "Source catalog used with --description");
  run_cmd->add_option("--weights", run.weights, "w_r,w_p,w_c or a preset name");
  run_cmd->add_option("--now", run.now, "Reference time (RFC 3339); default newest corpus post");
  run_cmd->add_option("--mock-rules", run.mock_rules, "Mock provider rule table");
  run_cmd->add_flag("--json", run.json, "Emit JSON instead of text");

  std::string serve_config;
  int serve_port = -1;
  auto* serve_cmd = cli.add_subcommand("serve", "Run the HTTP service and refresh scheduler");
  serve_cmd->add_option("--config", serve_config, "Service config JSON")->required();
  serve_cmd->add_option("--port", serve_port, "Override the configured port");

  std::string feeds_config;
  std::string feed_id;
  std::string feed_file;
  bool feeds_json = false;
  auto* feeds_cmd = cli.add_subcommand("feeds", "Administer stored feeds");
  feeds_cmd->require_subcommand(1);
  feeds_cmd->fallthrough();
  feeds_cmd->add_option("--config", feeds_config, "Service config JSON")->required();
  auto* list_cmd = feeds_cmd->add_subcommand("list", "List feeds");
  list_cmd->add_flag("--json", feeds_json, "Emit JSON");
  auto* gen_cmd = feeds_cmd->add_subcommand("generate", "Run generation now");
  gen_cmd->add_option("--id", feed_id, "Feed id")->required();
  std::string gen_now;
  gen_cmd->add_option("--now", gen_now, "Reference time (RFC 3339) for replaying a corpus");
  auto* deact_cmd = feeds_cmd->add_subcommand("deactivate", "Stop serving and refreshing a feed");
  deact_cmd->add_option("--id", feed_id, "Feed id")->required();
  auto* act_cmd = feeds_cmd->add_subcommand("activate", "Serve and refresh a feed");
  act_cmd->add_option("--id", feed_id, "Feed id")->required();
  auto* show_cmd = feeds_cmd->add_subcommand("show", "Print a feed config");
  show_cmd->add_option("--id", feed_id, "Feed id")->required();
  auto* create_cmd = feeds_cmd->add_subcommand("create", "Store a feed config");
  create_cmd->add_option("--file", feed_file, "Feed config JSON")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 2;
  }
  log::set_level(log_level);

  try {
    if (*plan_cmd) return cmd_plan(plan);
    if (*run_cmd) {
      if (run.config.empty() && run.description.empty()) {
        throw Error(ErrorCode::kValidation, "run needs --config or --description");
      }
      return cmd_run(run);
    }
    if (*serve_cmd) return cmd_serve(serve_config, serve_port);
    if (*list_cmd) return cmd_feeds_list(feeds_config, feeds_json);
    if (*gen_cmd) return cmd_feeds_generate(feeds_config, feed_id, gen_now);
    if (*deact_cmd) return cmd_feeds_set_active(feeds_config, feed_id, false);
    if (*act_cmd) return cmd_feeds_set_active(feeds_config, feed_id, true);
    if (*show_cmd) return cmd_feeds_show(feeds_config, feed_id);
    if (*create_cmd) return cmd_feeds_create(feeds_config, feed_file);
  } catch (const Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "INTERNAL"}, {"message", e.what()}}.dump() << "\n";
    return 5;
  }
  return 5;
}
