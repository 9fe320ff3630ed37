#include "bonsai/http_server.hpp"

#include <functional>

#include "bonsai/log.hpp"
#include "bonsai/util.hpp"
#include "httplib.h"

namespace bonsai::http {

using service::Actor;
using service::FeedService;

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain:
    case ErrorCode::kBadRequest:
      return 400;
    case ErrorCode::kUnauthorized:
      return 401;
    case ErrorCode::kForbidden:
      return 403;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kValidation:
    case ErrorCode::kConflict:
      return 409;
    case ErrorCode::kPlanFailed:
    case ErrorCode::kProviderUnreachable:
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kTimeout:
      return 502;
    case ErrorCode::kSourcingFailed:
    case ErrorCode::kStorage:
    case ErrorCode::kConfig:
      return 500;
  }
  return 500;
}

Json error_body(const Error& e) {
  Json body{{"error", error_code_name(e.code())}, {"message", e.what()}};
  if (e.cause()) body["cause"] = error_code_name(*e.cause());
  if (const auto* v = dynamic_cast<const service::ValidationError*>(&e)) {
    body["violations"] = v->violations();
  }
  return body;
}

namespace {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) throw Error(ErrorCode::kBadRequest, "request body is required");
  try {
    auto j = Json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::kBadRequest, "request body must be a JSON object");
    return j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kBadRequest, std::string("malformed JSON: ") + e.what());
  }
}

template <typename T>
T decode(const Json& j, std::string_view what) {
  try {
    return j.get<T>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kBadRequest, "invalid " + std::string(what) + ": " + e.what());
  }
}

Handler guarded(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      int status = status_for(e.code());
      if (status >= 500) {
        log::error("request failed", {{"path", req.path},
                                      {"status", status},
                                      {"error", error_code_name(e.code())},
                                      {"detail", e.what()}});
      }
      send_json(res, status, error_body(e));
    } catch (const std::exception& e) {
      log::error("unhandled error", {{"path", req.path}, {"detail", e.what()}});
      send_json(res, 500, {{"error", "INTERNAL"}, {"message", e.what()}});
    }
  };
}

}  // namespace

struct ApiServer::Impl {
  FeedService& svc;
  httplib::Server server;
  int port = -1;

  explicit Impl(FeedService& s) : svc(s) { routes(); }

  std::string owner(const httplib::Request& req) const {
    auto auth = req.get_header_value("Authorization");
    constexpr std::string_view kBearer = "Bearer ";
    if (!std::string_view(auth).starts_with(kBearer)) {
      throw Error(ErrorCode::kUnauthorized, "missing bearer token");
    }
    return svc.owner_for_token(util::trim(std::string_view(auth).substr(kBearer.size())));
  }

  void routes() {
    server.Get("/health", guarded([](const auto&, auto& res) {
      send_json(res, 200, {{"status", "ok"}});
    }));

    // --- sessions --------------------------------------------------------
    server.Post("/api/session", guarded([this](const auto& req, auto& res) {
      auto body = parse_body(req);
      auto handle = body.value("handle", "");
      auto password = body.value("app_password", "");
      if (handle.empty() || password.empty()) {
        throw Error(ErrorCode::kBadRequest, "handle and app_password are required");
      }
      auto token = svc.login(handle, password);
      send_json(res, 201, {{"token", token}, {"owner", svc.owner_for_token(token)}});
    }));
    server.Get("/api/session", guarded([this](const auto& req, auto& res) {
      send_json(res, 200, {{"owner", owner(req)}});
    }));
    server.Delete("/api/session", guarded([this](const auto& req, auto& res) {
      owner(req);
      auto auth = req.get_header_value("Authorization");
      svc.logout(util::trim(std::string_view(auth).substr(7)));
      res.status = 204;
    }));

    // --- planning --------------------------------------------------------
    server.Post("/api/feeds/plan", guarded([this](const auto& req, auto& res) {
      auto who = owner(req);
      auto body = parse_body(req);
      auto it = body.find("description");
      if (it == body.end() || !it->is_string()) {
        throw Error(ErrorCode::kBadRequest, "description is required");
      }
      send_json(res, 200, svc.plan(it->template get<std::string>(), who));
    }));
    server.Post("/api/feeds/suggest-sources", guarded([this](const auto& req, auto& res) {
      owner(req);
      auto body = parse_body(req);
      const Json& cfg = body.contains("config") ? body.at("config") : body;
      auto config = decode<FeedConfig>(cfg, "config");
      send_json(res, 200, {{"sources", svc.suggest_sources(config)}});
    }));
    server.Get("/api/presets", guarded([this](const auto&, auto& res) {
      send_json(res, 200, svc.options().presets);
    }));

    // --- CRUD ------------------------------------------------------------
    server.Get("/api/feeds", guarded([this](const auto& req, auto& res) {
      send_json(res, 200, {{"feeds", svc.list_feeds(owner(req))}});
    }));
    server.Post("/api/feeds", guarded([this](const auto& req, auto& res) {
      auto who = owner(req);
      auto config = decode<FeedConfig>(parse_body(req), "config");
      send_json(res, 201, svc.create_feed(std::move(config), who));
    }));
    server.Get(R"(/api/feeds/([A-Za-z0-9_-]+))", guarded([this](const auto& req, auto& res) {
      send_json(res, 200, svc.get_feed(req.matches[1], owner(req)));
    }));
    server.Put(R"(/api/feeds/([A-Za-z0-9_-]+))", guarded([this](const auto& req, auto& res) {
      auto who = owner(req);
      auto config = decode<FeedConfig>(parse_body(req), "config");
      send_json(res, 200, svc.update_feed(req.matches[1], std::move(config), who));
    }));
    server.Delete(R"(/api/feeds/([A-Za-z0-9_-]+))", guarded([this](const auto& req, auto& res) {
      svc.delete_feed(req.matches[1], owner(req));
      res.status = 204;
    }));
    server.Post(R"(/api/feeds/([A-Za-z0-9_-]+)/activate)",
                guarded([this](const auto& req, auto& res) {
                  send_json(res, 200, svc.set_active(req.matches[1], true, owner(req)));
                }));
    server.Post(R"(/api/feeds/([A-Za-z0-9_-]+)/deactivate)",
                guarded([this](const auto& req, auto& res) {
                  send_json(res, 200, svc.set_active(req.matches[1], false, owner(req)));
                }));

    // --- generation and transparency --------------------------------------
    server.Post(R"(/api/feeds/([A-Za-z0-9_-]+)/generate)",
                guarded([this](const auto& req, auto& res) {
                  auto run = svc.generate(req.matches[1], service::Trigger::kManual, owner(req));
                  send_json(res, 200, service::run_to_json(run, false));
                }));
    server.Get(R"(/api/feeds/([A-Za-z0-9_-]+)/runs)", guarded([this](const auto& req, auto& res) {
      std::string id = req.matches[1];
      Json runs = Json::array();
      for (const auto& r : svc.runs(id, owner(req))) runs.push_back(service::run_to_json(r, false));
      send_json(res, 200, {{"in_flight", svc.in_flight(id)}, {"runs", std::move(runs)}});
    }));
    server.Get(R"(/api/feeds/([A-Za-z0-9_-]+)/runs/(\d+))",
               guarded([this](const auto& req, auto& res) {
                 std::uint64_t gen = 0;
                 try {
                   gen = std::stoull(req.matches[2]);
                 } catch (const std::exception&) {
                   throw Error(ErrorCode::kBadRequest, "invalid generation id");
                 }
                 send_json(res, 200,
                           service::run_to_json(svc.run(req.matches[1], gen, owner(req)), true));
               }));
    server.Get(R"(/api/feeds/([A-Za-z0-9_-]+)/posts)", guarded([this](const auto& req, auto& res) {
      std::vector<std::string> uris;
      auto n = req.get_param_value_count("uri");
      for (std::size_t i = 0; i < n; ++i) uris.push_back(req.get_param_value("uri", i));
      if (uris.size() > 100) throw Error(ErrorCode::kBadRequest, "at most 100 uris per request");
      send_json(res, 200, {{"posts", svc.hydrate(req.matches[1], uris, owner(req))}});
    }));

    // --- feed generator --------------------------------------------------
    server.Get("/xrpc/app.bsky.feed.getFeedSkeleton", guarded([this](const auto& req, auto& res) {
      if (!req.has_param("feed")) throw Error(ErrorCode::kBadRequest, "feed parameter is required");
      std::size_t limit = 50;
      if (req.has_param("limit")) {
        auto raw = req.get_param_value("limit");
        try {
          std::size_t used = 0;
          auto v = std::stoll(raw, &used);
          if (used != raw.size() || v < 1 || v > 100) throw std::out_of_range(raw);
          limit = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          throw Error(ErrorCode::kBadRequest, "limit must be an integer in 1..100");
        }
      }
      std::optional<std::string> cursor;
      if (req.has_param("cursor")) cursor = req.get_param_value("cursor");
      auto page = svc.skeleton(req.get_param_value("feed"), limit,
                               cursor ? std::optional<std::string_view>(*cursor) : std::nullopt);
      send_json(res, 200, service::skeleton_to_json(page));
    }));
    server.Get("/xrpc/app.bsky.feed.describeFeedGenerator",
               guarded([this](const auto&, auto& res) {
                 send_json(res, 200, svc.describe_feed_generator());
               }));

    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      log::debug("http", {{"method", req.method}, {"path", req.path}, {"status", res.status}});
    });
  }
};

ApiServer::ApiServer(FeedService& service) : impl_(std::make_unique<Impl>(service)) {}
ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  return impl_->port;
}

bool ApiServer::serve() { return impl_->server.listen_after_bind(); }
void ApiServer::stop() {
  if (impl_) impl_->server.stop();
}
bool ApiServer::running() const { return impl_->server.is_running(); }

}  // namespace bonsai::http
