#pragma once

// HTTP/JSON API over FeedService, including the feed-generator XRPC routes.

#include <memory>
#include <string>

#include "bonsai/error.hpp"
#include "bonsai/service.hpp"

namespace bonsai::http {

int status_for(ErrorCode code);
// {"error": CODE, "message": ..., "violations"?: [...]}
Json error_body(const Error& e);

class ApiServer {
 public:
  explicit ApiServer(service::FeedService& service);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds without serving. Port 0 picks a free port; returns the bound port
  // or -1.
  int bind(const std::string& host, int port);
  // Serves on the bound socket until stop(). Blocks.
  bool serve();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bonsai::http
