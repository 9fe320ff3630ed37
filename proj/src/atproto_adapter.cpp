#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/sourcer.hpp"
#include "httplib.h"

namespace bonsai::sourcing {

namespace {

constexpr int kPageLimit = 100;

void set_timeouts(httplib::Client& client, std::chrono::milliseconds timeout) {
  auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
  client.set_connection_timeout(sec.count(), usec.count());
  client.set_read_timeout(sec.count(), usec.count());
  client.set_write_timeout(sec.count(), usec.count());
}

Json xrpc_get(httplib::Client& client, const std::string& method, const httplib::Params& params,
              const std::string& token) {
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  auto path = httplib::append_query_params("/xrpc/" + method, params);
  auto res = client.Get(path, headers);
  if (!res) {
    throw Error(ErrorCode::kSourcingFailed, method + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kSourcingFailed,
                method + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  return Json::parse(res->body);
}

}  // namespace

AtprotoAdapter::AtprotoAdapter(AtprotoOptions options) : options_(std::move(options)) {}

bool AtprotoAdapter::supports(SourceKind) const { return true; }

Post AtprotoAdapter::parse_post_view(const Json& view, bool* missing_counters) {
  Post p;
  p.uri = view.at("uri").get<std::string>();
  const auto& author = view.at("author");
  p.author = author.contains("handle") ? author.at("handle").get<std::string>()
                                       : author.at("did").get<std::string>();
  const auto& record = view.at("record");
  p.text = record.value("text", std::string{});
  auto created = record.contains("createdAt") ? record.at("createdAt").get<std::string>()
                                              : view.at("indexedAt").get<std::string>();
  p.created_at = parse_rfc3339(created);

  bool missing = false;
  auto counter = [&](const char* key) -> std::int64_t {
    auto it = view.find(key);
    if (it == view.end() || !it->is_number_integer()) {
      missing = true;
      return 0;
    }
    return std::max<std::int64_t>(0, it->get<std::int64_t>());
  };
  p.likes = counter("likeCount");
  p.reposts = counter("repostCount");
  p.replies = counter("replyCount");
  if (missing_counters) *missing_counters = missing;

  if (auto embed = view.find("embed"); embed != view.end() && embed->is_object()) {
    // images view, or recordWithMedia wrapping one
    const Json* media = &*embed;
    if (auto inner = embed->find("media"); inner != embed->end() && inner->is_object()) media = &*inner;
    if (auto images = media->find("images"); images != media->end() && images->is_array()) {
      for (const auto& img : *images) {
        p.media.push_back({"image", img.value("fullsize", img.value("thumb", std::string{})),
                           img.value("alt", std::string{})});
      }
    }
    if (auto ext = media->find("external"); ext != media->end() && ext->is_object()) {
      p.media.push_back({"external", ext->value("uri", std::string{}),
                         ext->value("title", std::string{})});
    }
    if (auto playlist = media->find("playlist"); playlist != media->end() && playlist->is_string()) {
      p.media.push_back({"video", playlist->get<std::string>(), media->value("alt", std::string{})});
    }
  }
  return p;
}

std::optional<std::string> AtprotoAdapter::authenticate(std::string_view handle,
                                                        std::string_view app_password) {
  httplib::Client client(options_.service_url);
  set_timeouts(client, std::chrono::seconds(10));
  Json body{{"identifier", std::string(handle)}, {"password", std::string(app_password)}};
  auto res = client.Post("/xrpc/com.atproto.server.createSession", body.dump(), "application/json");
  if (!res || res->status != 200) return std::nullopt;
  try {
    auto j = Json::parse(res->body);
    return j.at("did").get<std::string>();
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

std::string AtprotoAdapter::access_token(std::chrono::milliseconds timeout) {
  std::lock_guard lock(mutex_);
  if (!access_jwt_.empty() || options_.handle.empty()) return access_jwt_;
  httplib::Client client(options_.service_url);
  set_timeouts(client, timeout);
  Json body{{"identifier", options_.handle}, {"password", options_.app_password}};
  auto res = client.Post("/xrpc/com.atproto.server.createSession", body.dump(), "application/json");
  if (!res || res->status != 200) {
    throw Error(ErrorCode::kSourcingFailed, "createSession failed for service account");
  }
  access_jwt_ = Json::parse(res->body).at("accessJwt").get<std::string>();
  return access_jwt_;
}

AdapterResult AtprotoAdapter::fetch(const Source& source, const FetchWindow& window,
                                    std::chrono::milliseconds timeout) {
  httplib::Client client(options_.service_url);
  set_timeouts(client, timeout);
  const auto token = access_token(timeout);
  const auto deadline = std::chrono::steady_clock::now() + timeout;

  std::string method;
  httplib::Params params;
  std::string items_key = "feed";
  switch (source.kind) {
    case SourceKind::kFeed:
      method = "app.bsky.feed.getFeed";
      params.emplace("feed", source.identifier);
      break;
    case SourceKind::kList:
      method = "app.bsky.feed.getListFeed";
      params.emplace("list", source.identifier);
      break;
    case SourceKind::kStarterPack: {
      auto pack = xrpc_get(client, "app.bsky.graph.getStarterPack",
                           {{"starterPack", source.identifier}}, token);
      method = "app.bsky.feed.getListFeed";
      params.emplace("list", pack.at("starterPack").at("list").at("uri").get<std::string>());
      break;
    }
    case SourceKind::kAccount:
      method = "app.bsky.feed.getAuthorFeed";
      params.emplace("actor", source.identifier);
      params.emplace("filter", "posts_no_replies");
      break;
    case SourceKind::kHashtag:
    case SourceKind::kSearchQuery:
      method = "app.bsky.feed.searchPosts";
      params.emplace("q", source.kind == SourceKind::kHashtag ? "#" + source.identifier
                                                              : source.identifier);
      params.emplace("sort", "latest");
      params.emplace("since", format_rfc3339(window.since));
      params.emplace("until", format_rfc3339(window.until));
      items_key = "posts";
      break;
  }
  params.emplace("limit", std::to_string(kPageLimit));

  AdapterResult out;
  std::string cursor;
  while (out.posts.size() < window.per_source_cap) {
    if (std::chrono::steady_clock::now() > deadline) {
      throw Error(ErrorCode::kTimeout, "per-source fetch timeout for " + source.identifier);
    }
    auto page_params = params;
    if (!cursor.empty()) page_params.emplace("cursor", cursor);
    auto page = xrpc_get(client, method, page_params, token);

    bool reached_older = false;
    for (const auto& item : page.value(items_key, Json::array())) {
      // Feed items wrap the post view; a repost item's `post` is the subject
      // post, which becomes the candidate.
      const Json& view = items_key == "feed" ? item.at("post") : item;
      bool missing = false;
      Post p;
      try {
        p = parse_post_view(view, &missing);
      } catch (const std::exception& e) {
        log::warn("skipping unparseable post view", {{"error", e.what()}});
        continue;
      }
      if (missing) ++out.missing_counters;
      if (p.created_at < window.since) reached_older = true;
      out.posts.push_back(std::move(p));
    }
    cursor = page.value("cursor", std::string{});
    if (cursor.empty() || reached_older) break;
  }
  return out;
}

}  // namespace bonsai::sourcing
