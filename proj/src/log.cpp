#include "bonsai/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace bonsai::log {

namespace {

std::atomic<Level> g_level{Level::kInfo};
std::mutex g_mutex;
std::function<void(const std::string&)> g_sink;

constexpr std::string_view level_name(Level l) {
  switch (l) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    case Level::kOff: return "off";
  }
  return "info";
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void set_level(std::string_view name) {
  for (auto l : {Level::kDebug, Level::kInfo, Level::kWarn, Level::kError, Level::kOff}) {
    if (level_name(l) == name) set_level(l);
  }
}

void set_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void write(Level level, std::string_view message, Json fields) {
  if (level < g_level.load() || level == Level::kOff) return;
  Json line = Json::object();
  line["ts"] = format_rfc3339(now_utc());
  line["level"] = level_name(level);
  line["msg"] = message;
  if (fields.is_object()) {
    for (auto& [k, v] : fields.items()) line[k] = std::move(v);
  }
  auto text = line.dump(-1, ' ', false, Json::error_handler_t::replace);
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(text);
  } else {
    std::cerr << text << '\n';
  }
}

}  // namespace bonsai::log
