#pragma once

// Structured JSON-lines logging to stderr (or a test sink).

#include <functional>
#include <string>
#include <string_view>

#include "bonsai/model.hpp"

namespace bonsai::log {

enum class Level { kDebug, kInfo, kWarn, kError, kOff };

void set_level(Level level);
Level level();
// Accepts debug|info|warn|error|off; unknown names leave the level unchanged.
void set_level(std::string_view name);

// Replaces the output sink; an empty function restores stderr.
void set_sink(std::function<void(const std::string& line)> sink);

void write(Level level, std::string_view message, Json fields = Json::object());

inline void debug(std::string_view m, Json f = Json::object()) { write(Level::kDebug, m, std::move(f)); }
inline void info(std::string_view m, Json f = Json::object()) { write(Level::kInfo, m, std::move(f)); }
inline void warn(std::string_view m, Json f = Json::object()) { write(Level::kWarn, m, std::move(f)); }
inline void error(std::string_view m, Json f = Json::object()) { write(Level::kError, m, std::move(f)); }

}  // namespace bonsai::log
