#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bonsai::util {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
bool contains_icase(std::string_view haystack, std::string_view needle);

// Stable across processes and platforms; used for persisted cache keys.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

std::vector<std::string> split(std::string_view s, char sep);

// Hex string from std::random_device; used for opaque ids and session tokens.
std::string random_token(std::size_t bytes);

}  // namespace bonsai::util
