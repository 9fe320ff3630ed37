#pragma once

// Shared domain types for the feed pipeline and their JSON wire forms.

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"

namespace bonsai {

using Json = nlohmann::json;
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

Timestamp now_utc();
// RFC 3339, always emitted in UTC with a trailing 'Z'. Milliseconds are
// printed only when non-zero.
std::string format_rfc3339(Timestamp t);
Timestamp parse_rfc3339(std::string_view text);

// ---------------------------------------------------------------------------
// Enumerations and their snake_case names.

enum class SourceKind { kFeed, kList, kStarterPack, kAccount, kHashtag, kSearchQuery };
enum class SourceOrigin { kPlannerSuggested, kUserAdded };
enum class Polarity { kInclude, kLimit };
enum class Strength { kStronglyPreferred, kPreferred, kNeverShown, kShownLessOften };
enum class Bucket { kStronglyPrefer, kPrefer, kUnspecified, kShowLess, kNever };
enum class RankingPreset { kFocused, kFresh, kBalanced, kTrending, kCustom };

template <typename E>
struct EnumNames;

template <>
struct EnumNames<SourceKind> {
  static constexpr std::array<std::string_view, 6> kNames{
      "feed", "list", "starter_pack", "account", "hashtag", "search_query"};
};
template <>
struct EnumNames<SourceOrigin> {
  static constexpr std::array<std::string_view, 2> kNames{"planner_suggested", "user_added"};
};
template <>
struct EnumNames<Polarity> {
  static constexpr std::array<std::string_view, 2> kNames{"include", "limit"};
};
template <>
struct EnumNames<Strength> {
  static constexpr std::array<std::string_view, 4> kNames{
      "strongly_preferred", "preferred", "never_shown", "shown_less_often"};
};
template <>
struct EnumNames<Bucket> {
  static constexpr std::array<std::string_view, 5> kNames{
      "strongly_prefer", "prefer", "unspecified", "show_less", "never"};
};
template <>
struct EnumNames<RankingPreset> {
  static constexpr std::array<std::string_view, 5> kNames{
      "focused", "fresh", "balanced", "trending", "custom"};
};

template <typename E>
constexpr std::string_view to_string(E value) {
  return EnumNames<E>::kNames[static_cast<std::size_t>(value)];
}

template <typename E>
constexpr std::optional<E> parse_enum(std::string_view name) {
  const auto& names = EnumNames<E>::kNames;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<E>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Rational numbers, used for ranking weights so that the sum-to-one check is
// exact. Always normalized: gcd(num, den) == 1 and den > 0.

class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  // Decimal ("0.35"), integer ("1") or fraction ("7/20") notation.
  static Rational parse(std::string_view text);
  // Smallest-denominator rational within 1e-12 of `value`, denominator
  // bounded by 10^6. Recovers short decimals such as 0.7 exactly.
  static Rational from_double(double value);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double to_double() const noexcept {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }

  friend Rational operator+(const Rational& a, const Rational& b);
  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

struct RankingWeights {
  Rational relevance;
  Rational popularity;
  Rational recency;

  bool valid() const;  // each in [0,1], exact sum 1
  friend bool operator==(const RankingWeights&, const RankingWeights&) = default;
};

struct RankingStyle {
  RankingPreset preset = RankingPreset::kBalanced;
  std::optional<RankingWeights> custom;  // only meaningful for kCustom

  static RankingStyle of(RankingPreset p) { return RankingStyle{p, std::nullopt}; }
  static RankingStyle with_weights(RankingWeights w) {
    return RankingStyle{RankingPreset::kCustom, w};
  }
  friend bool operator==(const RankingStyle&, const RankingStyle&) = default;
};

// Operator-tunable weights for the four named presets.
struct PresetTable {
  RankingWeights focused;
  RankingWeights fresh;
  RankingWeights balanced;
  RankingWeights trending;

  static PresetTable defaults();
  const RankingWeights& get(RankingPreset p) const;
};

// Throws Error(kDomain) for custom weights that are missing or do not sum to 1.
RankingWeights weights_for_style(const RankingStyle& style,
                                 const PresetTable& presets = PresetTable::defaults());

// ---------------------------------------------------------------------------

struct Source {
  SourceKind kind = SourceKind::kSearchQuery;
  std::string identifier;
  std::string display_title;
  SourceOrigin origin = SourceOrigin::kUserAdded;

  // (kind, identifier) is the identity used for de-duplication.
  std::pair<SourceKind, std::string> key() const { return {kind, identifier}; }
  friend bool operator==(const Source&, const Source&) = default;
};

// Strips a leading '#' from hashtag identifiers and trims whitespace.
Source normalize_source(Source s);

struct PreferencePrompt {
  std::string prompt_id;
  std::string text;
  Polarity polarity = Polarity::kInclude;
  Strength strength = Strength::kPreferred;
  friend bool operator==(const PreferencePrompt&, const PreferencePrompt&) = default;
};

bool strength_allowed(Polarity polarity, Strength strength);

struct FeedConfig {
  std::string feed_id;
  std::string owner;
  std::string description;
  std::vector<Source> sources;
  std::vector<PreferencePrompt> include_prompts;
  std::vector<PreferencePrompt> limit_prompts;
  RankingStyle ranking;
  bool active = false;
  Timestamp created_at{};
  Timestamp updated_at{};
  friend bool operator==(const FeedConfig&, const FeedConfig&) = default;
};

struct MediaRef {
  std::string type;  // e.g. "image", "video", "external"
  std::string url;
  std::string alt;
  friend bool operator==(const MediaRef&, const MediaRef&) = default;
};

struct Post {
  std::string uri;
  std::string author;
  std::string text;
  std::vector<MediaRef> media;
  Timestamp created_at{};
  std::int64_t likes = 0;
  std::int64_t reposts = 0;
  std::int64_t replies = 0;
  std::optional<Source> fetched_via;
  friend bool operator==(const Post&, const Post&) = default;
};

struct CuratedPost {
  Post post;
  int score = 3;
  Bucket bucket = Bucket::kUnspecified;
  std::optional<std::string> rationale;
  friend bool operator==(const CuratedPost&, const CuratedPost&) = default;
};

struct FeedEntry {
  std::string uri;
  double final_score = 0.0;
  friend bool operator==(const FeedEntry&, const FeedEntry&) = default;
};

struct MaterializedFeed {
  std::string feed_id;
  std::uint64_t generation_id = 0;
  std::vector<FeedEntry> entries;
  Timestamp generated_at{};
  RankingWeights weights_used;
  friend bool operator==(const MaterializedFeed&, const MaterializedFeed&) = default;
};

// ---------------------------------------------------------------------------

struct Violation {
  std::string code;  // EMPTY_DESCRIPTION, ILLEGAL_STRENGTH, ...
  std::string path;  // JSON-pointer-ish location, e.g. "include_prompts/0/strength"
  std::string message;
  friend bool operator==(const Violation&, const Violation&) = default;
};

std::vector<Violation> validate_config(const FeedConfig& config);

// Throws Error(kDomain) outside 0..10.
Bucket bucket_for_score(int score);
// Inclusive score range of a bucket.
std::pair<int, int> score_range(Bucket bucket);

// ---------------------------------------------------------------------------
// JSON. Field names match the wire format exactly (snake_case).

template <typename E>
concept NamedEnum = std::is_enum_v<E> && requires { EnumNames<E>::kNames; };

template <NamedEnum E>
void to_json(Json& j, E value) {
  j = std::string(to_string(value));
}

[[noreturn]] void throw_bad_enum(std::string_view type, const Json& j);

template <NamedEnum E>
void from_json(const Json& j, E& value) {
  if (!j.is_string()) throw_bad_enum(EnumNames<E>::kNames[0], j);
  auto parsed = parse_enum<E>(j.get_ref<const std::string&>());
  if (!parsed) throw_bad_enum(EnumNames<E>::kNames[0], j);
  value = *parsed;
}

void to_json(Json& j, const Rational& r);
void from_json(const Json& j, Rational& r);
void to_json(Json& j, const RankingWeights& w);
void from_json(const Json& j, RankingWeights& w);
void to_json(Json& j, const RankingStyle& s);
void from_json(const Json& j, RankingStyle& s);
void to_json(Json& j, const Source& s);
void from_json(const Json& j, Source& s);
void to_json(Json& j, const PreferencePrompt& p);
void from_json(const Json& j, PreferencePrompt& p);
void to_json(Json& j, const FeedConfig& c);
void from_json(const Json& j, FeedConfig& c);
void to_json(Json& j, const MediaRef& m);
void from_json(const Json& j, MediaRef& m);
void to_json(Json& j, const Post& p);
void from_json(const Json& j, Post& p);
void to_json(Json& j, const CuratedPost& c);
void from_json(const Json& j, CuratedPost& c);
void to_json(Json& j, const FeedEntry& e);
void from_json(const Json& j, FeedEntry& e);
void to_json(Json& j, const MaterializedFeed& f);
void from_json(const Json& j, MaterializedFeed& f);
void to_json(Json& j, const Violation& v);
void to_json(Json& j, const PresetTable& t);
void from_json(const Json& j, PresetTable& t);

}  // namespace bonsai

namespace nlohmann {
template <>
struct adl_serializer<bonsai::Timestamp> {
  static void to_json(json& j, const bonsai::Timestamp& t) { j = bonsai::format_rfc3339(t); }
  static void from_json(const json& j, bonsai::Timestamp& t) {
    t = bonsai::parse_rfc3339(j.get<std::string>());
  }
};
}  // namespace nlohmann
