#include "bonsai/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "bonsai/error.hpp"
#include "bonsai/util.hpp"

namespace bonsai {

namespace chr = std::chrono;

Timestamp now_utc() { return chr::time_point_cast<chr::milliseconds>(chr::system_clock::now()); }

std::string format_rfc3339(Timestamp t) {
  auto day = chr::floor<chr::days>(t);
  chr::year_month_day ymd{day};
  chr::hh_mm_ss<chr::milliseconds> tod{t - day};
  char buf[40];
  int n = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d",
                        static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                        static_cast<unsigned>(ymd.day()), static_cast<int>(tod.hours().count()),
                        static_cast<int>(tod.minutes().count()),
                        static_cast<int>(tod.seconds().count()));
  std::string out(buf, static_cast<std::size_t>(n));
  if (auto ms = tod.subseconds().count(); ms != 0) {
    std::snprintf(buf, sizeof buf, ".%03d", static_cast<int>(ms));
    out += buf;
  }
  out += 'Z';
  return out;
}

namespace {

[[noreturn]] void bad_timestamp(std::string_view text) {
  throw Error(ErrorCode::kBadRequest, "invalid RFC 3339 timestamp: '" + std::string(text) + "'");
}

int read_digits(std::string_view text, std::size_t& pos, std::size_t count) {
  if (pos + count > text.size()) bad_timestamp(text);
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + count, value);
  if (ec != std::errc{} || ptr != text.data() + pos + count) bad_timestamp(text);
  pos += count;
  return value;
}

void expect(std::string_view text, std::size_t& pos, std::string_view chars) {
  if (pos >= text.size() || chars.find(text[pos]) == std::string_view::npos) bad_timestamp(text);
  ++pos;
}

}  // namespace

Timestamp parse_rfc3339(std::string_view text) {
  std::size_t pos = 0;
  int year = read_digits(text, pos, 4);
  expect(text, pos, "-");
  int month = read_digits(text, pos, 2);
  expect(text, pos, "-");
  int day = read_digits(text, pos, 2);
  expect(text, pos, "Tt ");
  int hour = read_digits(text, pos, 2);
  expect(text, pos, ":");
  int minute = read_digits(text, pos, 2);
  expect(text, pos, ":");
  int second = read_digits(text, pos, 2);

  chr::milliseconds frac{0};
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    std::size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    if (pos == start) bad_timestamp(text);
    std::string digits(text.substr(start, std::min<std::size_t>(pos - start, 3)));
    digits.resize(3, '0');
    frac = chr::milliseconds{std::stoi(digits)};
  }

  chr::minutes offset{0};
  if (pos >= text.size()) bad_timestamp(text);
  if (text[pos] == 'Z' || text[pos] == 'z') {
    ++pos;
  } else if (text[pos] == '+' || text[pos] == '-') {
    int sign = text[pos] == '-' ? -1 : 1;
    ++pos;
    int oh = read_digits(text, pos, 2);
    expect(text, pos, ":");
    int om = read_digits(text, pos, 2);
    offset = chr::minutes{sign * (oh * 60 + om)};
  } else {
    bad_timestamp(text);
  }
  if (pos != text.size()) bad_timestamp(text);

  chr::year_month_day ymd{chr::year{year}, chr::month{static_cast<unsigned>(month)},
                          chr::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) bad_timestamp(text);
  auto tp = chr::sys_days{ymd} + chr::hours{hour} + chr::minutes{minute} + chr::seconds{second};
  return chr::time_point_cast<chr::milliseconds>(tp) + frac - offset;
}

// ---------------------------------------------------------------------------
// Rational

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw Error(ErrorCode::kDomain, "rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  auto g = std::gcd(num, den);
  if (g == 0) g = 1;
  num_ = num / g;
  den_ = den / g;
}

Rational Rational::parse(std::string_view text) {
  text = util::trim(text);
  auto fail = [&]() -> Rational {
    throw Error(ErrorCode::kDomain, "not a rational number: '" + std::string(text) + "'");
  };
  if (text.empty()) return fail();
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    std::int64_t n = 0;
    std::int64_t d = 0;
    auto a = text.substr(0, slash);
    auto b = text.substr(slash + 1);
    auto r1 = std::from_chars(a.data(), a.data() + a.size(), n);
    auto r2 = std::from_chars(b.data(), b.data() + b.size(), d);
    if (r1.ec != std::errc{} || r1.ptr != a.data() + a.size() || r2.ec != std::errc{} ||
        r2.ptr != b.data() + b.size() || d == 0)
      return fail();
    return Rational(n, d);
  }
  bool negative = false;
  std::size_t pos = 0;
  if (text[0] == '-' || text[0] == '+') {
    negative = text[0] == '-';
    pos = 1;
  }
  std::int64_t num = 0;
  std::int64_t den = 1;
  bool seen_point = false;
  bool seen_digit = false;
  for (; pos < text.size(); ++pos) {
    char c = text[pos];
    if (c == '.' && !seen_point) {
      seen_point = true;
      continue;
    }
    if (c < '0' || c > '9') return fail();
    seen_digit = true;
    if (num > 100'000'000'000LL || den > 100'000'000'000LL) return fail();
    num = num * 10 + (c - '0');
    if (seen_point) den *= 10;
  }
  if (!seen_digit) return fail();
  return Rational(negative ? -num : num, den);
}

Rational Rational::from_double(double value) {
  if (!std::isfinite(value)) throw Error(ErrorCode::kDomain, "non-finite weight");
  constexpr std::int64_t kMaxDen = 1'000'000;
  // Continued-fraction convergents until within tolerance.
  std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double x = value;
  for (int iter = 0; iter < 64; ++iter) {
    double a_f = std::floor(x);
    if (std::abs(a_f) > 9e15) break;
    auto a = static_cast<std::int64_t>(a_f);
    std::int64_t h2 = a * h1 + h0;
    std::int64_t k2 = a * k1 + k0;
    if (k2 > kMaxDen) break;
    h0 = h1;
    h1 = h2;
    k0 = k1;
    k1 = k2;
    if (std::abs(static_cast<double>(h1) / static_cast<double>(k1) - value) < 1e-12) break;
    double frac = x - a_f;
    if (frac < 1e-15) break;
    x = 1.0 / frac;
  }
  if (k1 == 0) throw Error(ErrorCode::kDomain, "weight not representable");
  return Rational(h1, k1);
}

Rational operator+(const Rational& a, const Rational& b) {
  __int128 n = static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_;
  __int128 d = static_cast<__int128>(a.den_) * b.den_;
  // Reduce in 128-bit before narrowing.
  __int128 x = n < 0 ? -n : n;
  __int128 y = d;
  while (y != 0) {
    __int128 t = x % y;
    x = y;
    y = t;
  }
  if (x == 0) x = 1;
  n /= x;
  d /= x;
  if (d > INT64_MAX || n > INT64_MAX || n < INT64_MIN)
    throw Error(ErrorCode::kDomain, "rational overflow");
  return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
  __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
  if (lhs < rhs) return std::strong_ordering::less;
  if (lhs > rhs) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

bool RankingWeights::valid() const {
  const Rational zero{0}, one{1};
  for (const auto* w : {&relevance, &popularity, &recency}) {
    if (*w < zero || *w > one) return false;
  }
  return relevance + popularity + recency == one;
}

PresetTable PresetTable::defaults() {
  auto w = [](int r, int p, int c) {
    return RankingWeights{Rational(r, 100), Rational(p, 100), Rational(c, 100)};
  };
  return PresetTable{
      .focused = w(70, 10, 20),
      .fresh = w(20, 10, 70),
      .balanced = w(40, 30, 30),
      .trending = w(20, 70, 10),
  };
}

const RankingWeights& PresetTable::get(RankingPreset p) const {
  switch (p) {
    case RankingPreset::kFocused: return focused;
    case RankingPreset::kFresh: return fresh;
    case RankingPreset::kBalanced: return balanced;
    case RankingPreset::kTrending: return trending;
    case RankingPreset::kCustom: break;
  }
  throw Error(ErrorCode::kDomain, "custom style has no preset weights");
}

RankingWeights weights_for_style(const RankingStyle& style, const PresetTable& presets) {
  if (style.preset != RankingPreset::kCustom) return presets.get(style.preset);
  if (!style.custom) throw Error(ErrorCode::kDomain, "custom ranking style without weights");
  if (!style.custom->valid())
    throw Error(ErrorCode::kDomain, "ranking weights must lie in [0,1] and sum to 1");
  return *style.custom;
}

// ---------------------------------------------------------------------------

Source normalize_source(Source s) {
  s.identifier = std::string(util::trim(s.identifier));
  if (s.kind == SourceKind::kHashtag) {
    while (!s.identifier.empty() && s.identifier.front() == '#') s.identifier.erase(0, 1);
  }
  return s;
}

bool strength_allowed(Polarity polarity, Strength strength) {
  switch (strength) {
    case Strength::kStronglyPreferred:
    case Strength::kPreferred: return polarity == Polarity::kInclude;
    case Strength::kNeverShown:
    case Strength::kShownLessOften: return polarity == Polarity::kLimit;
  }
  return false;
}

std::vector<Violation> validate_config(const FeedConfig& config) {
  std::vector<Violation> out;
  if (util::trim(config.description).empty()) {
    out.push_back({"EMPTY_DESCRIPTION", "description", "description must not be empty"});
  }

  std::set<std::pair<SourceKind, std::string>> seen_sources;
  for (std::size_t i = 0; i < config.sources.size(); ++i) {
    const auto& s = config.sources[i];
    auto path = "sources/" + std::to_string(i);
    if (util::trim(s.identifier).empty()) {
      out.push_back({"EMPTY_SOURCE_IDENTIFIER", path + "/identifier",
                     "source identifier must not be empty"});
    }
    if (s.kind == SourceKind::kHashtag && !s.identifier.empty() && s.identifier.front() == '#') {
      out.push_back({"HASHTAG_PREFIX", path + "/identifier",
                     "hashtag identifiers are stored without a leading '#'"});
    }
    if (!seen_sources.insert(s.key()).second) {
      out.push_back({"DUPLICATE_SOURCE", path,
                     "duplicate source " + std::string(to_string(s.kind)) + " '" + s.identifier +
                         "'"});
    }
  }

  std::set<std::string> seen_ids;
  auto check_prompts = [&](const std::vector<PreferencePrompt>& prompts, Polarity expected,
                           std::string_view list) {
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const auto& p = prompts[i];
      auto path = std::string(list) + "/" + std::to_string(i);
      if (util::trim(p.text).empty()) {
        out.push_back({"EMPTY_PROMPT_TEXT", path + "/text", "prompt text must not be empty"});
      }
      if (p.polarity != expected) {
        out.push_back({"WRONG_POLARITY", path + "/polarity",
                       "prompt in " + std::string(list) + " must have polarity " +
                           std::string(to_string(expected))});
      }
      if (!strength_allowed(p.polarity, p.strength)) {
        out.push_back({"ILLEGAL_STRENGTH", path + "/strength",
                       "strength " + std::string(to_string(p.strength)) +
                           " is not allowed for polarity " + std::string(to_string(p.polarity))});
      }
      if (p.prompt_id.empty()) {
        out.push_back({"EMPTY_PROMPT_ID", path + "/prompt_id", "prompt id must not be empty"});
      } else if (!seen_ids.insert(p.prompt_id).second) {
        out.push_back({"DUPLICATE_PROMPT_ID", path + "/prompt_id",
                       "prompt id '" + p.prompt_id + "' is not unique"});
      }
    }
  };
  check_prompts(config.include_prompts, Polarity::kInclude, "include_prompts");
  check_prompts(config.limit_prompts, Polarity::kLimit, "limit_prompts");

  if (config.ranking.preset == RankingPreset::kCustom &&
      (!config.ranking.custom || !config.ranking.custom->valid())) {
    out.push_back({"INVALID_WEIGHTS", "ranking/weights",
                   "custom weights must lie in [0,1] and sum to 1"});
  }
  return out;
}

Bucket bucket_for_score(int score) {
  if (score < 0 || score > 10) {
    throw Error(ErrorCode::kDomain, "score " + std::to_string(score) + " outside 0..10");
  }
  if (score >= 8) return Bucket::kStronglyPrefer;
  if (score >= 5) return Bucket::kPrefer;
  if (score >= 3) return Bucket::kUnspecified;
  if (score >= 1) return Bucket::kShowLess;
  return Bucket::kNever;
}

std::pair<int, int> score_range(Bucket bucket) {
  switch (bucket) {
    case Bucket::kStronglyPrefer: return {8, 10};
    case Bucket::kPrefer: return {5, 7};
    case Bucket::kUnspecified: return {3, 4};
    case Bucket::kShowLess: return {1, 2};
    case Bucket::kNever: return {0, 0};
  }
  return {0, 0};
}

// ---------------------------------------------------------------------------
// JSON

void throw_bad_enum(std::string_view type, const Json& j) {
  throw Error(ErrorCode::kBadRequest,
              "invalid enum value " + j.dump() + " (expected a name like '" + std::string(type) +
                  "')");
}

namespace {

template <typename T>
void get_optional(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) it->get_to(out);
}

std::int64_t get_counter(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return 0;
  auto v = it->get<std::int64_t>();
  if (v < 0) throw Error(ErrorCode::kBadRequest, std::string(key) + " must be non-negative");
  return v;
}

}  // namespace

void to_json(Json& j, const Rational& r) { j = r.to_double(); }

void from_json(const Json& j, Rational& r) {
  if (j.is_string()) {
    r = Rational::parse(j.get_ref<const std::string&>());
  } else if (j.is_number_integer()) {
    r = Rational(j.get<std::int64_t>());
  } else if (j.is_number()) {
    r = Rational::from_double(j.get<double>());
  } else {
    throw Error(ErrorCode::kBadRequest, "weight must be a number");
  }
}

void to_json(Json& j, const RankingWeights& w) {
  j = Json{{"w_relevance", w.relevance}, {"w_popularity", w.popularity}, {"w_recency", w.recency}};
}

void from_json(const Json& j, RankingWeights& w) {
  j.at("w_relevance").get_to(w.relevance);
  j.at("w_popularity").get_to(w.popularity);
  j.at("w_recency").get_to(w.recency);
}

void to_json(Json& j, const RankingStyle& s) {
  j = Json{{"style", s.preset}};
  if (s.preset == RankingPreset::kCustom && s.custom) j["weights"] = *s.custom;
}

void from_json(const Json& j, RankingStyle& s) {
  if (j.is_string()) {
    j.get_to(s.preset);
    s.custom.reset();
    return;
  }
  j.at("style").get_to(s.preset);
  s.custom.reset();
  if (s.preset == RankingPreset::kCustom) {
    if (auto it = j.find("weights"); it != j.end()) s.custom = it->get<RankingWeights>();
  }
}

void to_json(Json& j, const Source& s) {
  j = Json{{"kind", s.kind},
           {"identifier", s.identifier},
           {"display_title", s.display_title},
           {"origin", s.origin}};
}

void from_json(const Json& j, Source& s) {
  j.at("kind").get_to(s.kind);
  j.at("identifier").get_to(s.identifier);
  s.display_title.clear();
  get_optional(j, "display_title", s.display_title);
  s.origin = SourceOrigin::kUserAdded;
  get_optional(j, "origin", s.origin);
}

void to_json(Json& j, const PreferencePrompt& p) {
  j = Json{{"prompt_id", p.prompt_id},
           {"text", p.text},
           {"polarity", p.polarity},
           {"strength", p.strength}};
}

void from_json(const Json& j, PreferencePrompt& p) {
  j.at("prompt_id").get_to(p.prompt_id);
  j.at("text").get_to(p.text);
  j.at("polarity").get_to(p.polarity);
  j.at("strength").get_to(p.strength);
}

void to_json(Json& j, const FeedConfig& c) {
  j = Json{{"feed_id", c.feed_id},
           {"owner", c.owner},
           {"description", c.description},
           {"sources", c.sources},
           {"include_prompts", c.include_prompts},
           {"limit_prompts", c.limit_prompts},
           {"ranking", c.ranking},
           {"active", c.active},
           {"created_at", c.created_at},
           {"updated_at", c.updated_at}};
}

void from_json(const Json& j, FeedConfig& c) {
  c = FeedConfig{};
  get_optional(j, "feed_id", c.feed_id);
  get_optional(j, "owner", c.owner);
  j.at("description").get_to(c.description);
  get_optional(j, "sources", c.sources);
  get_optional(j, "include_prompts", c.include_prompts);
  get_optional(j, "limit_prompts", c.limit_prompts);
  get_optional(j, "ranking", c.ranking);
  get_optional(j, "active", c.active);
  get_optional(j, "created_at", c.created_at);
  get_optional(j, "updated_at", c.updated_at);
}

void to_json(Json& j, const MediaRef& m) {
  j = Json{{"type", m.type}, {"url", m.url}};
  if (!m.alt.empty()) j["alt"] = m.alt;
}

void from_json(const Json& j, MediaRef& m) {
  j.at("type").get_to(m.type);
  m.url.clear();
  m.alt.clear();
  get_optional(j, "url", m.url);
  get_optional(j, "alt", m.alt);
}

void to_json(Json& j, const Post& p) {
  j = Json{{"uri", p.uri},
           {"author", p.author},
           {"text", p.text},
           {"media", p.media},
           {"created_at", p.created_at},
           {"likes", p.likes},
           {"reposts", p.reposts},
           {"replies", p.replies}};
  if (p.fetched_via) j["fetched_via"] = *p.fetched_via;
}

void from_json(const Json& j, Post& p) {
  p = Post{};
  j.at("uri").get_to(p.uri);
  get_optional(j, "author", p.author);
  get_optional(j, "text", p.text);
  get_optional(j, "media", p.media);
  j.at("created_at").get_to(p.created_at);
  p.likes = get_counter(j, "likes");
  p.reposts = get_counter(j, "reposts");
  p.replies = get_counter(j, "replies");
  if (auto it = j.find("fetched_via"); it != j.end() && !it->is_null())
    p.fetched_via = it->get<Source>();
}

void to_json(Json& j, const CuratedPost& c) {
  j = Json{{"post", c.post}, {"score", c.score}, {"bucket", c.bucket}};
  if (c.rationale) j["rationale"] = *c.rationale;
}

void from_json(const Json& j, CuratedPost& c) {
  j.at("post").get_to(c.post);
  j.at("score").get_to(c.score);
  c.bucket = bucket_for_score(c.score);
  c.rationale.reset();
  if (auto it = j.find("rationale"); it != j.end() && it->is_string())
    c.rationale = it->get<std::string>();
}

void to_json(Json& j, const FeedEntry& e) { j = Json{{"uri", e.uri}, {"final_score", e.final_score}}; }

void from_json(const Json& j, FeedEntry& e) {
  j.at("uri").get_to(e.uri);
  j.at("final_score").get_to(e.final_score);
}

void to_json(Json& j, const MaterializedFeed& f) {
  j = Json{{"feed_id", f.feed_id},
           {"generation_id", f.generation_id},
           {"entries", f.entries},
           {"generated_at", f.generated_at},
           {"weights_used", f.weights_used}};
}

void from_json(const Json& j, MaterializedFeed& f) {
  j.at("feed_id").get_to(f.feed_id);
  j.at("generation_id").get_to(f.generation_id);
  j.at("entries").get_to(f.entries);
  j.at("generated_at").get_to(f.generated_at);
  j.at("weights_used").get_to(f.weights_used);
}

void to_json(Json& j, const Violation& v) {
  j = Json{{"code", v.code}, {"path", v.path}, {"message", v.message}};
}

void to_json(Json& j, const PresetTable& t) {
  j = Json{{"focused", t.focused},
           {"fresh", t.fresh},
           {"balanced", t.balanced},
           {"trending", t.trending}};
}

void from_json(const Json& j, PresetTable& t) {
  t = PresetTable::defaults();
  get_optional(j, "focused", t.focused);
  get_optional(j, "fresh", t.fresh);
  get_optional(j, "balanced", t.balanced);
  get_optional(j, "trending", t.trending);
  for (auto p : {RankingPreset::kFocused, RankingPreset::kFresh, RankingPreset::kBalanced,
                 RankingPreset::kTrending}) {
    if (!t.get(p).valid()) {
      throw Error(ErrorCode::kConfig,
                  "preset '" + std::string(to_string(p)) + "' weights must sum to 1");
    }
  }
}

}  // namespace bonsai
