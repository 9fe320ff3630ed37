#include "bonsai/lm.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/util.hpp"

namespace bonsai::lm {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::kPlan: return "plan";
    case Task::kSuggestSources: return "suggest_sources";
    case Task::kCurate: return "curate";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Schemas

namespace {

using Reason = std::optional<std::string>;

Reason require_object(const Json& j, std::string_view what) {
  if (!j.is_object()) return std::string(what) + " must be a JSON object";
  return std::nullopt;
}

Reason require_string_array(const Json& j, const char* key, bool required) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) return std::string("missing field '") + key + "'";
    return std::nullopt;
  }
  if (!it->is_array()) return std::string("'") + key + "' must be an array";
  for (const auto& e : *it) {
    if (!e.is_string()) return std::string("'") + key + "' must contain only strings";
  }
  return std::nullopt;
}

Reason check_prompt_list(const Json& j, const char* key, Polarity polarity) {
  auto it = j.find(key);
  if (it == j.end()) return std::string("missing field '") + key + "'";
  if (!it->is_array()) return std::string("'") + key + "' must be an array";
  for (const auto& p : *it) {
    if (!p.is_object()) return std::string("'") + key + "' entries must be objects";
    auto text = p.find("text");
    if (text == p.end() || !text->is_string() || util::trim(text->get<std::string>()).empty())
      return std::string("'") + key + "' entries need a non-empty 'text'";
    auto strength = p.find("strength");
    if (strength == p.end() || !strength->is_string())
      return std::string("'") + key + "' entries need a 'strength'";
    auto s = parse_enum<Strength>(strength->get<std::string>());
    if (!s || !strength_allowed(polarity, *s))
      return std::string("strength '") + strength->get<std::string>() + "' not allowed in '" +
             key + "'";
  }
  return std::nullopt;
}

Reason check_source_list(const Json& j, const char* key, bool required) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) return std::string("missing field '") + key + "'";
    return std::nullopt;
  }
  if (!it->is_array()) return std::string("'") + key + "' must be an array";
  for (const auto& s : *it) {
    if (!s.is_object()) return std::string("'") + key + "' entries must be objects";
    auto kind = s.find("kind");
    if (kind == s.end() || !kind->is_string() || !parse_enum<SourceKind>(kind->get<std::string>()))
      return std::string("'") + key + "' entry has an invalid 'kind'";
    auto ident = s.find("identifier");
    if (ident == s.end() || !ident->is_string() || util::trim(ident->get<std::string>()).empty())
      return std::string("'") + key + "' entry needs a non-empty 'identifier'";
    if (auto t = s.find("display_title"); t != s.end() && !t->is_string())
      return std::string("'") + key + "' entry 'display_title' must be a string";
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> validate_request(const Request& request) {
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0))
    return "temperature must lie in [0,2]";
  if (request.max_output_tokens <= 0) return "max_output_tokens must be positive";
  const Json& p = request.user_payload;
  if (auto r = require_object(p, "user_payload")) return r;
  switch (request.task) {
    case Task::kPlan: {
      auto d = p.find("description");
      if (d == p.end() || !d->is_string() || util::trim(d->get<std::string>()).empty())
        return "plan payload needs a non-empty 'description'";
      return std::nullopt;
    }
    case Task::kSuggestSources: {
      if (auto r = require_string_array(p, "include_prompts", true)) return r;
      if (auto r = check_source_list(p, "existing_sources", false)) return r;
      return std::nullopt;
    }
    case Task::kCurate: {
      auto post = p.find("post");
      if (post == p.end() || !post->is_object()) return "curate payload needs a 'post' object";
      auto text = post->find("text");
      if (text == post->end() || !text->is_string()) return "curate 'post' needs a 'text' string";
      if (auto m = post->find("media"); m != post->end() && !m->is_array())
        return "curate 'post.media' must be an array";
      for (const char* key : {"include_prompts", "limit_prompts"}) {
        auto it = p.find(key);
        if (it == p.end() || !it->is_array())
          return std::string("curate payload needs an array '") + key + "'";
      }
      return std::nullopt;
    }
  }
  return "unknown task";
}

std::optional<std::string> validate_response(Task task, const Json& c) {
  if (auto r = require_object(c, "response")) return r;
  switch (task) {
    case Task::kPlan:
      for (const char* key : {"search_terms", "hashtags", "accounts"}) {
        if (auto r = require_string_array(c, key, true)) return r;
      }
      if (auto r = require_string_array(c, "search_queries", false)) return r;
      if (auto r = check_prompt_list(c, "include_prompts", Polarity::kInclude)) return r;
      if (auto r = check_prompt_list(c, "limit_prompts", Polarity::kLimit)) return r;
      if (auto r = check_source_list(c, "sources", false)) return r;
      return std::nullopt;
    case Task::kSuggestSources:
      return check_source_list(c, "sources", true);
    case Task::kCurate: {
      auto inc = c.find("include");
      if (inc == c.end() || !inc->is_boolean()) return "missing boolean 'include'";
      auto score = c.find("score");
      if (score == c.end() || !score->is_number_integer()) return "missing integer 'score'";
      auto s = score->get<std::int64_t>();
      if (s < 0 || s > 10) return "'score' must lie in 0..10";
      if (inc->get<bool>() != (s > 0)) return "'include' must be true exactly when score > 0";
      if (auto r = c.find("rationale"); r != c.end() && !r->is_string())
        return "'rationale' must be a string";
      return std::nullopt;
    }
  }
  return "unknown task";
}

// ---------------------------------------------------------------------------
// Provider

Provider::Provider(std::ptrdiff_t max_in_flight)
    : slots_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 1024)) {}

Response Provider::complete(const Request& request) {
  if (auto reason = validate_request(request)) {
    throw Error(ErrorCode::kSchemaViolation, "invalid " + std::string(task_name(request.task)) +
                                                 " request: " + *reason);
  }

  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};

  Json first = generate(request, nullptr);
  auto reason = validate_response(request.task, first);
  if (!reason) return Response{std::move(first), Json{{"repaired", false}}};

  log::warn("lm response failed schema validation, re-prompting",
            {{"task", task_name(request.task)}, {"error", *reason}});
  RepairContext repair{first.is_string() ? first.get<std::string>() : first.dump(), *reason};
  Json second = generate(request, &repair);
  if (auto again = validate_response(request.task, second)) {
    throw Error(ErrorCode::kSchemaViolation, std::string(task_name(request.task)) +
                                                 " response invalid after repair: " + *again);
  }
  return Response{std::move(second), Json{{"repaired", true}}};
}

// ---------------------------------------------------------------------------
// Mock rules

MockRules parse_mock_rules(const Json& doc) {
  MockRules rules;
  if (doc.is_null()) return rules;
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "mock rules must be a JSON object");
  try {
    if (auto it = doc.find("default_score"); it != doc.end()) {
      rules.default_score = it->get<int>();
      if (rules.default_score < 1 || rules.default_score > 10)
        throw Error(ErrorCode::kConfig, "default_score must lie in 1..10");
    }
    std::map<std::string, std::size_t> curate_index;
    if (auto it = doc.find("curate"); it != doc.end()) {
      for (const auto& r : *it) {
        CurateRule rule{r.at("keyword").get<std::string>(), r.at("score").get<int>()};
        if (util::trim(rule.keyword).empty())
          throw Error(ErrorCode::kConfig, "curate rule with empty keyword");
        if (rule.score < 0 || rule.score > 10)
          throw Error(ErrorCode::kConfig, "curate rule score outside 0..10 for '" + rule.keyword + "'");
        auto key = util::to_lower(rule.keyword);
        if (auto found = curate_index.find(key); found != curate_index.end()) {
          log::warn("duplicate mock curate keyword, last entry wins", {{"keyword", rule.keyword}});
          rules.curate[found->second] = rule;
        } else {
          curate_index.emplace(key, rules.curate.size());
          rules.curate.push_back(rule);
        }
      }
    }
    std::map<std::string, std::size_t> plan_index;
    if (auto it = doc.find("plan"); it != doc.end()) {
      for (const auto& r : *it) {
        PlanRule rule;
        rule.keyword = r.at("keyword").get<std::string>();
        if (util::trim(rule.keyword).empty())
          throw Error(ErrorCode::kConfig, "plan rule with empty keyword");
        if (auto st = r.find("search_terms"); st != r.end()) st->get_to(rule.search_terms);
        if (auto src = r.find("sources"); src != r.end()) {
          for (const auto& s : *src) {
            Source parsed = normalize_source(s.get<Source>());
            parsed.origin = SourceOrigin::kPlannerSuggested;
            rule.sources.push_back(std::move(parsed));
          }
        }
        auto key = util::to_lower(rule.keyword);
        if (auto found = plan_index.find(key); found != plan_index.end()) {
          log::warn("duplicate mock plan keyword, last entry wins", {{"keyword", rule.keyword}});
          rules.plan[found->second] = std::move(rule);
        } else {
          plan_index.emplace(key, rules.plan.size());
          rules.plan.push_back(std::move(rule));
        }
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed mock rules: ") + e.what());
  }
  return rules;
}

MockRules load_mock_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open mock rules file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto text = buf.str();
  if (util::trim(text).empty()) return MockRules{};
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kConfig, "mock rules " + path.string() + ": " + e.what());
  }
  return parse_mock_rules(doc);
}

// ---------------------------------------------------------------------------
// Mock provider

namespace {

const std::set<std::string>& stop_words() {
  static const std::set<std::string> kWords{
      "a",     "about", "all",   "an",    "and",   "any",   "are",   "as",    "at",
      "be",    "but",   "by",    "can",   "content", "do",  "feed",  "for",   "from",
      "get",   "give",  "have",  "i",     "in",    "into",  "is",    "it",    "its",
      "just",  "like",  "me",    "more",  "my",    "of",    "on",    "only",  "or",
      "other", "our",   "please", "post", "posts", "show",  "some",  "stuff", "that",
      "the",   "their", "them",  "these", "things", "this", "those", "to",    "want",
      "was",   "we",    "what",  "when",  "which", "while", "who",   "with",  "you",
      "your"};
  return kWords;
}

struct Clause {
  std::string text;
  Polarity polarity;
  Strength strength;
};

bool starts_with_word(std::string_view lower, std::string_view prefix) {
  return lower.size() > prefix.size() && lower.substr(0, prefix.size()) == prefix;
}

std::vector<Clause> split_clauses(std::string_view description) {
  std::vector<std::string> pieces;
  std::string current;
  auto flush = [&] {
    auto t = util::trim(current);
    if (!t.empty()) pieces.emplace_back(t);
    current.clear();
  };
  for (std::size_t i = 0; i < description.size(); ++i) {
    char c = description[i];
    if (c == ',' || c == ';' || c == '.' || c == '!' || c == '?' || c == '\n') {
      flush();
      continue;
    }
    if (util::to_lower(description.substr(i, 5)) == " but ") {
      flush();
      i += 4;
      continue;
    }
    current.push_back(c);
  }
  flush();

  static const std::vector<std::pair<std::string_view, Strength>> kLimitMarkers{
      {"no more ", Strength::kNeverShown},   {"no ", Strength::kNeverShown},
      {"not ", Strength::kNeverShown},       {"never ", Strength::kNeverShown},
      {"without ", Strength::kNeverShown},   {"avoid ", Strength::kNeverShown},
      {"nothing ", Strength::kNeverShown},   {"don't show ", Strength::kNeverShown},
      {"less ", Strength::kShownLessOften},  {"fewer ", Strength::kShownLessOften},
      {"not much ", Strength::kShownLessOften}, {"minimal ", Strength::kShownLessOften},
  };
  static const std::vector<std::string_view> kSoftMarkers{"some ", "maybe ", "occasional ",
                                                           "a bit of "};

  std::vector<Clause> clauses;
  for (auto& piece : pieces) {
    auto lower = util::to_lower(piece);
    std::optional<Clause> clause;
    // Longest markers are listed first where they share a prefix.
    for (auto [marker, strength] : kLimitMarkers) {
      if (starts_with_word(lower, marker)) {
        if (marker == "not " && starts_with_word(lower, "not much ")) continue;
        clause = Clause{std::string(util::trim(piece.substr(marker.size()))), Polarity::kLimit,
                        strength};
        break;
      }
    }
    if (!clause) {
      Strength s = Strength::kStronglyPreferred;
      for (auto marker : kSoftMarkers) {
        if (starts_with_word(lower, marker)) s = Strength::kPreferred;
      }
      clause = Clause{piece, Polarity::kInclude, s};
    }
    if (!util::trim(clause->text).empty()) clauses.push_back(std::move(*clause));
  }
  return clauses;
}

std::vector<std::string> content_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 3 && !stop_words().contains(current)) words.push_back(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '\'') {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return words;
}

void push_unique(Json& array, const std::string& value) {
  for (const auto& e : array) {
    if (e == value) return;
  }
  array.push_back(value);
}

std::string topic_phrase(std::string_view prompt) {
  auto lower = util::to_lower(prompt);
  for (std::string_view prefix : {"posts about ", "content about ", "things about ", "about ",
                                  "more ", "posts on ", "news about "}) {
    if (starts_with_word(lower, prefix)) return std::string(util::trim(prompt.substr(prefix.size())));
  }
  return std::string(util::trim(prompt));
}

}  // namespace

MockProvider::MockProvider(MockRules rules, std::ptrdiff_t max_in_flight)
    : Provider(max_in_flight), rules_(std::move(rules)) {}

Json MockProvider::curate(const Json& payload) const {
  const auto& text = payload.at("post").at("text").get_ref<const std::string&>();
  std::optional<int> best;
  std::string matched;
  for (const auto& rule : rules_.curate) {
    if (!util::contains_icase(text, rule.keyword)) continue;
    if (rule.score == 0) {
      best = 0;
      matched = rule.keyword;
      break;
    }
    if (!best || rule.score > *best) {
      best = rule.score;
      matched = rule.keyword;
    }
  }
  int score = best.value_or(rules_.default_score);
  Json out{{"include", score > 0}, {"score", score}};
  out["rationale"] = best ? "matched rule '" + matched + "'" : std::string("no rule matched");
  return out;
}

Json MockProvider::plan(const Json& payload) const {
  const auto& description = payload.at("description").get_ref<const std::string&>();
  Json out{{"search_terms", Json::array()},    {"search_queries", Json::array()},
           {"hashtags", Json::array()},        {"accounts", Json::array()},
           {"include_prompts", Json::array()}, {"limit_prompts", Json::array()},
           {"sources", Json::array()}};

  auto clauses = split_clauses(description);
  bool any_rule = false;
  for (const auto& rule : rules_.plan) {
    // Rules only fire on the positive part of the intent.
    bool hit = false;
    for (const auto& c : clauses) {
      if (c.polarity == Polarity::kInclude && util::contains_icase(c.text, rule.keyword)) hit = true;
    }
    if (!hit) continue;
    any_rule = true;
    for (const auto& term : rule.search_terms) push_unique(out["search_terms"], term);
    for (const auto& s : rule.sources) {
      switch (s.kind) {
        case SourceKind::kHashtag: push_unique(out["hashtags"], s.identifier); break;
        case SourceKind::kAccount: push_unique(out["accounts"], s.identifier); break;
        case SourceKind::kSearchQuery: push_unique(out["search_queries"], s.identifier); break;
        default: out["sources"].push_back(s); break;
      }
    }
  }

  for (const auto& c : clauses) {
    Json prompt{{"text", c.text}, {"strength", c.strength}};
    if (c.polarity == Polarity::kInclude) {
      out["include_prompts"].push_back(prompt);
      push_unique(out["search_queries"], c.text);
      if (!any_rule) {
        for (auto& w : content_words(c.text)) push_unique(out["search_terms"], w);
      }
    } else {
      out["limit_prompts"].push_back(prompt);
    }
  }
  return out;
}

Json MockProvider::suggest_sources(const Json& payload) const {
  Json sources = Json::array();
  std::set<std::pair<std::string, std::string>> seen;
  auto add = [&](const Json& s) {
    auto key = std::make_pair(s.at("kind").get<std::string>(), s.at("identifier").get<std::string>());
    if (seen.insert(key).second) sources.push_back(s);
  };
  for (const auto& p : payload.at("include_prompts")) {
    const auto& text = p.get_ref<const std::string&>();
    auto phrase = topic_phrase(text);
    if (!phrase.empty()) {
      add(Json{{"kind", "search_query"}, {"identifier", phrase}, {"display_title", "Search: " + phrase}});
    }
    for (const auto& rule : rules_.plan) {
      if (!util::contains_icase(text, rule.keyword)) continue;
      for (const auto& s : rule.sources) add(Json(s));
    }
  }
  return Json{{"sources", sources}};
}

Json MockProvider::generate(const Request& request, const RepairContext* /*repair*/) {
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  if (fail_with_) throw Error(*fail_with_, "mock provider configured to fail");
  switch (request.task) {
    case Task::kCurate: return curate(request.user_payload);
    case Task::kPlan: return plan(request.user_payload);
    case Task::kSuggestSources: return suggest_sources(request.user_payload);
  }
  return Json::object();
}

}  // namespace bonsai::lm
