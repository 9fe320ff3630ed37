#include "bonsai/planner.hpp"

#include <set>

#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/util.hpp"

namespace bonsai::planner {

namespace {

constexpr std::string_view kPlanSystemPrompt =
    "You help a person build a social media feed that matches their stated intent. "
    "Read their description and reply with one JSON object with these fields: "
    "\"search_terms\" (short topic keywords used to look up existing feeds, lists and starter "
    "packs), \"search_queries\" (full-text post search queries), \"hashtags\" (without '#'), "
    "\"accounts\" (handles or DIDs worth following), \"include_prompts\" (list of {\"text\", "
    "\"strength\"} where strength is \"strongly_preferred\" or \"preferred\"), and "
    "\"limit_prompts\" (list of {\"text\", \"strength\"} where strength is \"never_shown\" or "
    "\"shown_less_often\"). Keep each prompt a short plain-language topic statement.";

constexpr std::string_view kSuggestSystemPrompt =
    "Given the content preferences of a feed and the sources it already uses, suggest additional "
    "sources. Reply with one JSON object {\"sources\": [{\"kind\", \"identifier\", "
    "\"display_title\"}]} where kind is one of feed, list, starter_pack, account, hashtag, "
    "search_query. Do not repeat existing sources.";

class SourceCollector {
 public:
  SourceCollector(const std::vector<Source>& existing, std::size_t cap) : cap_(cap) {
    for (const auto& s : existing) seen_.insert(s.key());
  }

  void add(Source s) {
    if (out_.size() >= cap_) return;
    s = normalize_source(std::move(s));
    if (util::trim(s.identifier).empty()) return;
    s.origin = SourceOrigin::kPlannerSuggested;
    if (seen_.insert(s.key()).second) out_.push_back(std::move(s));
  }

  std::vector<Source> take() { return std::move(out_); }

 private:
  std::size_t cap_;
  std::set<std::pair<SourceKind, std::string>> seen_;
  std::vector<Source> out_;
};

}  // namespace

lm::Request build_plan_request(std::string_view description) {
  lm::Request r;
  r.task = lm::Task::kPlan;
  r.system_prompt = std::string(kPlanSystemPrompt);
  r.user_payload = Json{{"description", std::string(description)}};
  r.max_output_tokens = 1024;
  return r;
}

lm::Request build_suggest_request(const FeedConfig& config) {
  lm::Request r;
  r.task = lm::Task::kSuggestSources;
  r.system_prompt = std::string(kSuggestSystemPrompt);
  Json prompts = Json::array();
  for (const auto& p : config.include_prompts) prompts.push_back(p.text);
  Json existing = Json::array();
  for (const auto& s : config.sources) {
    existing.push_back({{"kind", s.kind}, {"identifier", s.identifier}});
  }
  r.user_payload = Json{{"include_prompts", prompts}, {"existing_sources", existing}};
  r.max_output_tokens = 512;
  return r;
}

Planner::Planner(std::shared_ptr<lm::Provider> provider,
                 std::shared_ptr<const catalog::Catalog> catalog, PlannerOptions options)
    : provider_(std::move(provider)), catalog_(std::move(catalog)), options_(options) {}

FeedConfig Planner::plan(std::string_view description, std::string_view owner,
                         Timestamp now) const {
  auto trimmed = util::trim(description);
  if (trimmed.empty()) throw Error(ErrorCode::kDomain, "description must not be empty");

  lm::Response response;
  try {
    response = provider_->complete(build_plan_request(trimmed));
  } catch (const Error& e) {
    throw Error(ErrorCode::kPlanFailed, std::string("planning failed: ") + e.what(), e.code());
  }
  const Json& c = response.content;

  FeedConfig draft;
  draft.owner = std::string(owner);
  draft.description = std::string(trimmed);
  draft.ranking = RankingStyle::of(RankingPreset::kBalanced);
  draft.active = false;
  draft.created_at = now;
  draft.updated_at = now;

  SourceCollector sources({}, options_.max_suggested_sources);
  if (catalog_) {
    for (const auto& term : c.at("search_terms")) {
      const auto& t = term.get_ref<const std::string&>();
      if (util::trim(t).empty()) continue;
      for (const auto& hit : catalog_->search(t, std::nullopt, options_.catalog_hits_per_term)) {
        sources.add(Source{catalog::source_kind(hit.kind), hit.uri, hit.title,
                           SourceOrigin::kPlannerSuggested});
      }
    }
  }
  if (auto it = c.find("sources"); it != c.end()) {
    for (const auto& s : *it) sources.add(s.get<Source>());
  }
  if (auto it = c.find("search_queries"); it != c.end()) {
    for (const auto& q : *it) {
      auto text = q.get<std::string>();
      sources.add(Source{SourceKind::kSearchQuery, text, "Search: " + text,
                         SourceOrigin::kPlannerSuggested});
    }
  }
  for (const auto& h : c.at("hashtags")) {
    auto tag = normalize_source(Source{SourceKind::kHashtag, h.get<std::string>(), {}, {}});
    tag.display_title = "#" + tag.identifier;
    sources.add(std::move(tag));
  }
  for (const auto& a : c.at("accounts")) {
    auto handle = a.get<std::string>();
    sources.add(Source{SourceKind::kAccount, handle, handle, SourceOrigin::kPlannerSuggested});
  }
  draft.sources = sources.take();

  auto take_prompts = [&](const Json& list, Polarity polarity, std::string_view prefix) {
    std::vector<PreferencePrompt> out;
    std::set<std::string> seen_text;
    for (const auto& p : list) {
      if (out.size() >= options_.max_prompts_per_polarity) break;
      auto text = std::string(util::trim(p.at("text").get<std::string>()));
      if (!seen_text.insert(util::to_lower(text)).second) continue;
      PreferencePrompt prompt;
      prompt.prompt_id = std::string(prefix) + "-" + std::to_string(out.size() + 1);
      prompt.text = std::move(text);
      prompt.polarity = polarity;
      p.at("strength").get_to(prompt.strength);
      out.push_back(std::move(prompt));
    }
    return out;
  };
  draft.include_prompts = take_prompts(c.at("include_prompts"), Polarity::kInclude, "include");
  draft.limit_prompts = take_prompts(c.at("limit_prompts"), Polarity::kLimit, "limit");

  if (auto violations = validate_config(draft); !violations.empty()) {
    // Schema validation upstream should make this unreachable.
    throw Error(ErrorCode::kPlanFailed, "planner produced an invalid draft: " + violations[0].code,
                ErrorCode::kSchemaViolation);
  }
  return draft;
}

std::vector<Source> Planner::suggest_additional_sources(const FeedConfig& config) const {
  if (config.include_prompts.empty()) return {};
  lm::Response response;
  try {
    response = provider_->complete(build_suggest_request(config));
  } catch (const Error& e) {
    log::warn("source suggestion failed", {{"feed_id", config.feed_id},
                                           {"error", error_code_name(e.code())},
                                           {"detail", e.what()}});
    return {};
  }
  SourceCollector out(config.sources, options_.max_suggested_sources);
  for (const auto& s : response.content.at("sources")) out.add(s.get<Source>());
  return out.take();
}

}  // namespace bonsai::planner
