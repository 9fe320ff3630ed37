#include <algorithm>

#include "doctest.h"

#include "bonsai/error.hpp"
#include "bonsai/planner.hpp"
#include "test_support.hpp"

using namespace bonsai;
using namespace bonsai::planner;
using testsupport::fixture;

namespace {

std::shared_ptr<lm::MockProvider> provider() {
  return std::make_shared<lm::MockProvider>(lm::load_mock_rules(fixture("mock_rules.json")));
}

std::shared_ptr<const catalog::Catalog> full_catalog() {
  return std::make_shared<const catalog::Catalog>(catalog::Catalog::ingest(fixture("catalog.jsonl")));
}

bool has_source(const FeedConfig& c, SourceKind kind, const std::string& id) {
  return std::any_of(c.sources.begin(), c.sources.end(),
                     [&](const Source& s) { return s.kind == kind && s.identifier == id; });
}

}  // namespace

TEST_SUITE("planner") {
  TEST_CASE("plan produces a valid inactive draft with catalog sources") {
    Planner p(provider(), full_catalog());
    auto draft = p.plan("Cute cat photos and tuxedo cats, no politics", "me.test");
    CHECK(validate_config(draft).empty());
    CHECK(draft.feed_id.empty());
    CHECK_FALSE(draft.active);
    CHECK(draft.owner == "me.test");
    CHECK(draft.ranking.preset == RankingPreset::kBalanced);
    CHECK(has_source(draft, SourceKind::kFeed,
                     "at://did:plc:catlover/app.bsky.feed.generator/tuxedo-cats"));
    CHECK(has_source(draft, SourceKind::kHashtag, "catsofbluesky"));
    for (const auto& s : draft.sources) CHECK(s.origin == SourceOrigin::kPlannerSuggested);
    REQUIRE(draft.limit_prompts.size() == 1);
    CHECK(draft.limit_prompts[0].strength == Strength::kNeverShown);
    CHECK_FALSE(draft.include_prompts.empty());
  }

  TEST_CASE("suggested sources are capped") {
    PlannerOptions o;
    o.max_suggested_sources = 3;
    Planner p(provider(), full_catalog(), o);
    auto draft = p.plan("cats and dogs and pets", "me.test");
    CHECK(draft.sources.size() == 3);
    Planner def(provider(), full_catalog());
    CHECK(def.plan("cats and dogs and pets", "me.test").sources.size() <= 12);
  }

  TEST_CASE("works without a catalog") {
    Planner p(provider(), nullptr);
    auto draft = p.plan("dog pictures", "me.test");
    CHECK(has_source(draft, SourceKind::kAccount, "dogs.example.com"));
  }

  TEST_CASE("empty description is a domain error") {
    Planner p(provider(), full_catalog());
    try {
      p.plan("   ", "me.test");
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDomain);
    }
  }

  TEST_CASE("provider failure becomes PLAN_FAILED with the cause") {
    auto m = provider();
    m->fail_with(ErrorCode::kTimeout);
    Planner p(m, full_catalog());
    try {
      p.plan("cats", "me.test");
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kPlanFailed);
      CHECK(e.cause() == ErrorCode::kTimeout);
    }
  }

  TEST_CASE("suggestions skip existing sources and swallow failures") {
    auto m = provider();
    Planner p(m, full_catalog());
    FeedConfig config;
    config.description = "cats";
    config.include_prompts = {{"include-1", "posts about tuxedo cats", Polarity::kInclude,
                               Strength::kPreferred}};
    config.sources = {{SourceKind::kHashtag, "catsofbluesky", "", SourceOrigin::kUserAdded}};
    auto extra = p.suggest_additional_sources(config);
    REQUIRE(extra.size() == 1);
    CHECK(extra[0].kind == SourceKind::kSearchQuery);
    CHECK(extra[0].identifier == "tuxedo cats");
    CHECK(extra[0].origin == SourceOrigin::kPlannerSuggested);

    config.sources.clear();
    CHECK(p.suggest_additional_sources(config).size() == 2);

    m->fail_with(ErrorCode::kProviderUnreachable);
    CHECK(p.suggest_additional_sources(config).empty());
  }

  TEST_CASE("plan request is deterministic") {
    auto a = build_plan_request("cats");
    auto b = build_plan_request("cats");
    CHECK(a.system_prompt == b.system_prompt);
    CHECK(a.user_payload.dump() == b.user_payload.dump());
    CHECK(a.user_payload.at("description") == "cats");
  }
}
