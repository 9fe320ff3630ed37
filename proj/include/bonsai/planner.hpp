#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "bonsai/catalog.hpp"
#include "bonsai/lm.hpp"
#include "bonsai/model.hpp"

namespace bonsai::planner {

struct PlannerOptions {
  std::size_t max_suggested_sources = 12;
  std::size_t max_prompts_per_polarity = 8;
  std::size_t catalog_hits_per_term = 3;
};

lm::Request build_plan_request(std::string_view description);
lm::Request build_suggest_request(const FeedConfig& config);

// Turns a natural-language intent into a draft FeedConfig. Stateless apart
// from the shared provider and catalog.
class Planner {
 public:
  Planner(std::shared_ptr<lm::Provider> provider,
          std::shared_ptr<const catalog::Catalog> catalog, PlannerOptions options = {});

  // Draft is unsaved (empty feed_id), inactive, ranked `balanced`, and passes
  // validate_config. Throws Error(kDomain) on an empty description and
  // Error(kPlanFailed, cause) when the provider fails.
  FeedConfig plan(std::string_view description, std::string_view owner,
                  Timestamp now = now_utc()) const;

  // Best effort: provider failures are logged and yield an empty list.
  // Never returns a source already present in `config.sources`.
  std::vector<Source> suggest_additional_sources(const FeedConfig& config) const;

 private:
  std::shared_ptr<lm::Provider> provider_;
  std::shared_ptr<const catalog::Catalog> catalog_;
  PlannerOptions options_;
};

}  // namespace bonsai::planner
