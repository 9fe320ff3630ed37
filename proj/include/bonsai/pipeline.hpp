#pragma once

// One-shot source -> curate -> rank run without persistence. Shared by the
// CLI `run` command and the Python bindings.

#include <memory>
#include <vector>

#include "bonsai/curator.hpp"
#include "bonsai/lm.hpp"
#include "bonsai/ranker.hpp"
#include "bonsai/sourcer.hpp"

namespace bonsai::pipeline {

struct RankedPost {
  std::string uri;
  int score = 0;
  Bucket bucket = Bucket::kUnspecified;
  std::optional<Source> fetched_via;
  ranking::RankTriple ranks;
};

struct RunResult {
  sourcing::FetchReport fetch_report;
  curation::CurationReport curation_report;
  RankingWeights weights;
  std::size_t fetched = 0;
  std::size_t eligible = 0;
  std::size_t excluded = 0;
  std::vector<RankedPost> ranked;
  std::vector<std::string> excluded_uris;
};

struct RunOptions {
  sourcing::SourcerOptions sourcer;
  std::size_t curation_parallelism = 4;
};

// Throws Error(kValidation) for an invalid config,
// Error(kDomain) for invalid weights and Error(kSourcingFailed) when no
// source can be fetched.
RunResult run(const FeedConfig& config, const RankingWeights& weights, Timestamp now,
              std::shared_ptr<sourcing::PlatformAdapter> adapter,
              std::shared_ptr<lm::Provider> provider, const RunOptions& options = {});

// "w_r,w_p,w_c" (decimals or fractions) or a preset name. Throws
// Error(kDomain) when the text is malformed or the weights are invalid.
RankingWeights parse_weights(std::string_view text,
                             const PresetTable& presets = PresetTable::defaults());

void to_json(Json& j, const RankedPost& p);
void to_json(Json& j, const RunResult& r);

}  // namespace bonsai::pipeline
