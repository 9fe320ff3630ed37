// Python bindings. Structured values cross the boundary as JSON text; the
// package wrapper converts them to and from Python objects.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bonsai/catalog.hpp"
#include "bonsai/error.hpp"
#include "bonsai/lm.hpp"
#include "bonsai/model.hpp"
#include "bonsai/pipeline.hpp"
#include "bonsai/planner.hpp"
#include "bonsai/ranker.hpp"
#include "bonsai/sourcer.hpp"

namespace py = pybind11;
using namespace bonsai;

namespace {

Json parse(const std::string& text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kBadRequest, std::string(what) + ": " + e.what());
  }
}

template <typename T>
T decode(const std::string& text, const char* what) {
  try {
    return parse(text, what).get<T>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kBadRequest, std::string(what) + ": " + e.what());
  }
}

std::shared_ptr<lm::Provider> mock_provider(const std::string& rules_path) {
  return std::make_shared<lm::MockProvider>(rules_path.empty() ? lm::MockRules{}
                                                               : lm::load_mock_rules(rules_path));
}

std::string rank_feed(const std::string& candidates, const std::string& eligible,
                      const std::string& weights) {
  auto posts = decode<std::vector<Post>>(candidates, "candidates");
  auto curated = decode<std::vector<CuratedPost>>(eligible, "eligible");
  auto w = decode<RankingWeights>(weights, "weights");
  return Json(ranking::rank_feed(posts, curated, w)).dump();
}

std::string search_catalog(const std::string& path, const std::string& query,
                           const std::vector<std::string>& kinds, std::size_t limit) {
  auto cat = catalog::Catalog::ingest(path);
  std::optional<std::vector<catalog::EntryKind>> filter;
  if (!kinds.empty()) {
    filter.emplace();
    for (const auto& k : kinds) {
      auto kind = parse_enum<catalog::EntryKind>(k);
      if (!kind) throw Error(ErrorCode::kBadRequest, "unknown catalog kind: " + k);
      filter->push_back(*kind);
    }
  }
  return Json(cat.search(query, filter, limit)).dump();
}

std::string plan(const std::string& description, const std::string& rules_path,
                 const std::string& catalog_path) {
  std::shared_ptr<const catalog::Catalog> cat;
  if (!catalog_path.empty()) {
    cat = std::make_shared<const catalog::Catalog>(catalog::Catalog::ingest(catalog_path));
  }
  return Json(planner::Planner(mock_provider(rules_path), cat).plan(description, "local")).dump();
}

std::string run(const std::string& config_text, const std::string& corpus_path,
                const std::string& rules_path, const std::string& weights_text,
                const std::string& now_text) {
  auto config = decode<FeedConfig>(config_text, "config");
  auto adapter = sourcing::FixtureAdapter::load(corpus_path);
  Timestamp now;
  if (!now_text.empty()) {
    now = parse_rfc3339(now_text);
  } else if (auto newest = adapter->newest_post()) {
    now = *newest;
  } else {
    now = now_utc();
  }
  auto weights = pipeline::parse_weights(weights_text);
  auto result = pipeline::run(config, weights, now, adapter, mock_provider(rules_path));
  return Json(result).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bonsai feed engine";

  static py::exception<Error> error_type(m, "BonsaiError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("engagement_score", [](std::int64_t likes, std::int64_t reposts, std::int64_t replies) {
    Post p;
    p.likes = likes;
    p.reposts = reposts;
    p.replies = replies;
    return ranking::engagement_score(p);
  });
  m.def("bucket_for_score", [](int score) { return std::string(to_string(bucket_for_score(score))); });
  m.def("parse_weights", [](const std::string& text) { return Json(pipeline::parse_weights(text)).dump(); });
  m.def("presets", [] { return Json(PresetTable::defaults()).dump(); });
  m.def("validate_config", [](const std::string& config) {
    return Json(validate_config(decode<FeedConfig>(config, "config"))).dump();
  });
  m.def("rank_feed", &rank_feed);
  m.def("search_catalog", &search_catalog);
  m.def("plan", &plan);
  m.def("run", &run);
}
