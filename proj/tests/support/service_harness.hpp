#pragma once

// A FeedService wired to a temporary FileStore, the mock provider and the
// fixture corpora, with a clock the test controls.

#include <atomic>
#include <fstream>
#include <memory>
#include <sstream>

#include "bonsai/catalog.hpp"
#include "bonsai/service.hpp"
#include "bonsai/sourcer.hpp"
#include "bonsai/store.hpp"
#include "test_support.hpp"

namespace testsupport {

inline bonsai::FeedConfig fixture_config(const std::string& name) {
  return Json::parse(std::ifstream(fixture(name))).get<bonsai::FeedConfig>();
}

// One adapter over several corpus files.
inline std::shared_ptr<bonsai::sourcing::FixtureAdapter> fixture_adapter(
    std::initializer_list<const char*> corpora) {
  std::stringstream all;
  for (const char* name : corpora) all << std::ifstream(fixture(name)).rdbuf() << '\n';
  return bonsai::sourcing::FixtureAdapter::load(all);
}

class ServiceHarness {
 public:
  explicit ServiceHarness(bonsai::service::ServiceOptions options = {},
                          std::shared_ptr<bonsai::service::FeedStore> store = nullptr)
      : options_(std::move(options)) {
    file_store = std::make_shared<bonsai::service::FileStore>(dir.path() / "data");
    this->store = store ? std::move(store) : file_store;
    provider = std::make_shared<CountingProvider>(
        bonsai::lm::load_mock_rules(fixture("mock_rules.json")));
    catalog = std::make_shared<const bonsai::catalog::Catalog>(
        bonsai::catalog::Catalog::ingest(fixture("catalog.jsonl")));
    adapter = fixture_adapter({"corpus_20.jsonl", "corpus_7.jsonl"});
    service = make_service();
  }

  std::unique_ptr<bonsai::service::FeedService> make_service() {
    auto s = std::make_unique<bonsai::service::FeedService>(store, provider, catalog, adapter,
                                                            options_);
    auto clock = clock_ms;
    s->set_clock([clock] { return at_ms(clock->load()); });
    return s;
  }

  void advance(std::chrono::milliseconds d) { *clock_ms += d.count(); }

  // Creates a feed from a fixture config file, as its owner.
  bonsai::FeedConfig create(const std::string& name) {
    auto c = fixture_config(name);
    return service->create_feed(c, c.owner);
  }

  TempDir dir;
  std::shared_ptr<std::atomic<std::int64_t>> clock_ms = std::make_shared<std::atomic<std::int64_t>>(
      fixture_now().time_since_epoch().count());
  std::shared_ptr<bonsai::service::FileStore> file_store;
  std::shared_ptr<bonsai::service::FeedStore> store;
  std::shared_ptr<CountingProvider> provider;
  std::shared_ptr<const bonsai::catalog::Catalog> catalog;
  std::shared_ptr<bonsai::sourcing::FixtureAdapter> adapter;
  std::unique_ptr<bonsai::service::FeedService> service;

 private:
  bonsai::service::ServiceOptions options_;
};

}  // namespace testsupport
