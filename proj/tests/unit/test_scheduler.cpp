#include <thread>

#include "doctest.h"

#include "bonsai/scheduler.hpp"
#include "service_harness.hpp"

using namespace bonsai;
using namespace bonsai::service;
using namespace testsupport;

TEST_SUITE("scheduler") {
  TEST_CASE("active feeds refresh on the interval, inactive feeds never") {
    ServiceHarness h;
    auto a = h.create("feed_20.json");
    auto b = h.create("feed_7.json");
    auto off = fixture_config("feed_7.json");
    off.feed_id = "dormant";
    off.active = false;
    h.service->create_feed(off, off.owner);

    SchedulerOptions o;
    o.interval = std::chrono::milliseconds(300);
    o.jitter = 0.1;
    o.tick = std::chrono::milliseconds(10);
    o.seed = 42;
    RefreshScheduler scheduler(*h.service, o);
    scheduler.start();
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(3);
    while (std::chrono::steady_clock::now() < deadline) {
      if (h.service->runs(a.feed_id, a.owner).size() >= 2 &&
          h.service->runs(b.feed_id, b.owner).size() >= 2)
        break;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    scheduler.stop();
    CHECK(h.service->runs(a.feed_id, a.owner).size() >= 2);
    CHECK(h.service->runs(b.feed_id, b.owner).size() >= 2);
    CHECK(h.service->runs("dormant", std::nullopt).empty());
    for (const auto& r : h.service->runs(a.feed_id, a.owner)) CHECK(r.trigger == Trigger::kScheduled);
    CHECK(scheduler.dispatched() >= 4);
  }

  TEST_CASE("the first refresh waits one interval") {
    ServiceHarness h;
    auto a = h.create("feed_7.json");
    SchedulerOptions o;
    o.interval = std::chrono::milliseconds(1500);
    o.jitter = 0.0;
    o.tick = std::chrono::milliseconds(10);
    RefreshScheduler scheduler(*h.service, o);
    scheduler.start();
    std::this_thread::sleep_for(std::chrono::milliseconds(500));
    CHECK(h.service->runs(a.feed_id, a.owner).empty());
    scheduler.stop();
  }

  TEST_CASE("a feed already generating is not dispatched") {
    ServiceHarness h;
    auto a = h.create("feed_7.json");
    h.provider->set_latency(std::chrono::milliseconds(300));  // two rounds of four calls
    std::jthread manual([&] { h.service->generate(a.feed_id, Trigger::kManual, a.owner); });
    while (!h.service->in_flight(a.feed_id)) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    SchedulerOptions o;
    o.interval = std::chrono::milliseconds(50);
    o.jitter = 0.0;
    o.tick = std::chrono::milliseconds(5);
    RefreshScheduler scheduler(*h.service, o);
    scheduler.start();
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    if (h.service->in_flight(a.feed_id)) CHECK(scheduler.dispatched() == 0);
    manual.join();
    h.provider->set_latency(std::chrono::milliseconds(0));
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
    while (scheduler.dispatched() == 0 && std::chrono::steady_clock::now() < deadline)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    scheduler.stop();
    CHECK(scheduler.dispatched() >= 1);
    for (const auto& r : h.service->runs(a.feed_id, a.owner)) CHECK(r.status == RunStatus::kOk);
  }

  TEST_CASE("stop is idempotent and prompt") {
    ServiceHarness h;
    RefreshScheduler scheduler(*h.service);
    scheduler.start();
    auto t0 = std::chrono::steady_clock::now();
    scheduler.stop();
    scheduler.stop();
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1));
  }
}
