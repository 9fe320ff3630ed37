#include "bonsai/scheduler.hpp"

#include <algorithm>
#include <set>

#include "bonsai/log.hpp"

namespace bonsai::service {

using SteadyClock = std::chrono::steady_clock;

RefreshScheduler::RefreshScheduler(FeedService& service, SchedulerOptions options)
    : service_(service), options_(options), rng_(options.seed) {}

RefreshScheduler::~RefreshScheduler() { stop(); }

void RefreshScheduler::start() {
  if (!threads_.empty()) return;
  threads_.emplace_back([this](std::stop_token st) { loop(st); });
  for (std::size_t i = 0; i < std::max<std::size_t>(1, options_.workers); ++i) {
    threads_.emplace_back([this](std::stop_token st) { worker(st); });
  }
  log::info("scheduler started",
            {{"interval_ms", options_.interval.count()}, {"workers", options_.workers}});
}

void RefreshScheduler::stop() {
  if (threads_.empty()) return;
  for (auto& t : threads_) t.request_stop();
  cv_.notify_all();
  threads_.clear();  // joins
  std::lock_guard lock(mutex_);
  queue_.clear();
  due_.clear();
}

std::size_t RefreshScheduler::dispatched() const {
  std::lock_guard lock(mutex_);
  return dispatched_;
}

std::chrono::milliseconds RefreshScheduler::jittered() {
  std::uniform_real_distribution<double> dist(1.0 - options_.jitter, 1.0 + options_.jitter);
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(static_cast<double>(options_.interval.count()) * dist(rng_)));
}

void RefreshScheduler::loop(std::stop_token st) {
  while (!st.stop_requested()) {
    std::vector<std::string> active;
    try {
      active = service_.active_feed_ids();
    } catch (const std::exception& e) {
      log::error("scheduler could not list feeds", {{"detail", e.what()}});
    }
    const auto now = SteadyClock::now();
    {
      std::lock_guard lock(mutex_);
      std::set<std::string> active_set(active.begin(), active.end());
      std::erase_if(due_, [&](const auto& kv) { return !active_set.contains(kv.first); });
      for (const auto& id : active) {
        auto [it, inserted] = due_.try_emplace(id, now + jittered());
        if (inserted || it->second > now) continue;
        bool queued = std::find(queue_.begin(), queue_.end(), id) != queue_.end();
        if (queued || service_.in_flight(id)) continue;
        queue_.push_back(id);
        it->second = now + jittered();
        ++dispatched_;
      }
    }
    cv_.notify_all();
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, st, options_.tick, [] { return false; });
  }
}

void RefreshScheduler::worker(std::stop_token st) {
  while (true) {
    std::string feed_id;
    {
      std::unique_lock lock(mutex_);
      if (!cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
      feed_id = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      service_.generate(feed_id, Trigger::kScheduled);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConflict) {
        log::info("scheduled run skipped, run in flight", {{"feed_id", feed_id}});
      } else {
        log::error("scheduled run failed", {{"feed_id", feed_id},
                                            {"error", error_code_name(e.code())},
                                            {"detail", e.what()}});
      }
    } catch (const std::exception& e) {
      log::error("scheduled run failed", {{"feed_id", feed_id}, {"detail", e.what()}});
    }
  }
}

}  // namespace bonsai::service
