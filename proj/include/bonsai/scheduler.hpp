#pragma once

// Periodic regeneration of active feeds.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "bonsai/service.hpp"

namespace bonsai::service {

struct SchedulerOptions {
  std::chrono::milliseconds interval{30 * 60 * 1000};
  double jitter = 0.10;  // each delay is interval * (1 +/- jitter)
  std::chrono::milliseconds tick{100};
  std::size_t workers = 2;
  std::uint64_t seed = std::random_device{}();
};

// A feed becomes due one jittered interval after it is first seen active and
// again one jittered interval after each scheduled run is dispatched. A feed
// whose run is still in flight at its due time is retried on the next tick.
class RefreshScheduler {
 public:
  RefreshScheduler(FeedService& service, SchedulerOptions options = {});
  ~RefreshScheduler();
  RefreshScheduler(const RefreshScheduler&) = delete;
  RefreshScheduler& operator=(const RefreshScheduler&) = delete;

  void start();
  void stop();

  // Scheduled runs dispatched so far (including ones that failed).
  std::size_t dispatched() const;

 private:
  std::chrono::milliseconds jittered();
  void loop(std::stop_token st);
  void worker(std::stop_token st);

  FeedService& service_;
  SchedulerOptions options_;
  std::mt19937_64 rng_;

  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  std::deque<std::string> queue_;
  std::map<std::string, std::chrono::steady_clock::time_point> due_;
  std::size_t dispatched_ = 0;

  std::vector<std::jthread> threads_;
};

}  // namespace bonsai::service
