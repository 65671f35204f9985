#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>

#include "turneval/errors.hpp"

namespace turneval {

/// Exponential backoff: attempt n (1-based) that fails waits
/// base * factor^(n-1) before attempt n+1.
struct BackoffPolicy {
  std::chrono::milliseconds base{1000};
  double factor = 2.0;
  int max_attempts = 5;

  std::chrono::milliseconds delay_after(int failed_attempt) const {
    double ms = static_cast<double>(base.count());
    for (int i = 1; i < failed_attempt; ++i) ms *= factor;
    return std::chrono::milliseconds(static_cast<std::chrono::milliseconds::rep>(ms));
  }
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

/// Runs `fn` until it returns, a non-retryable BackendError escapes, or
/// the attempt budget is spent (RetriesExhaustedError). `attempts` receives
/// the number of calls made.
template <typename Fn>
auto with_retries(const BackoffPolicy& policy, const Sleeper& sleep, Fn&& fn, int& attempts)
    -> decltype(fn()) {
  attempts = 0;
  for (;;) {
    ++attempts;
    try {
      return fn();
    } catch (const BackendError& e) {
      if (!e.retryable()) throw;
      if (attempts >= policy.max_attempts) {
        throw RetriesExhaustedError(
            "gave up after " + std::to_string(attempts) + " attempts: " + e.what(), attempts);
      }
      sleep(policy.delay_after(attempts));
    }
  }
}

/// Bounds the number of simultaneous holders. Records the high-water mark
/// so tests can observe the bound.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit) : limit_(std::max(1, limit)) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  int limit() const { return limit_; }
  int peak() const {
    std::lock_guard lock(mu_);
    return peak_;
  }

  class Guard {
   public:
    explicit Guard(ConcurrencyLimiter& l) : l_(l) { l_.acquire(); }
    ~Guard() { l_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    ConcurrencyLimiter& l_;
  };

 private:
  const int limit_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  int peak_ = 0;
};

}  // namespace turneval
