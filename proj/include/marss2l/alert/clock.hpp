#pragma once

#include <atomic>
#include <chrono>

#include "marss2l/time.hpp"

namespace marss2l::alert {

struct Clock {
  virtual ~Clock() = default;
  virtual Timestamp now() = 0;
};

struct SystemClock : Clock {
  Timestamp now() override { return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()); }
};

/// Returns a fixed instant, optionally advancing by `step` after every reading.
class FixedClock : public Clock {
 public:
  explicit FixedClock(Timestamp t, std::chrono::seconds step = std::chrono::seconds(0)) : t_(t.time_since_epoch().count()), step_(step.count()) {}
  Timestamp now() override { return Timestamp(std::chrono::seconds(t_.fetch_add(step_))); }

 private:
  std::atomic<long long> t_;
  long long step_;
};

}  // namespace marss2l::alert
