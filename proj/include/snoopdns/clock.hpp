#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <vector>

namespace snoopdns {

/// Durations and timestamps are fractional seconds. Timestamps are offsets
/// from the owning clock's epoch.
using Seconds = std::chrono::duration<double>;

/// Time source injected into everything that probes or simulates. Probe code
/// never reads the wall clock directly, so the same logic runs against a
/// virtual clock in tests and a steady clock against live servers.
class Clock {
 public:
  virtual ~Clock() = default;

  virtual Seconds now() const = 0;
  virtual void sleep_until(Seconds deadline) = 0;
  void sleep_for(Seconds d) { sleep_until(now() + d); }

  /// Runs each task to completion and rethrows the first task exception.
  /// The default runs every task on its own thread.
  virtual void run_tasks(std::vector<std::function<void()>> tasks);
};

class SteadyClock final : public Clock {
 public:
  SteadyClock();

  Seconds now() const override;
  void sleep_until(Seconds deadline) override;

 private:
  std::chrono::steady_clock::time_point epoch_;
};

/// Discrete-event clock. Outside run_tasks() sleeping just moves time
/// forward. Inside run_tasks() each task gets a thread but only one runs at a
/// time: a sleeping task yields to whichever task has the earliest wake time
/// (ties go to the lower task index), so a multi-task run is deterministic.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Seconds start = Seconds{0});

  Seconds now() const override;
  void sleep_until(Seconds deadline) override;
  void run_tasks(std::vector<std::function<void()>> tasks) override;

 private:
  struct Slot {
    Seconds wake{0};
    bool finished = false;
  };

  void dispatch_locked();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  Seconds now_;
  std::vector<Slot> slots_;
  int active_ = -1;
  bool running_ = false;
};

}  // namespace snoopdns
