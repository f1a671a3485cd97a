#include "snoopdns/clock.hpp"

#include <algorithm>
#include <exception>
#include <thread>

namespace snoopdns {

namespace {

void join_and_rethrow(std::vector<std::thread>& threads, std::vector<std::exception_ptr>& errors) {
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

thread_local const VirtualClock* tls_owner = nullptr;
thread_local int tls_slot = -1;

}  // namespace

void Clock::run_tasks(std::vector<std::function<void()>> tasks) {
  std::vector<std::exception_ptr> errors(tasks.size());
  std::vector<std::thread> threads;
  threads.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  join_and_rethrow(threads, errors);
}

SteadyClock::SteadyClock() : epoch_(std::chrono::steady_clock::now()) {}

Seconds SteadyClock::now() const {
  return std::chrono::duration_cast<Seconds>(std::chrono::steady_clock::now() - epoch_);
}

void SteadyClock::sleep_until(Seconds deadline) {
  auto target = epoch_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(deadline);
  std::this_thread::sleep_until(target);
}

VirtualClock::VirtualClock(Seconds start) : now_(start) {}

Seconds VirtualClock::now() const {
  std::lock_guard lk(mu_);
  return now_;
}

void VirtualClock::sleep_until(Seconds deadline) {
  std::unique_lock lk(mu_);
  if (!running_ || tls_owner != this) {
    now_ = std::max(now_, deadline);
    return;
  }
  const int me = tls_slot;
  slots_[me].wake = std::max(deadline, now_);
  dispatch_locked();
  cv_.notify_all();
  cv_.wait(lk, [&] { return active_ == me; });
}

void VirtualClock::dispatch_locked() {
  int next = -1;
  for (int i = 0; i < static_cast<int>(slots_.size()); ++i) {
    if (slots_[i].finished) continue;
    if (next < 0 || slots_[i].wake < slots_[next].wake) next = i;
  }
  active_ = next;
  if (next >= 0) now_ = std::max(now_, slots_[next].wake);
}

void VirtualClock::run_tasks(std::vector<std::function<void()>> tasks) {
  if (tasks.empty()) return;
  {
    std::lock_guard lk(mu_);
    running_ = true;
    slots_.assign(tasks.size(), Slot{now_, false});
    active_ = 0;
  }
  std::vector<std::exception_ptr> errors(tasks.size());
  std::vector<std::thread> threads;
  threads.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    threads.emplace_back([&, i] {
      const int me = static_cast<int>(i);
      tls_owner = this;
      tls_slot = me;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return active_ == me; });
      }
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
      std::lock_guard lk(mu_);
      slots_[i].finished = true;
      dispatch_locked();
      cv_.notify_all();
      tls_owner = nullptr;
    });
  }
  for (auto& t : threads) t.join();
  {
    std::lock_guard lk(mu_);
    running_ = false;
    slots_.clear();
    active_ = -1;
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace snoopdns
