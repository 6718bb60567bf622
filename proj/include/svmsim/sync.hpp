#pragma once

// Simulated cluster synchronization: the L1 test-and-set mutex and the event
// unit. Both are timed from the perspective of the calling process.

#include <deque>
#include <optional>
#include <unordered_set>

#include "svmsim/engine.hpp"

namespace svmsim {

/// Mutex built on the L1 test-and-set. Waiters are handed the lock in FIFO
/// order and resume `wake_latency` cycles after the release.
class SimMutex {
 public:
  SimMutex(Cycles tas_latency, Cycles wake_latency)
      : tas_latency_(tas_latency), wake_latency_(wake_latency) {}

  Task<void> acquire(Engine& e) {
    const ProcessId me = e.current();
    if (holder_ == me) throw SimFault("recursive mutex acquire");
    co_await e.sleep(tas_latency_);
    if (!holder_) {
      holder_ = me;
      e.trace(TraceKind::mutex_acquired, me, id());
      co_return;
    }
    waiters_.push_back(me);
    co_await e.block(ProcessState::blocked_on_mutex);
    if (holder_ != me) throw SimFault("mutex handoff mismatch");
    e.trace(TraceKind::mutex_acquired, me, id());
  }

  void release(Engine& e) {
    const ProcessId me = e.current();
    if (holder_ != me) throw SimFault("mutex released by non-holder");
    e.trace(TraceKind::mutex_released, me, id());
    if (waiters_.empty()) {
      holder_.reset();
      return;
    }
    holder_ = waiters_.front();
    waiters_.pop_front();
    e.schedule(e.now() + wake_latency_, *holder_, 0);
  }

  std::optional<ProcessId> holder() const { return holder_; }
  std::size_t waiting() const { return waiters_.size(); }
  std::uint64_t id() const { return reinterpret_cast<std::uintptr_t>(this); }

 private:
  Cycles tas_latency_;
  Cycles wake_latency_;
  std::optional<ProcessId> holder_;
  std::deque<ProcessId> waiters_;
};

/// Per-process wake flags. A wake posted to a waiting process resumes it after
/// the wake latency; a wake posted to anyone else is kept until its next wait.
class EventUnit {
 public:
  explicit EventUnit(Cycles wake_latency) : wake_latency_(wake_latency) {}

  Task<void> wait(Engine& e) {
    const ProcessId me = e.current();
    if (auto it = pending_.find(me); it != pending_.end()) {
      pending_.erase(it);
      co_return;
    }
    waiting_.insert(me);
    co_await e.block(ProcessState::blocked_on_event);
  }

  void post(Engine& e, ProcessId target) {
    if (waiting_.erase(target) != 0) {
      e.schedule(e.now() + wake_latency_, target, 0);
      return;
    }
    pending_.insert(target);
  }

  bool is_waiting(ProcessId p) const { return waiting_.count(p) != 0; }
  bool has_pending(ProcessId p) const { return pending_.count(p) != 0; }
  Cycles wake_latency() const { return wake_latency_; }

 private:
  Cycles wake_latency_;
  std::unordered_set<ProcessId> pending_;
  std::unordered_set<ProcessId> waiting_;
};

/// Zero-latency wake line for hardware state machines (the DMA control unit).
class Signal {
 public:
  Task<void> wait(Engine& e) {
    if (raised_) {
      raised_ = false;
      co_return;
    }
    waiter_ = e.current();
    co_await e.block(ProcessState::blocked_on_event);
  }

  void raise(Engine& e) {
    if (waiter_ != kNoProcess) {
      e.schedule(e.now(), std::exchange(waiter_, kNoProcess), 0);
      return;
    }
    raised_ = true;
  }

 private:
  bool raised_ = false;
  ProcessId waiter_ = kNoProcess;
};

}  // namespace svmsim
