#pragma once

// Deterministic discrete-event engine. Simulated threads are C++20 coroutines
// (Task<T>); every suspension point is a timed action or a blocking wait, and
// events with equal time fire in ascending sequence order.

#include <algorithm>
#include <coroutine>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace svmsim {

using SimTime = std::uint64_t;
using Cycles = std::uint64_t;
using ProcessId = std::uint32_t;
using EventId = std::uint64_t;

inline constexpr ProcessId kNoProcess = ~ProcessId{0};

/// Simulator bug or protocol violation. Never caught inside the simulator.
class SimFault : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Run did not quiesce: deadlock (no events left) or the time limit was hit.
class SimTimeout : public std::runtime_error {
 public:
  SimTimeout(const std::string& what, std::vector<std::string> blocked)
      : std::runtime_error(what), blocked_(std::move(blocked)) {}
  const std::vector<std::string>& blocked() const { return blocked_; }

 private:
  std::vector<std::string> blocked_;
};

template <typename T = void>
class Task;

namespace detail {

struct FinalAwaiter {
  bool await_ready() noexcept { return false; }
  template <typename P>
  std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept {
    auto next = h.promise().continuation;
    return next ? next : std::noop_coroutine();
  }
  void await_resume() noexcept {}
};

struct PromiseBase {
  std::coroutine_handle<> continuation;
  std::exception_ptr error;
  std::suspend_always initial_suspend() noexcept { return {}; }
  FinalAwaiter final_suspend() noexcept { return {}; }
  void unhandled_exception() { error = std::current_exception(); }
};

}  // namespace detail

/// Lazily started coroutine. Awaiting it runs the body and resumes the caller
/// by symmetric transfer once the body finishes.
template <typename T>
class [[nodiscard]] Task {
 public:
  struct promise_type : detail::PromiseBase {
    std::optional<T> value;
    Task get_return_object() {
      return Task{std::coroutine_handle<promise_type>::from_promise(*this)};
    }
    void return_value(T v) { value = std::move(v); }
  };
  using Handle = std::coroutine_handle<promise_type>;

  Task() = default;
  explicit Task(Handle h) : h_(h) {}
  Task(Task&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  Task& operator=(Task&& o) noexcept {
    if (this != &o) {
      reset();
      h_ = std::exchange(o.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() { reset(); }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> caller) noexcept {
    h_.promise().continuation = caller;
    return h_;
  }
  T await_resume() {
    if (h_.promise().error) std::rethrow_exception(h_.promise().error);
    return std::move(*h_.promise().value);
  }

 private:
  void reset() {
    if (h_) h_.destroy();
    h_ = {};
  }
  Handle h_;
};

template <>
class [[nodiscard]] Task<void> {
 public:
  struct promise_type : detail::PromiseBase {
    Task get_return_object() {
      return Task{std::coroutine_handle<promise_type>::from_promise(*this)};
    }
    void return_void() {}
  };
  using Handle = std::coroutine_handle<promise_type>;

  Task() = default;
  explicit Task(Handle h) : h_(h) {}
  Task(Task&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  Task& operator=(Task&& o) noexcept {
    if (this != &o) {
      reset();
      h_ = std::exchange(o.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() { reset(); }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> caller) noexcept {
    h_.promise().continuation = caller;
    return h_;
  }
  void await_resume() {
    if (h_.promise().error) std::rethrow_exception(h_.promise().error);
  }

  Handle handle() const { return h_; }

 private:
  void reset() {
    if (h_) h_.destroy();
    h_ = {};
  }
  Handle h_;
};

enum class ProcessKind { worker, prefetcher, miss_handler, dma_control, harness };
enum class ProcessState { runnable, blocked_on_event, blocked_on_mutex, sleeping, done };

inline const char* to_string(ProcessKind k) {
  switch (k) {
    case ProcessKind::worker: return "WT";
    case ProcessKind::prefetcher: return "PHT";
    case ProcessKind::miss_handler: return "MHT";
    case ProcessKind::dma_control: return "DMA";
    case ProcessKind::harness: return "harness";
  }
  return "?";
}

inline const char* to_string(ProcessState s) {
  switch (s) {
    case ProcessState::runnable: return "runnable";
    case ProcessState::blocked_on_event: return "blocked-on-event";
    case ProcessState::blocked_on_mutex: return "blocked-on-mutex";
    case ProcessState::sleeping: return "sleeping";
    case ProcessState::done: return "done";
  }
  return "?";
}

enum class TraceKind { event_fired, mutex_acquired, mutex_released };

struct TraceRecord {
  SimTime time;
  TraceKind kind;
  ProcessId pid;
  std::uint64_t arg;
};

class Engine {
 public:
  struct Process {
    ProcessId id = kNoProcess;
    std::string name;
    ProcessKind kind = ProcessKind::harness;
    bool daemon = false;
    ProcessState state = ProcessState::runnable;
    Cycles busy = 0;
    std::uint64_t generation = 0;
    std::uint64_t token = 0;
    std::coroutine_handle<> resume_point;
    Task<void> root;
  };

  Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  SimTime now() const { return now_; }
  ProcessId current() const { return current_; }

  /// Registers a process and makes it runnable at the current time. Daemon
  /// processes (service loops) may stay blocked forever without counting as
  /// a deadlock.
  ProcessId spawn(std::string name, ProcessKind kind, Task<void> body, bool daemon = false) {
    const auto id = static_cast<ProcessId>(procs_.size());
    auto& p = procs_.emplace_back();
    p.id = id;
    p.name = std::move(name);
    p.kind = kind;
    p.daemon = daemon;
    p.root = std::move(body);
    p.resume_point = p.root.handle();
    p.state = ProcessState::sleeping;
    ++p.generation;
    schedule(now_, id, 0);
    return id;
  }

  /// Resumes `target` at `time` with `token`. The target must currently be
  /// suspended; a wake aimed at an earlier suspension is a hard fault.
  EventId schedule(SimTime time, ProcessId target, std::uint64_t token) {
    if (time < now_) throw SimFault("schedule in the past");
    if (target >= procs_.size()) throw SimFault("schedule: unknown process");
    const auto& p = procs_[target];
    if (p.state == ProcessState::runnable || p.state == ProcessState::done)
      throw SimFault("schedule: process " + p.name + " is not suspended");
    return push(Event{time, next_seq_++, target, token, p.generation, {}});
  }

  /// Hardware-side callback (no owning process).
  EventId at(SimTime time, std::function<void()> fn) {
    if (time < now_) throw SimFault("callback scheduled in the past");
    return push(Event{time, next_seq_++, kNoProcess, 0, 0, std::move(fn)});
  }

  /// Suspends the running process for `n` cycles of work.
  auto sleep(Cycles n) {
    struct Awaiter {
      Engine& e;
      Cycles n;
      bool await_ready() const noexcept { return false; }
      void await_suspend(std::coroutine_handle<> h) {
        auto& p = e.suspend_current(h, ProcessState::sleeping);
        p.busy += n;
        e.schedule(e.now_ + n, p.id, 0);
      }
      void await_resume() const noexcept {}
    };
    return Awaiter{*this, n};
  }

  /// Suspends the running process until someone schedules it; yields the token.
  auto block(ProcessState why) {
    struct Awaiter {
      Engine& e;
      ProcessState why;
      ProcessId pid = kNoProcess;
      bool await_ready() const noexcept { return false; }
      void await_suspend(std::coroutine_handle<> h) { pid = e.suspend_current(h, why).id; }
      std::uint64_t await_resume() const { return e.procs_[pid].token; }
    };
    return Awaiter{*this, why};
  }

  /// Runs events up to `limit`. Returns the final time when nothing is left
  /// to do; throws SimTimeout when a non-daemon process is still live.
  SimTime run_until_quiescent(SimTime limit) {
    while (!heap_.empty() && heap_.front().time <= limit) {
      std::pop_heap(heap_.begin(), heap_.end(), later);
      Event ev = std::move(heap_.back());
      heap_.pop_back();
      fire(ev);
      if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
    }
    std::vector<std::string> live;
    for (const auto& p : procs_)
      if (!p.daemon && p.state != ProcessState::done)
        live.push_back(p.name + " (" + to_string(p.kind) + "): " + to_string(p.state));
    if (live.empty()) return now_;
    if (heap_.empty()) throw SimTimeout("deadlock at t=" + std::to_string(now_), std::move(live));
    throw SimTimeout("time limit " + std::to_string(limit) + " reached", std::move(live));
  }

  /// Runs until every non-daemon process has finished; daemons and pending
  /// hardware events may remain. Returns the time the last one finished.
  SimTime run_until_done(SimTime limit) {
    auto live = [this] {
      for (const auto& p : procs_)
        if (!p.daemon && p.state != ProcessState::done) return true;
      return false;
    };
    SimTime last = now_;
    while (!heap_.empty() && heap_.front().time <= limit) {
      std::pop_heap(heap_.begin(), heap_.end(), later);
      Event ev = std::move(heap_.back());
      heap_.pop_back();
      const bool target_live = ev.target != kNoProcess && !procs_[ev.target].daemon;
      fire(ev);
      if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
      if (target_live && procs_[ev.target].state == ProcessState::done) {
        last = now_;
        if (!live()) return last;
      }
    }
    return run_until_quiescent(limit);
  }

  const Process& process(ProcessId id) const { return procs_.at(id); }
  std::size_t process_count() const { return procs_.size(); }
  std::uint64_t trace_digest() const { return digest_; }
  std::uint64_t events_fired() const { return fired_; }

  void set_trace_hook(std::function<void(const TraceRecord&)> hook) { hook_ = std::move(hook); }
  void trace(TraceKind kind, ProcessId pid, std::uint64_t arg) {
    if (hook_) hook_(TraceRecord{now_, kind, pid, arg});
  }

 private:
  struct Event {
    SimTime time;
    std::uint64_t seq;
    ProcessId target;
    std::uint64_t token;
    std::uint64_t generation;
    std::function<void()> callback;
  };

  static bool later(const Event& a, const Event& b) {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }

  EventId push(Event ev) {
    const auto id = ev.seq;
    heap_.push_back(std::move(ev));
    std::push_heap(heap_.begin(), heap_.end(), later);
    return id;
  }

  Process& suspend_current(std::coroutine_handle<> h, ProcessState why) {
    if (current_ == kNoProcess) throw SimFault("suspend outside of a process");
    auto& p = procs_[current_];
    p.state = why;
    p.resume_point = h;
    ++p.generation;
    return p;
  }

  void mix(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      digest_ ^= (v >> (8 * i)) & 0xff;
      digest_ *= 0x100000001b3ULL;
    }
  }

  void fire(Event& ev) {
    now_ = ev.time;
    ++fired_;
    mix(ev.time);
    mix(ev.seq);
    mix(ev.target);
    if (ev.target == kNoProcess) {
      ev.callback();
      return;
    }
    auto& p = procs_[ev.target];
    if (p.generation != ev.generation || p.state == ProcessState::runnable ||
        p.state == ProcessState::done)
      throw SimFault("stale wake for process " + p.name);
    p.state = ProcessState::runnable;
    p.token = ev.token;
    trace(TraceKind::event_fired, p.id, ev.seq);
    current_ = p.id;
    auto h = std::exchange(p.resume_point, {});
    h.resume();
    current_ = kNoProcess;
    auto root = procs_[ev.target].root.handle();
    if (root.done()) {
      procs_[ev.target].state = ProcessState::done;
      if (root.promise().error) error_ = root.promise().error;
    }
  }

  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t fired_ = 0;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  ProcessId current_ = kNoProcess;
  std::vector<Event> heap_;
  std::deque<Process> procs_;
  std::function<void(const TraceRecord&)> hook_;
  std::exception_ptr error_;
};

}  // namespace svmsim
