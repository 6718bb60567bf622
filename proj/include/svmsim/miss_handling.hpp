#pragma once

// Software TLB miss handling: the miss queue in L1 (one enqueue and one
// dequeue mutex) and the Miss Handling Threads that service it.
//
// Each MHT publishes the page it is walking in a shared state word. A handler
// that dequeues a miss for a page a peer is already walking appends the
// waiter to that peer's wake list instead of walking again. The wake list and
// the state word are guarded by a per-MHT test-and-set lock, so an append
// either lands before the owner collects its list or observes the owner idle.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "svmsim/config.hpp"
#include "svmsim/engine.hpp"
#include "svmsim/memory.hpp"
#include "svmsim/sync.hpp"
#include "svmsim/tlb.hpp"

namespace svmsim {

enum class MissKind { read, write, prefetch };

struct Waiter {
  enum class Type : std::uint8_t { pe, dma };
  Type type = Type::pe;
  std::uint32_t id = 0;
};

struct MissRecord {
  Vpn vpn;
  Waiter waiter;
  MissKind kind = MissKind::read;
  VirtAddr va;
  SimTime enqueued = 0;
};

/// Bounded FIFO of miss records. Storage only; the timed protocol lives in
/// MissHandling.
class MissQueue {
 public:
  MissQueue(std::uint32_t capacity, const LatencyConfig& lat)
      : capacity_(capacity), enq_(lat.l1_access, lat.wake), deq_(lat.l1_access, lat.wake) {}

  bool full() const { return records_.size() >= capacity_; }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  std::uint32_t capacity() const { return capacity_; }

  void push(const MissRecord& r) {
    if (full()) throw SimFault("miss queue overflow");
    records_.push_back(r);
  }
  MissRecord pop() {
    if (empty()) throw SimFault("miss queue underflow");
    MissRecord r = records_.front();
    records_.pop_front();
    return r;
  }

  SimMutex& enqueue_mutex() { return enq_; }
  SimMutex& dequeue_mutex() { return deq_; }

 private:
  std::uint32_t capacity_;
  std::deque<MissRecord> records_;
  SimMutex enq_;
  SimMutex deq_;
};

struct MissStats {
  std::uint64_t enqueued = 0;
  std::uint64_t enqueued_prefetch = 0;
  std::uint64_t backpressure = 0;
  std::uint64_t handled = 0;
  std::uint64_t walks = 0;
  std::uint64_t dedup_hits = 0;
  std::uint64_t map_check_hits = 0;
  std::uint64_t wakes = 0;
  std::uint64_t insert_stalls = 0;
  std::vector<Cycles> latencies;  // enqueue -> wake, non-prefetch records
  std::map<std::uint32_t, std::uint32_t> walks_per_vpn;

  double mean_latency() const {
    if (latencies.empty()) return 0.0;
    double s = 0;
    for (auto l : latencies) s += static_cast<double>(l);
    return s / static_cast<double>(latencies.size());
  }
  Cycles percentile_latency(double p) const {
    if (latencies.empty()) return 0;
    auto v = latencies;
    const auto k = static_cast<std::size_t>(p * static_cast<double>(v.size() - 1) + 0.5);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
  }
};

class MissHandling {
 public:
  static constexpr std::uint32_t kIdle = ~std::uint32_t{0};

  MissHandling(Engine& e, const SimConfig& cfg, Iommu& iommu, DramPort& dram, const PageTable& pt,
               EventUnit& events)
      : e_(e), cfg_(cfg), iommu_(iommu), dram_(dram), pt_(pt), events_(events),
        queue_(cfg.miss.queue_capacity, cfg.latency) {
    if (cfg.mode == Mode::soa) soa_lock_.emplace(cfg.latency.l2_spm_access, cfg.latency.wake);
  }

  /// Starts `count` service loops (0 is the single manager PE).
  void spawn_handlers(std::uint32_t count) {
    count = std::max<std::uint32_t>(count, 1);
    for (std::uint32_t i = 0; i < count; ++i) {
      states_.push_back(std::make_unique<MhtState>(cfg_.latency));
      pids_.push_back(kNoProcess);
    }
    for (std::uint32_t i = 0; i < count; ++i)
      pids_[i] = e_.spawn("mht" + std::to_string(i), ProcessKind::miss_handler, mht_loop(i), true);
  }

  /// Appends a record under the enqueue mutex; blocks while the queue is full.
  Task<void> enqueue_miss(MissRecord r) {
    const Cycles l1 = cfg_.latency.l1_access;
    auto& m = queue_.enqueue_mutex();
    co_await m.acquire(e_);
    while (queue_.full()) {
      ++stats_.backpressure;
      space_waiters_.push_back(e_.current());
      m.release(e_);
      co_await events_.wait(e_);
      co_await m.acquire(e_);
    }
    co_await e_.sleep(2 * l1);
    r.enqueued = e_.now();
    queue_.push(r);
    ++stats_.enqueued;
    if (r.kind == MissKind::prefetch) ++stats_.enqueued_prefetch;
    m.release(e_);
    if (!idle_.empty()) {
      const ProcessId mht = idle_.front();
      idle_.pop_front();
      co_await e_.sleep(1);
      events_.post(e_, mht);
    }
  }

  /// PE side of a miss: enqueue a record naming the caller and block until an
  /// MHT wakes it. The caller retries its access afterwards.
  Task<void> wait_for_mapping(VirtAddr va, AccessKind kind) {
    MissRecord r;
    r.vpn = va.page();
    r.va = va;
    r.kind = kind == AccessKind::read ? MissKind::read : MissKind::write;
    r.waiter = Waiter{Waiter::Type::pe, e_.current()};
    co_await enqueue_miss(r);
    co_await events_.wait(e_);
  }

  /// Register-write path into the DMA engine for DMA-originated records.
  void set_dma_handler(std::function<void(VirtAddr)> h) { dma_handled_ = std::move(h); }

  /// Global TLB-management lock of the SoA baseline (absent in other modes).
  SimMutex* soa_tlb_lock() { return soa_lock_ ? &*soa_lock_ : nullptr; }

  /// Timed two-write insert into L2. Uses the per-set counters, or the global
  /// lock in SoA mode. Waits while every way of the set is locked.
  Task<void> tlb_insert(Vpn vpn, Ppn ppn) {
    const Cycles l1 = cfg_.latency.l1_access;
    const Cycles write = cfg_.tlb.config_write;
    auto& tlb = iommu_.tlb();
    for (;;) {
      if (soa_lock_) co_await soa_lock_->acquire(e_);
      co_await e_.sleep(l1);  // entry lock (test-and-set)
      co_await e_.sleep(l1);  // counter fetch-and-increment
      auto slot = tlb.begin_insert(vpn);
      if (slot) {
        co_await e_.sleep(write);  // vpn word
        co_await e_.sleep(write);  // ppn word
        tlb.finish_insert(*slot, ppn);
        co_await e_.sleep(l1);  // entry unlock
        if (soa_lock_) soa_lock_->release(e_);
        co_return;
      }
      if (soa_lock_) soa_lock_->release(e_);
      ++stats_.insert_stalls;
      co_await e_.sleep(cfg_.latency.l2_spm_access * 8);
    }
  }

  const MissStats& stats() const { return stats_; }
  MissQueue& queue() { return queue_; }
  std::size_t handler_count() const { return states_.size(); }
  ProcessId handler_pid(std::size_t i) const { return pids_.at(i); }
  std::uint32_t handler_state(std::size_t i) const { return states_.at(i)->vpn; }

 private:
  struct MhtState {
    explicit MhtState(const LatencyConfig& lat) : lock(lat.l1_access, lat.wake) {}
    std::uint32_t vpn = kIdle;
    std::vector<MissRecord> wake_list;
    SimMutex lock;
  };

  Task<void> mht_loop(std::uint32_t id) {
    for (;;) {
      MissRecord r = co_await dequeue(id);
      co_await handle(id, r);
      ++stats_.handled;
    }
  }

  Task<MissRecord> dequeue(std::uint32_t id) {
    const Cycles l1 = cfg_.latency.l1_access;
    auto& m = queue_.dequeue_mutex();
    for (;;) {
      co_await m.acquire(e_);
      if (queue_.empty()) {
        idle_.push_back(pids_[id]);
        m.release(e_);
        co_await events_.wait(e_);
        continue;
      }
      co_await e_.sleep(2 * l1);
      MissRecord r = queue_.pop();
      m.release(e_);
      if (!space_waiters_.empty()) {
        const ProcessId p = space_waiters_.front();
        space_waiters_.pop_front();
        events_.post(e_, p);
      }
      co_return r;
    }
  }

  std::optional<std::uint32_t> peer_on(std::uint32_t self, Vpn vpn) const {
    for (std::uint32_t p = 0; p < states_.size(); ++p)
      if (p != self && states_[p]->vpn == vpn.value) return p;
    return std::nullopt;
  }

  /// Appends `r` to the peer's wake list if the peer still walks r's page.
  Task<bool> append_to(std::uint32_t peer, const MissRecord& r) {
    auto& s = *states_[peer];
    co_await s.lock.acquire(e_);
    const bool ok = s.vpn == r.vpn.value;
    if (ok) {
      co_await e_.sleep(cfg_.latency.l1_access);
      s.wake_list.push_back(r);
    }
    s.lock.release(e_);
    co_return ok;
  }

  Task<void> handle(std::uint32_t id, const MissRecord& r) {
    const Cycles l1 = cfg_.latency.l1_access;
    auto& self = *states_[id];
    for (;;) {
      co_await e_.sleep(l1 * (states_.size() - 1));  // read the peers' state words
      if (auto peer = peer_on(id, r.vpn)) {
        if (co_await append_to(*peer, r)) {
          ++stats_.dedup_hits;
          co_return;
        }
        continue;
      }
      // Map check: a prefetch-flagged access answers from the TLB only.
      Transaction probe{VirtAddr{r.vpn.value << kPageShift}, AccessKind::read, true, id, 4};
      const Translation t = iommu_.translate(e_.now(), probe);
      co_await e_.sleep(t.latency);
      if (t.outcome == TlbOutcome::hit) {
        ++stats_.map_check_hits;
        co_await wake(r);
        co_return;
      }
      if (auto peer = peer_on(id, r.vpn)) {
        if (co_await append_to(*peer, r)) {
          ++stats_.dedup_hits;
          co_return;
        }
        continue;
      }
      self.vpn = r.vpn.value;
      self.wake_list.assign(1, r);
      break;
    }
    co_await e_.sleep(l1);  // publish state word

    ++stats_.walks;
    ++stats_.walks_per_vpn[r.vpn.value];
    const auto ppn = co_await walk_page_table(e_, dram_, pt_, r.vpn);
    if (!ppn) throw SimFault("page-table walk hit an unmapped page");
    co_await tlb_insert(r.vpn, *ppn);

    co_await self.lock.acquire(e_);
    co_await e_.sleep(l1);
    std::vector<MissRecord> to_wake = std::move(self.wake_list);
    self.wake_list.clear();
    self.vpn = kIdle;
    self.lock.release(e_);
    for (const auto& w : to_wake) co_await wake(w);
  }

  Task<void> wake(const MissRecord& r) {
    if (r.kind == MissKind::prefetch) co_return;
    co_await e_.sleep(cfg_.latency.l1_access);
    ++stats_.wakes;
    stats_.latencies.push_back(e_.now() - r.enqueued);
    if (r.waiter.type == Waiter::Type::pe) {
      events_.post(e_, r.waiter.id);
    } else {
      if (!dma_handled_) throw SimFault("DMA miss record without a DMA engine");
      dma_handled_(r.va);
    }
  }

  Engine& e_;
  const SimConfig& cfg_;
  Iommu& iommu_;
  DramPort& dram_;
  const PageTable& pt_;
  EventUnit& events_;
  MissQueue queue_;
  std::vector<std::unique_ptr<MhtState>> states_;
  std::vector<ProcessId> pids_;
  std::deque<ProcessId> idle_;
  std::deque<ProcessId> space_waiters_;
  std::optional<SimMutex> soa_lock_;
  std::function<void(VirtAddr)> dma_handled_;
  MissStats stats_;
};

}  // namespace svmsim
