#pragma once

// Cluster DMA engine: per-PE command interfaces, burst issue through the
// IOMMU, the retirement buffer and its drain-then-reissue recovery, and the
// lock-based transfer protocol of the SoA baseline.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "svmsim/config.hpp"
#include "svmsim/engine.hpp"
#include "svmsim/memory.hpp"
#include "svmsim/miss_handling.hpp"
#include "svmsim/retirement_buffer.hpp"
#include "svmsim/sync.hpp"
#include "svmsim/tlb.hpp"

namespace svmsim {

struct DmaCommand {
  VirtAddr va;
  std::uint32_t internal = 0;
  std::uint32_t length = 0;
  Direction dir = Direction::in;
  ProcessId pe = kNoProcess;
};

struct DmaStats {
  std::uint64_t commands = 0;
  std::uint64_t bursts_issued = 0;
  std::uint64_t bursts_failed = 0;
  std::uint64_t bursts_reissued = 0;
  std::uint64_t drain_stall_cycles = 0;
  std::uint64_t soa_probe_misses = 0;  // SoA lock probes that found the page absent
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::vector<Cycles> transfer_latencies;
};

struct BurstEvent {
  SimTime time;
  std::uint32_t transfer;
  std::uint32_t index;
  std::uint8_t axi_id;
  bool reissue;
  bool ok;  // meaningful for responses
  bool response;
};

class DmaEngine {
 public:
  static constexpr std::uint32_t kAxiIds = 8;
  static constexpr std::uint32_t kSource = 0xD0;

  DmaEngine(Engine& e, const SimConfig& cfg, Iommu& iommu, DramPort& dram, PhysicalMemory& mem, Scratchpad& l1,
            MissHandling& mh, EventUnit& events)
      : e_(e), cfg_(cfg), iommu_(iommu), dram_(dram), mem_(mem), l1_(l1), mh_(mh), events_(events),
        rb_(cfg.dma.max_in_flight) {
    mh_.set_dma_handler([this](VirtAddr va) { write_handled(va); });
  }

  void start() {
    e_.spawn("dma-ctrl", ProcessKind::dma_control, control_loop(), true);
    e_.spawn("dma-fault", ProcessKind::dma_control, fault_reporter(), true);
  }

  /// PE side: programs one command (register writes) and returns its id.
  Task<std::uint32_t> submit(DmaCommand cmd) {
    if (cmd.length == 0) throw std::invalid_argument("zero-length DMA command");
    if (cmd.length > cfg_.dma.max_command) throw std::invalid_argument("DMA command exceeds the maximum length");
    cmd.pe = e_.current();
    co_await e_.sleep(cfg_.dma.command_issue);
    co_return enqueue(cmd);
  }

  /// Untimed enqueue for harness-driven tests.
  std::uint32_t enqueue(const DmaCommand& cmd) {
    const std::uint32_t id = static_cast<std::uint32_t>(transfers_.size());
    Transfer t;
    t.cmd = cmd;
    t.bursts = split(cmd.va, cmd.internal, cmd.length, cmd.dir, cfg_.dma.max_burst);
    for (auto& b : t.bursts) b.transfer = id;
    t.submitted = e_.now();
    transfers_.push_back(std::move(t));
    auto& q = queues_[cmd.pe];
    q.push_back(id);
    ++stats_.commands;
    wake_.raise(e_);
    return id;
  }

  bool done(std::uint32_t id) const { return transfers_.at(id).remaining == 0 && transfers_[id].issued_all; }

  /// PE side: blocks until the transfer has completed.
  Task<void> wait(std::uint32_t id) {
    while (!done(id)) co_await events_.wait(e_);
  }

  /// Register-write from a miss handler: the page of `va` is mapped now.
  void write_handled(VirtAddr va) {
    reported_.erase(va.page().value);
    const auto n = rb_.write_handled(va);
    if (n == 0) ++stray_handled_writes_;
    wake_.raise(e_);
  }

  /// SoA transfer preamble run by the issuing worker: every page of the span
  /// is made present and locked while the global TLB lock is held.
  Task<void> soa_lock_span(VirtAddr va, std::uint32_t length) {
    SimMutex* lock = mh_.soa_tlb_lock();
    if (!lock) throw SimFault("SoA locking outside SoA mode");
    const auto pages = pages_of(va, length);
    std::size_t i = 0;
    while (i < pages.size()) {
      co_await lock->acquire(e_);
      for (; i < pages.size(); ++i) {
        co_await e_.sleep(cfg_.tlb.config_write);  // probe through the configuration port
        if (!iommu_.tlb().lock(pages[i])) {
          ++stats_.soa_probe_misses;
          break;
        }
        co_await e_.sleep(cfg_.tlb.config_write);  // set the lock bit
      }
      lock->release(e_);
      if (i < pages.size()) co_await mh_.wait_for_mapping(VirtAddr{pages[i].value << kPageShift}, AccessKind::read);
    }
  }

  Task<void> soa_unlock_span(VirtAddr va, std::uint32_t length) {
    SimMutex* lock = mh_.soa_tlb_lock();
    if (!lock) throw SimFault("SoA locking outside SoA mode");
    co_await lock->acquire(e_);
    for (const Vpn p : pages_of(va, length)) {
      co_await e_.sleep(cfg_.tlb.config_write);
      iommu_.tlb().unlock(p);
    }
    lock->release(e_);
  }

  static std::vector<Vpn> pages_of(VirtAddr va, std::uint32_t length) {
    std::vector<Vpn> out;
    const std::uint32_t first = va.page().value;
    const std::uint32_t last = VirtAddr{va.value + length - 1}.page().value;
    for (std::uint32_t p = first; p <= last; ++p) out.push_back(Vpn{p});
    return out;
  }

  const DmaStats& stats() const { return stats_; }
  const RetirementBuffer& retirement_buffer() const { return rb_; }
  RetirementBuffer& retirement_buffer() { return rb_; }
  std::uint64_t stray_handled_writes() const { return stray_handled_writes_; }
  std::uint32_t max_observed_in_flight() const { return max_in_flight_; }
  bool idle() const { return rb_.live() == 0 && pending_bursts() == 0; }
  void set_burst_hook(std::function<void(const BurstEvent&)> h) { burst_hook_ = std::move(h); }

 private:
  enum class Phase { normal, drain, reissue };

  struct Transfer {
    DmaCommand cmd;
    std::vector<Burst> bursts;
    std::size_t next = 0;
    std::uint32_t remaining = 0;
    bool issued_all = false;
    SimTime submitted = 0;
  };

  std::size_t pending_bursts() const {
    std::size_t n = 0;
    for (const auto& [pe, q] : queues_)
      for (auto id : q) n += transfers_[id].bursts.size() - transfers_[id].next;
    return n;
  }

  /// Round-robin over the command interfaces, one burst per grant.
  std::optional<std::uint32_t> arbitrate() {
    if (queues_.empty()) return std::nullopt;
    auto it = queues_.upper_bound(rr_last_);
    for (std::size_t n = 0; n < queues_.size(); ++n, ++it) {
      if (it == queues_.end()) it = queues_.begin();
      if (!it->second.empty()) {
        rr_last_ = it->first;
        return it->second.front();
      }
    }
    return std::nullopt;
  }

  std::uint8_t assign_id(Vpn page) {
    if (last_page_ && *last_page_ == page) return last_id_;
    last_page_ = page;
    last_id_ = static_cast<std::uint8_t>(next_id_++ % kAxiIds);
    return last_id_;
  }

  bool step() {
    if (phase_ == Phase::drain) {
      if (rb_.in_flight() != 0) return false;
      phase_ = Phase::reissue;
    }
    if (phase_ == Phase::reissue) {
      if (rb_.pending_retry() == 0 && rb_.in_flight() == 0) {
        stats_.drain_stall_cycles += e_.now() - stall_start_;
        phase_ = Phase::normal;
      } else {
        if (rb_.in_flight() >= rb_.capacity()) return false;
        auto i = rb_.next_reissuable();
        if (!i) return false;
        rb_.reissue(*i);
        ++stats_.bursts_reissued;
        issue(*i, true);
        return true;
      }
    }
    if (rb_.full()) return false;
    auto id = arbitrate();
    if (!id) return false;
    auto& t = transfers_[*id];
    Burst b = t.bursts[t.next++];
    if (t.next == t.bursts.size()) {
      t.issued_all = true;
      queues_[t.cmd.pe].pop_front();
    }
    b.axi_id = assign_id(b.va.page());
    ++t.remaining;
    const int slot = rb_.add(b);
    ++stats_.bursts_issued;
    issue(slot, false);
    return true;
  }

  Task<void> control_loop() {
    for (;;) {
      if (step()) co_await e_.sleep(1);
      else co_await wake_.wait(e_);
    }
  }

  /// Stand-in for the software that reads the failed-address register after
  /// a miss interrupt: one miss record per failing page.
  Task<void> fault_reporter() {
    for (;;) {
      co_await fault_.wait(e_);
      for (;;) {
        co_await e_.sleep(cfg_.latency.l1_access * 2);
        const std::uint32_t addr = rb_.read_failed();
        if (addr == 0) break;
        if (!reported_.insert(VirtAddr{addr}.page().value).second) continue;  // already queued
        MissRecord r;
        r.va = VirtAddr{addr};
        r.vpn = r.va.page();
        r.kind = MissKind::read;
        r.waiter = Waiter{Waiter::Type::dma, 0};
        co_await mh_.enqueue_miss(r);
      }
    }
  }

  void issue(int slot, bool reissue) {
    max_in_flight_ = std::max(max_in_flight_, rb_.in_flight());
    const Burst b = rb_.entry(slot).burst;
    const SimTime now = e_.now();
    const Translation tr = iommu_.translate(
        now, Transaction{b.va, b.dir == Direction::in ? AccessKind::read : AccessKind::write, false, kSource, b.length});
    if (burst_hook_) burst_hook_(BurstEvent{now, b.transfer, b.index, b.axi_id, reissue, true, false});
    const SimTime translated = now + tr.latency;
    SimTime respond;
    const bool ok = tr.outcome == TlbOutcome::hit;
    if (!ok) {
      respond = translated;
    } else {
      const Cycles beats = (b.length + cfg_.dma.bus_bytes_per_cycle - 1) / cfg_.dma.bus_bytes_per_cycle;
      if (b.dir == Direction::in) {
        const SimTime dram_done = dram_.reserve(translated, b.length);
        const SimTime start = std::max(translated + cfg_.latency.dram_access, r_free_);
        respond = std::max(start + beats, dram_done);
        r_free_ = start + beats;
      } else {
        const SimTime start = std::max(translated, w_free_);
        w_free_ = start + beats;
        respond = std::max(start + beats, dram_.reserve(start, b.length));
      }
    }
    respond = std::max(respond, last_response_[b.axi_id]);
    last_response_[b.axi_id] = respond;
    const PhysAddr pa = tr.pa;
    e_.at(respond, [this, slot, b, ok, pa, reissue] { on_response(slot, b, ok, pa, reissue); });
  }

  void on_response(int slot, const Burst& b, bool ok, PhysAddr pa, bool reissue) {
    const int matched = rb_.complete(b.axi_id, ok);
    if (matched != slot) throw SimFault("DMA response matched an unexpected retirement entry");
    if (burst_hook_) burst_hook_(BurstEvent{e_.now(), b.transfer, b.index, b.axi_id, reissue, ok, true});
    if (!ok) {
      if (cfg_.mode == Mode::soa) throw SimFault("translation miss during a locked SoA transfer");
      ++stats_.bursts_failed;
      if (phase_ != Phase::drain) {
        if (phase_ == Phase::normal) stall_start_ = e_.now();
        phase_ = Phase::drain;
      }
      fault_.raise(e_);
      wake_.raise(e_);
      return;
    }
    std::uint8_t* frame = mem_.frame(Ppn{static_cast<std::uint32_t>(pa.value >> kPageShift)});
    std::uint8_t* ext = frame + (pa.value & (kPageSize - 1));
    std::uint8_t* loc = l1_.at(b.internal, b.length);
    if (b.dir == Direction::in) {
      std::memcpy(loc, ext, b.length);
      stats_.bytes_in += b.length;
    } else {
      std::memcpy(ext, loc, b.length);
      stats_.bytes_out += b.length;
    }
    auto& t = transfers_[b.transfer];
    if (--t.remaining == 0 && t.issued_all) {
      stats_.transfer_latencies.push_back(e_.now() - t.submitted);
      events_.post(e_, t.cmd.pe);
    }
    wake_.raise(e_);
  }

  Engine& e_;
  const SimConfig& cfg_;
  Iommu& iommu_;
  DramPort& dram_;
  PhysicalMemory& mem_;
  Scratchpad& l1_;
  MissHandling& mh_;
  EventUnit& events_;
  RetirementBuffer rb_;
  std::vector<Transfer> transfers_;
  std::map<ProcessId, std::deque<std::uint32_t>> queues_;
  ProcessId rr_last_ = kNoProcess;
  std::optional<Vpn> last_page_;
  std::uint8_t last_id_ = 0;
  std::uint32_t next_id_ = 0;
  std::array<SimTime, kAxiIds> last_response_{};
  SimTime r_free_ = 0;
  SimTime w_free_ = 0;
  Phase phase_ = Phase::normal;
  SimTime stall_start_ = 0;
  Signal wake_;
  Signal fault_;
  std::set<std::uint32_t> reported_;
  std::uint64_t stray_handled_writes_ = 0;
  std::uint32_t max_in_flight_ = 0;
  DmaStats stats_;
  std::function<void(const BurstEvent&)> burst_hook_;
};

}  // namespace svmsim
