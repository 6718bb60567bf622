#pragma once

// One simulated cluster running a workload: worker threads, prefetching
// helpers, miss handlers and the DMA engine over a shared IOMMU.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "svmsim/dma.hpp"
#include "svmsim/dsl/parser.hpp"
#include "svmsim/miss_handling.hpp"
#include "svmsim/pht/compiler.hpp"
#include "svmsim/runtime/interpreter.hpp"
#include "svmsim/runtime/window.hpp"
#include "svmsim/workloads.hpp"

namespace svmsim {

struct RunMetrics {
  bool ok = true;
  std::string status = "ok";  // ok | timeout | wrong-output | fault
  std::string detail;
  SimTime elapsed = 0;
  std::uint64_t misses = 0;  // demand misses of workers and DMA bursts
  std::uint64_t walks = 0;
  std::uint64_t dedup = 0;
  std::uint64_t prefetch_hits = 0;
  std::uint64_t prefetch_misses = 0;
  std::uint64_t drain_stall_cycles = 0;
  std::uint64_t bursts_failed = 0;
  std::vector<Cycles> busy;  // compute cycles per worker
};

class System;

/// Timed machine: accesses go through the IOMMU, misses through the miss
/// handlers, transfers through the DMA engine.
class TimedBackend : public rt::Backend {
 public:
  TimedBackend(Engine& e, const SimConfig& cfg, Iommu& iommu, DramPort& dram, AddressSpace& as, Scratchpad& l1,
               MissHandling& mh, DmaEngine& dma)
      : e_(e), cfg_(cfg), iommu_(iommu), dram_(dram), as_(as), l1_(l1), mh_(mh), dma_(dma) {}

  Task<rt::Word> load(rt::ThreadCtx& t, VirtAddr va) override {
    co_await access(t, va, AccessKind::read);
    co_return as_.read32(va);
  }

  Task<void> store(rt::ThreadCtx& t, VirtAddr va, rt::Word v) override {
    co_await access(t, va, AccessKind::write);
    as_.write32(va, static_cast<std::uint32_t>(v));
  }

  Task<void> prefetch(rt::ThreadCtx& t, VirtAddr va) override {
    const Translation tr = iommu_.translate(e_.now(), Transaction{va, AccessKind::read, true, t.pid, 4});
    co_await e_.sleep(tr.latency);
    if (tr.outcome == TlbOutcome::hit) {
      ++prefetch_hits_;
      co_return;
    }
    ++prefetch_misses_;
    MissRecord r;
    r.vpn = va.page();
    r.va = va;
    r.kind = MissKind::prefetch;
    r.waiter = Waiter{Waiter::Type::pe, t.pid};
    co_await mh_.enqueue_miss(r);
  }

  Task<std::uint32_t> dma(rt::ThreadCtx&, DmaCommand cmd) override {
    if (cfg_.mode == Mode::soa) co_await dma_.soa_lock_span(cmd.va, cmd.length);
    const std::uint32_t id = co_await dma_.submit(cmd);
    if (cfg_.mode == Mode::soa) locked_[id] = {cmd.va, cmd.length};
    co_return id;
  }

  Task<void> dma_wait(rt::ThreadCtx&, std::uint32_t id) override {
    co_await dma_.wait(id);
    if (auto it = locked_.find(id); it != locked_.end()) {
      const auto [va, len] = it->second;
      locked_.erase(it);
      co_await dma_.soa_unlock_span(va, len);
    }
  }

  Task<void> sleep(rt::ThreadCtx&, Cycles n) override { co_await e_.sleep(n); }

  void progress(rt::ThreadCtx& t, rt::Word i) override {
    if (t.index < progress_.size()) progress_[t.index] = i;
  }

  Scratchpad& l1() override { return l1_; }
  Cycles l1_cost() const override { return cfg_.latency.l1_access; }

  /// Shared progress words, one per worker; empty until a worker starts.
  std::vector<std::optional<rt::Word>> progress_;
  std::uint64_t prefetch_hits_ = 0;
  std::uint64_t prefetch_misses_ = 0;

 private:
  /// A 4-byte access that blocks the caller through any miss.
  Task<void> access(rt::ThreadCtx& t, VirtAddr va, AccessKind kind) {
    for (;;) {
      const Translation tr = iommu_.translate(e_.now(), Transaction{va, kind, false, t.pid, 4});
      co_await e_.sleep(tr.latency);
      if (tr.outcome == TlbOutcome::hit) {
        const SimTime done = dram_.reserve(e_.now(), 4);
        co_await e_.sleep(done - e_.now());
        co_return;
      }
      co_await mh_.wait_for_mapping(va, kind);
    }
  }

  Engine& e_;
  const SimConfig& cfg_;
  Iommu& iommu_;
  DramPort& dram_;
  AddressSpace& as_;
  Scratchpad& l1_;
  MissHandling& mh_;
  DmaEngine& dma_;
  std::map<std::uint32_t, std::pair<VirtAddr, std::uint32_t>> locked_;
};

class System {
 public:
  explicit System(const SimConfig& cfg, std::uint64_t seed = 1)
      : cfg_(cfg),
        as_(cfg_.mem, seed),
        dram_(cfg_.latency.dram_access, cfg_.latency.dram_gap_per_64b),
        iommu_(cfg_, as_.page_table()),
        miss_events_(cfg_.latency.wake),
        dma_events_(cfg_.latency.wake),
        l1_(cfg_.cluster.l1_bytes),
        mh_(e_, cfg_, iommu_, dram_, as_.page_table(), miss_events_),
        dma_(e_, cfg_, iommu_, dram_, as_.memory(), l1_, mh_, dma_events_),
        backend_(e_, cfg_, iommu_, dram_, as_, l1_, mh_, dma_) {
    cfg_.validate();
  }

  AddressSpace& address_space() { return as_; }
  Engine& engine() { return e_; }
  Iommu& iommu() { return iommu_; }
  MissHandling& miss_handling() { return mh_; }
  DmaEngine& dma() { return dma_; }
  TimedBackend& backend() { return backend_; }

  /// Runs the workload once at `milli` compute cycles per 1000 bytes.
  RunMetrics run(const WorkloadInstance& w, rt::Word milli) {
    const bool ideal = cfg_.mode == Mode::ideal;
    const std::uint32_t workers = cfg_.cluster.workers;
    const std::uint32_t helpers = ideal ? 0 : cfg_.cluster.prefetchers;

    const dsl::Kernel source = dsl::parse(w.source);
    std::optional<pht::Compiled> compiled;
    if (helpers > 0) compiled = pht::compile(source);
    worker_prog_ = std::make_unique<rt::Program>(compiled ? compiled->worker : source);
    worker_ = std::make_unique<rt::Interpreter>(*worker_prog_, backend_);
    if (compiled) {
      helper_prog_ = std::make_unique<rt::Program>(compiled->helper);
      helper_ = std::make_unique<rt::Interpreter>(*helper_prog_, backend_);
    }

    args_ = w.args;
    args_.at(w.intensity_arg) = milli;
    items_ = w.items;
    backend_.progress_.assign(workers, std::nullopt);

    if (!ideal) mh_.spawn_handlers(cfg_.cluster.miss_handlers);
    dma_.start();
    ctxs_.resize(workers);
    for (std::uint32_t k = 0; k < workers; ++k)
      e_.spawn("wt" + std::to_string(k), ProcessKind::worker, worker_loop(k));
    if (helper_ && helper_prog_->has_loop())
      for (std::uint32_t h = 0; h < helpers; ++h)
        e_.spawn("pht" + std::to_string(h), ProcessKind::prefetcher, helper_loop(h, helpers), true);

    RunMetrics m;
    try {
      m.elapsed = e_.run_until_done(cfg_.time_limit);
      if (std::string bad = w.verify(as_); !bad.empty()) {
        m.ok = false;
        m.status = "wrong-output";
        m.detail = bad;
      }
    } catch (const SimTimeout& t) {
      m.ok = false;
      m.status = "timeout";
      m.detail = t.what();
      m.elapsed = e_.now();
    } catch (const SimFault& f) {
      m.ok = false;
      m.status = "fault";
      m.detail = f.what();
      m.elapsed = e_.now();
    }
    const auto& is = iommu_.stats();
    m.misses = is.misses - is.prefetch_misses + dma_.stats().soa_probe_misses;
    m.walks = mh_.stats().walks;
    m.dedup = mh_.stats().dedup_hits;
    m.prefetch_hits = backend_.prefetch_hits_;
    m.prefetch_misses = backend_.prefetch_misses_;
    m.drain_stall_cycles = dma_.stats().drain_stall_cycles;
    m.bursts_failed = dma_.stats().bursts_failed;
    for (const auto& c : ctxs_) m.busy.push_back(c.busy);
    return m;
  }

 private:
  std::pair<std::uint32_t, std::uint32_t> l1_share(std::uint32_t pe) const {
    const std::uint32_t share = cfg_.cluster.l1_bytes / cfg_.cluster.pes;
    return {pe * share, (pe + 1) * share};
  }

  Task<void> worker_loop(std::uint32_t k) {
    const auto [lo, hi] = rt::static_chunk(items_, k, cfg_.cluster.workers);
    const auto [l1b, l1e] = l1_share(k);
    ctxs_[k] = worker_->make_ctx(k, e_.current(), args_, l1b, l1e, lo, hi);
    co_await worker_->run(ctxs_[k]);
  }

  /// One helper serves workers k with k % helpers == h, one iteration per
  /// worker per round, inside the window [w_k + d, w_k + D].
  Task<void> helper_loop(std::uint32_t h, std::uint32_t helpers) {
    struct Served {
      std::uint32_t k;
      rt::ThreadCtx ctx;
      rt::Word next = 0;
      rt::Word end = 0;
    };
    const rt::Window win{static_cast<rt::Word>(cfg_.pht.min_distance), static_cast<rt::Word>(cfg_.pht.max_distance)};
    std::vector<Served> served;
    for (std::uint32_t k = h; k < cfg_.cluster.workers; k += helpers) {
      const auto [lo, hi] = rt::static_chunk(items_, k, cfg_.cluster.workers);
      served.push_back(Served{k, helper_->make_ctx(k, e_.current(), args_, 0, 0, lo, hi)});
    }
    for (auto& s : served) {
      co_await helper_->run_prologue(s.ctx);
      const auto [lo, hi] = co_await helper_->loop_bounds(s.ctx);
      s.next = lo;
      s.end = hi;
    }
    for (;;) {
      bool live = false, progressed = false;
      for (auto& s : served) {
        if (s.next >= s.end) continue;
        live = true;
        co_await e_.sleep(cfg_.latency.l1_access);  // read w_k
        const auto it = rt::window_step(s.next, backend_.progress_[s.k], s.ctx.chunk_begin, s.end, win);
        if (!it) continue;
        co_await helper_->run_iteration(s.ctx, *it);
        s.next = *it + 1;
        progressed = true;
      }
      if (!live) co_return;
      if (!progressed) co_await e_.sleep(cfg_.pht.poll_interval);
    }
  }

  SimConfig cfg_;
  Engine e_;
  AddressSpace as_;
  DramPort dram_;
  Iommu iommu_;
  EventUnit miss_events_;
  EventUnit dma_events_;
  Scratchpad l1_;
  MissHandling mh_;
  DmaEngine dma_;
  TimedBackend backend_;
  std::unique_ptr<rt::Program> worker_prog_, helper_prog_;
  std::unique_ptr<rt::Interpreter> worker_, helper_;
  std::vector<rt::Word> args_;
  rt::Word items_ = 0;
  std::vector<rt::ThreadCtx> ctxs_;
};

}  // namespace svmsim
