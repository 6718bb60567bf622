#pragma once

// Untimed execution of a worker kernel and its helper in lockstep. The helper
// runs iteration i of worker k just before the worker does; every page the
// worker touches in that iteration must be among the pages the helper touched.

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "svmsim/runtime/interpreter.hpp"

namespace svmsim::rt {

/// Executes accesses immediately against the address space and records the
/// pages they touch.
class FunctionalBackend : public Backend {
 public:
  FunctionalBackend(AddressSpace& as, std::uint32_t l1_bytes) : as_(as), l1_(l1_bytes) {}

  void record_into(std::set<std::uint32_t>* sink) { sink_ = sink; }

  Task<Word> load(ThreadCtx&, VirtAddr va) override {
    touch(va, 4);
    co_return as_.read32(va);
  }
  Task<void> store(ThreadCtx&, VirtAddr va, Word v) override {
    touch(va, 4);
    as_.write32(va, static_cast<std::uint32_t>(v));
    co_return;
  }
  Task<void> prefetch(ThreadCtx&, VirtAddr va) override {
    touch(va, 1);
    co_return;
  }
  Task<std::uint32_t> dma(ThreadCtx&, DmaCommand cmd) override {
    touch(cmd.va, cmd.length);
    auto* local = l1_.at(cmd.internal, cmd.length);
    if (cmd.dir == Direction::in) as_.read(cmd.va, {local, cmd.length});
    else as_.write(cmd.va, {local, cmd.length});
    co_return next_id_++;
  }
  Task<void> dma_wait(ThreadCtx&, std::uint32_t) override { co_return; }
  Task<void> sleep(ThreadCtx&, Cycles) override { co_return; }
  void progress(ThreadCtx&, Word) override {}
  Scratchpad& l1() override { return l1_; }
  Cycles l1_cost() const override { return 0; }

 private:
  void touch(VirtAddr va, std::uint32_t len) {
    if (!as_.translate(va)) throw SimFault("access to unmapped address " + std::to_string(va.value));
    if (!sink_) return;
    for (const Vpn p : DmaEngine::pages_of(va, len)) sink_->insert(p.value);
  }

  AddressSpace& as_;
  Scratchpad l1_;
  std::set<std::uint32_t>* sink_ = nullptr;
  std::uint32_t next_id_ = 0;
};

struct CoverageReport {
  bool ok = true;
  std::uint64_t iterations = 0;
  std::uint64_t worker_pages = 0;  // summed over iterations
  std::string detail;
};

inline CoverageReport check_coverage(const Kernel& worker, const Kernel& helper, AddressSpace& as,
                                     const std::vector<Word>& args, Word items, std::uint32_t workers,
                                     std::uint32_t l1_bytes = 256 * 1024) {
  CoverageReport rep;
  Program wp(worker), hp(helper);
  FunctionalBackend be(as, l1_bytes);
  Interpreter wi(wp, be), hi(hp, be);
  Engine e;

  auto fail = [&rep](const std::string& why) {
    if (rep.ok) rep.detail = why;
    rep.ok = false;
  };

  auto body = [&]() -> Task<void> {
    const std::uint32_t share = l1_bytes / workers;
    for (std::uint32_t k = 0; k < workers; ++k) {
      const auto [b, en] = static_chunk(items, k, workers);
      ThreadCtx wt = wi.make_ctx(k, e.current(), args, k * share, (k + 1) * share, b, en);
      ThreadCtx ht = hi.make_ctx(k, e.current(), args, 0, 0, b, en);
      std::set<std::uint32_t> wpages, hpages;
      if (hp.has_loop()) {
        be.record_into(&hpages);
        co_await hi.run_prologue(ht);
      }
      be.record_into(&wpages);
      co_await wi.run_prologue(wt);
      auto missing = [&](const std::set<std::uint32_t>& need, const std::set<std::uint32_t>& have) {
        for (auto p : need)
          if (!have.count(p)) return std::optional<std::uint32_t>(p);
        return std::optional<std::uint32_t>();
      };
      if (auto p = missing(wpages, hpages)) {
        std::ostringstream os;
        os << "worker " << k << " prologue touches page 0x" << std::hex << *p << " the helper never touches";
        fail(os.str());
      }
      const auto [lo, hi_] = co_await wi.loop_bounds(wt);
      std::pair<Word, Word> hb{lo, lo};
      if (hp.has_loop()) hb = co_await hi.loop_bounds(ht);
      for (Word i = lo; i < hi_; ++i) {
        wpages.clear();
        hpages.clear();
        if (hp.has_loop() && i >= hb.first && i < hb.second) {
          be.record_into(&hpages);
          co_await hi.run_iteration(ht, i);
        }
        be.record_into(&wpages);
        co_await wi.run_iteration(wt, i);
        be.record_into(nullptr);
        ++rep.iterations;
        rep.worker_pages += wpages.size();
        if (auto p = missing(wpages, hpages)) {
          std::ostringstream os;
          os << "worker " << k << " iteration " << i << " touches page 0x" << std::hex << *p
             << " the helper does not cover";
          fail(os.str());
        }
      }
      be.record_into(nullptr);
      co_await wi.run_epilogue(wt);
    }
  };
  e.spawn("cosim", ProcessKind::harness, body());
  e.run_until_quiescent(1);
  return rep;
}

}  // namespace svmsim::rt
