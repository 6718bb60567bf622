#pragma once

// Scripted miss-handling scenario: N workers miss on one page at the same
// instant and M handlers serve the queue.

#include <cstdint>
#include <vector>

#include "svmsim/miss_handling.hpp"

namespace oracle {

struct DedupOutcome {
  std::uint64_t walks = 0;
  std::uint64_t woken = 0;
  bool page_present = false;
};

inline svmsim::Task<void> missing_worker(svmsim::Engine& e, svmsim::MissHandling& mh, svmsim::VirtAddr va,
                                         svmsim::Cycles stagger, std::uint64_t& woken) {
  co_await e.sleep(stagger);
  co_await mh.wait_for_mapping(va, svmsim::AccessKind::read);
  ++woken;
}

inline DedupOutcome run_dedup_scenario(std::uint32_t workers, std::uint32_t handlers, svmsim::Cycles stagger = 0) {
  using namespace svmsim;
  SimConfig cfg;
  cfg.cluster.pes = 16;
  cfg.cluster.workers = workers;
  cfg.cluster.miss_handlers = handlers;
  Engine e;
  AddressSpace as(cfg.mem, 1);
  const VirtAddr base = as.allocate(kPageSize);
  DramPort dram(cfg.latency.dram_access, cfg.latency.dram_gap_per_64b);
  Iommu iommu(cfg, as.page_table());
  EventUnit events(cfg.latency.wake);
  MissHandling mh(e, cfg, iommu, dram, as.page_table(), events);
  mh.spawn_handlers(handlers);
  DedupOutcome out;
  for (std::uint32_t w = 0; w < workers; ++w)
    e.spawn("wt" + std::to_string(w), ProcessKind::worker,
            missing_worker(e, mh, VirtAddr{base.value + 64 * w}, stagger * w, out.woken));
  e.run_until_quiescent(1'000'000);
  out.walks = mh.stats().walks;
  out.page_present = iommu.tlb().present(base.page());
  return out;
}

}  // namespace oracle
