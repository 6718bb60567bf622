#pragma once

// A single cluster's translation and DMA datapath wired together without any
// kernel interpreter, for driving transfers directly from test processes.

#include <memory>

#include "svmsim/dma.hpp"

namespace oracle {

struct DmaRig {
  explicit DmaRig(svmsim::SimConfig c, std::uint64_t seed = 1)
      : cfg(c),
        as(cfg.mem, seed),
        dram(cfg.latency.dram_access, cfg.latency.dram_gap_per_64b),
        iommu(cfg, as.page_table()),
        miss_events(cfg.latency.wake),
        dma_events(cfg.latency.wake),
        l1(cfg.cluster.l1_bytes),
        mh(e, cfg, iommu, dram, as.page_table(), miss_events),
        dma(e, cfg, iommu, dram, as.memory(), l1, mh, dma_events) {}

  void start() {
    mh.spawn_handlers(cfg.cluster.miss_handlers);
    dma.start();
  }

  /// Fills the TLB with every page of [va, va+len) (untimed).
  void premap(svmsim::VirtAddr va, std::uint32_t len) {
    for (auto p : svmsim::DmaEngine::pages_of(va, len)) iommu.tlb().insert(p, *as.page_table().lookup(p));
  }

  svmsim::SimConfig cfg;
  svmsim::Engine e;
  svmsim::AddressSpace as;
  svmsim::DramPort dram;
  svmsim::Iommu iommu;
  svmsim::EventUnit miss_events;
  svmsim::EventUnit dma_events;
  svmsim::Scratchpad l1;
  svmsim::MissHandling mh;
  svmsim::DmaEngine dma;
};

}  // namespace oracle
