#pragma once

// Platform parameters. Defaults follow the evaluated platform where it states
// a value (TLB geometry and lookup latency, DMA burst limits, L1 size); the
// remaining latencies are modelling choices and documented as such.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "svmsim/engine.hpp"

namespace svmsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { ideal, soa, vdma };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::ideal: return "ideal";
    case Mode::soa: return "soa";
    case Mode::vdma: return "vdma";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "ideal") return Mode::ideal;
  if (s == "soa") return Mode::soa;
  if (s == "vdma") return Mode::vdma;
  throw ConfigError("unknown mode '" + s + "'");
}

struct LatencyConfig {
  Cycles l1_access = 1;
  Cycles l2_spm_access = 8;  // unvalidated
  Cycles dram_access = 100;
  Cycles dram_gap_per_64b = 4;
  Cycles tlb_l2_lookup = 6;
  Cycles wake = 2;  // event unit; unvalidated
};

struct TlbConfig {
  std::uint32_t l1_entries = 32;
  std::uint32_t l2_sets = 32;
  std::uint32_t l2_ways = 8;
  /// One word write through the IOMMU configuration port.
  Cycles config_write = 8;
};

struct MemConfig {
  std::uint32_t page_table_levels = 3;
  std::uint64_t dram_bytes = 1ULL << 30;
};

struct DmaConfig {
  std::uint32_t max_in_flight = 8;
  std::uint32_t max_burst = 2048;
  std::uint32_t max_command = 64 * 1024;
  /// AXI data channel width; read and write channels are independent.
  std::uint32_t bus_bytes_per_cycle = 8;
  /// PE-side cost of programming one command (register writes).
  Cycles command_issue = 3;
};

struct MissConfig {
  std::uint32_t queue_capacity = 64;
};

struct PhtConfig {
  std::uint32_t min_distance = 2;
  std::uint32_t max_distance = 8;
  /// PHT back-off when every worker is outside its prefetch window.
  Cycles poll_interval = 16;
};

struct ClusterConfig {
  std::uint32_t pes = 8;
  std::uint32_t workers = 7;
  std::uint32_t prefetchers = 0;
  std::uint32_t miss_handlers = 1;
  std::uint32_t l1_bytes = 256 * 1024;
};

struct SimConfig {
  Mode mode = Mode::vdma;
  LatencyConfig latency;
  TlbConfig tlb;
  MemConfig mem;
  DmaConfig dma;
  MissConfig miss;
  PhtConfig pht;
  ClusterConfig cluster;
  SimTime time_limit = 2'000'000'000;

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(what);
    };
    need(latency.l1_access >= 1 && latency.l2_spm_access >= 1 && latency.dram_access >= 1 &&
             latency.tlb_l2_lookup >= 1,
         "latencies must be >= 1 cycle");
    need(tlb.l1_entries >= 1 && tlb.l2_sets >= 1 && tlb.l2_ways >= 1, "empty TLB level");
    need(mem.page_table_levels >= 2 && mem.page_table_levels <= 4, "page table levels must be 2..4");
    need(dma.max_in_flight >= 1 && dma.max_in_flight <= 16, "max_in_flight must be 1..16");
    need(dma.max_burst >= 8 && (dma.max_burst & (dma.max_burst - 1)) == 0 && dma.max_burst <= 4096,
         "max_burst must be a power of two in 8..4096");
    need(dma.bus_bytes_per_cycle >= 1, "bus width must be >= 1 byte/cycle");
    need(miss.queue_capacity >= 1, "miss queue capacity must be >= 1");
    need(pht.min_distance <= pht.max_distance, "pht min_distance > max_distance");
    need(cluster.workers >= 1, "at least one worker thread");
    if (mode != Mode::ideal)
      need(cluster.workers + cluster.prefetchers + std::max<std::uint32_t>(cluster.miss_handlers, 1) <=
               cluster.pes,
           "WT + PHT + MHT exceed the PEs of the cluster");
    else
      need(cluster.workers <= cluster.pes, "more workers than PEs");
    if (mode == Mode::soa)
      need(cluster.prefetchers == 0 && cluster.miss_handlers == 1, "soa mode requires PHT=0, MHT=1");
  }
};

}  // namespace svmsim
