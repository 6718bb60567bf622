#pragma once

// Physical memory levels, the radix page table of the offloaded process and
// the host-side allocator that lays out benchmark data before the offload.

#include <algorithm>
#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "svmsim/config.hpp"
#include "svmsim/engine.hpp"

namespace svmsim {

inline constexpr std::uint32_t kPageShift = 12;
inline constexpr std::uint32_t kPageSize = 1u << kPageShift;

struct Vpn {
  std::uint32_t value = 0;
  auto operator<=>(const Vpn&) const = default;
};

struct Ppn {
  std::uint32_t value = 0;
  auto operator<=>(const Ppn&) const = default;
};

struct VirtAddr {
  std::uint32_t value = 0;
  auto operator<=>(const VirtAddr&) const = default;
  Vpn page() const { return Vpn{value >> kPageShift}; }
  std::uint32_t offset() const { return value & (kPageSize - 1); }
};

struct PhysAddr {
  std::uint64_t value = 0;
  auto operator<=>(const PhysAddr&) const = default;
};

inline PhysAddr compose(Ppn ppn, std::uint32_t offset) {
  return PhysAddr{(std::uint64_t{ppn.value} << kPageShift) | (offset & (kPageSize - 1))};
}

}  // namespace svmsim

template <>
struct std::hash<svmsim::Vpn> {
  std::size_t operator()(svmsim::Vpn v) const noexcept { return std::hash<std::uint32_t>{}(v.value); }
};
template <>
struct std::hash<svmsim::Ppn> {
  std::size_t operator()(svmsim::Ppn v) const noexcept { return std::hash<std::uint32_t>{}(v.value); }
};

namespace svmsim {

/// Radix page table; only the leaf mapping is materialized, a walk is timed as
/// one DRAM word per level.
class PageTable {
 public:
  explicit PageTable(std::uint32_t levels = 3) : levels_(levels) {}

  void map(Vpn vpn, Ppn ppn) { entries_[vpn] = ppn; }
  std::optional<Ppn> lookup(Vpn vpn) const {
    auto it = entries_.find(vpn);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }
  std::uint32_t levels() const { return levels_; }
  std::size_t mapped_pages() const { return entries_.size(); }

 private:
  std::uint32_t levels_;
  std::unordered_map<Vpn, Ppn> entries_;
};

/// Single pipelined DRAM port: every access completes `latency` cycles after
/// issue at the earliest, and completions are spaced by the per-64-byte gap.
class DramPort {
 public:
  DramPort(Cycles latency, Cycles gap_per_64b) : latency_(latency), gap_(gap_per_64b) {}

  /// Books an access issued at `issue`; returns its completion time.
  SimTime reserve(SimTime issue, std::uint32_t bytes) {
    const std::uint64_t chunks = std::max<std::uint64_t>(1, (bytes + 63) / 64);
    const SimTime done = std::max(issue + latency_, last_ + gap_ * chunks);
    last_ = done;
    ++accesses_;
    bytes_ += bytes;
    return done;
  }

  std::uint64_t accesses() const { return accesses_; }
  std::uint64_t bytes() const { return bytes_; }

 private:
  Cycles latency_;
  Cycles gap_;
  SimTime last_ = 0;
  std::uint64_t accesses_ = 0;
  std::uint64_t bytes_ = 0;
};

/// Timed page-table walk: `levels` dependent DRAM word reads.
inline Task<std::optional<Ppn>> walk_page_table(Engine& e, DramPort& dram, const PageTable& pt, Vpn vpn) {
  for (std::uint32_t level = 0; level < pt.levels(); ++level) {
    const SimTime done = dram.reserve(e.now(), 8);
    co_await e.sleep(done - e.now());
  }
  co_return pt.lookup(vpn);
}

/// Byte-addressable physical memory, materialized page by page.
class PhysicalMemory {
 public:
  using Frame = std::array<std::uint8_t, kPageSize>;

  std::uint8_t* frame(Ppn ppn) {
    auto& f = frames_[ppn];
    if (!f) f = std::make_unique<Frame>(Frame{});
    return f->data();
  }
  const std::uint8_t* frame_if_present(Ppn ppn) const {
    auto it = frames_.find(ppn);
    return it == frames_.end() ? nullptr : it->second->data();
  }

 private:
  std::unordered_map<Ppn, std::unique_ptr<Frame>> frames_;
};

/// Host side of the shared address space: a bump allocator over virtual
/// memory whose pages are backed by shuffled physical frames. Everything here
/// is untimed; it runs before the offload.
class AddressSpace {
 public:
  static constexpr std::uint32_t kVirtualBase = 0x1000'0000;

  AddressSpace(const MemConfig& cfg, std::uint64_t seed)
      : pt_(cfg.page_table_levels), frame_limit_(cfg.dram_bytes / kPageSize), rng_(seed) {}

  /// Allocates `bytes` (page-granular mapping) at an `align`-aligned address.
  VirtAddr allocate(std::uint64_t bytes, std::uint32_t align = kPageSize) {
    if (bytes == 0) return VirtAddr{next_};
    std::uint64_t start = (std::uint64_t{next_} + align - 1) / align * align;
    const std::uint64_t end = start + bytes;
    if (end > 0xF000'0000ULL) throw ConfigError("virtual address space exhausted");
    const std::uint32_t first = static_cast<std::uint32_t>(start >> kPageShift);
    const std::uint32_t last = static_cast<std::uint32_t>((end - 1) >> kPageShift);
    for (std::uint32_t v = first; v <= last; ++v)
      if (!pt_.lookup(Vpn{v})) map_fresh(Vpn{v});
    next_ = static_cast<std::uint32_t>(end);
    return VirtAddr{static_cast<std::uint32_t>(start)};
  }

  std::optional<PhysAddr> translate(VirtAddr va) const {
    auto ppn = pt_.lookup(va.page());
    if (!ppn) return std::nullopt;
    return compose(*ppn, va.offset());
  }

  void write(VirtAddr va, std::span<const std::uint8_t> bytes) {
    for (std::size_t done = 0; done < bytes.size();) {
      const VirtAddr at{static_cast<std::uint32_t>(va.value + done)};
      const std::size_t n = std::min<std::size_t>(bytes.size() - done, kPageSize - at.offset());
      std::memcpy(host_frame(at) + at.offset(), bytes.data() + done, n);
      done += n;
    }
  }
  void read(VirtAddr va, std::span<std::uint8_t> out) {
    for (std::size_t done = 0; done < out.size();) {
      const VirtAddr at{static_cast<std::uint32_t>(va.value + done)};
      const std::size_t n = std::min<std::size_t>(out.size() - done, kPageSize - at.offset());
      std::memcpy(out.data() + done, host_frame(at) + at.offset(), n);
      done += n;
    }
  }
  void write32(VirtAddr va, std::uint32_t v) {
    std::uint8_t b[4];
    std::memcpy(b, &v, 4);
    write(va, b);
  }
  std::uint32_t read32(VirtAddr va) {
    std::uint8_t b[4];
    read(va, b);
    std::uint32_t v;
    std::memcpy(&v, b, 4);
    return v;
  }

  PageTable& page_table() { return pt_; }
  const PageTable& page_table() const { return pt_; }
  PhysicalMemory& memory() { return mem_; }
  std::size_t mapped_pages() const { return pt_.mapped_pages(); }
  std::uint32_t break_address() const { return next_; }

 private:
  std::uint8_t* host_frame(VirtAddr va) {
    auto ppn = pt_.lookup(va.page());
    if (!ppn) throw SimFault("host access to unmapped address");
    return mem_.frame(*ppn);
  }

  void map_fresh(Vpn vpn) {
    if (next_frame_ >= frame_limit_) throw ConfigError("workload exceeds configured DRAM size");
    // Frames are handed out in a scrambled order so translation is never the
    // identity; the scramble is an odd-stride walk over a power-of-two pool.
    const std::uint64_t pool = std::bit_ceil(frame_limit_);
    std::uint64_t f;
    do {
      f = (next_raw_++ * stride_ + offset_) & (pool - 1);
    } while (f >= frame_limit_);
    ++next_frame_;
    pt_.map(vpn, Ppn{static_cast<std::uint32_t>(f)});
  }

  PageTable pt_;
  PhysicalMemory mem_;
  std::uint64_t frame_limit_;
  std::mt19937_64 rng_;
  std::uint64_t stride_ = (rng_() | 1);
  std::uint64_t offset_ = rng_();
  std::uint64_t next_raw_ = 0;
  std::uint64_t next_frame_ = 0;
  std::uint32_t next_ = kVirtualBase;
};

/// Cluster-internal L1 scratchpad (data only; access timing is charged by the
/// caller).
class Scratchpad {
 public:
  explicit Scratchpad(std::uint32_t bytes) : data_(bytes, 0) {}

  std::uint8_t* at(std::uint32_t offset, std::uint32_t len) {
    if (std::uint64_t{offset} + len > data_.size()) throw SimFault("L1 access out of range");
    return data_.data() + offset;
  }
  std::uint32_t read32(std::uint32_t offset) {
    std::uint32_t v;
    std::memcpy(&v, at(offset, 4), 4);
    return v;
  }
  void write32(std::uint32_t offset, std::uint32_t v) { std::memcpy(at(offset, 4), &v, 4); }
  std::uint32_t size() const { return static_cast<std::uint32_t>(data_.size()); }

 private:
  std::vector<std::uint8_t> data_;
};

}  // namespace svmsim
