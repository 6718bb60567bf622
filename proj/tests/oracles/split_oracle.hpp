#pragma once

// Brute-force checker for burst splitting: marks every byte and checks the
// page and size limits of each burst independently of how it was cut.

#include <cstdint>
#include <string>
#include <vector>

#include "svmsim/retirement_buffer.hpp"

namespace oracle {

/// Empty string when the split of [va, va+len) is valid.
inline std::string check_split(std::uint32_t va, std::uint32_t len, std::uint32_t max_burst = 2048) {
  const auto bursts = svmsim::split(svmsim::VirtAddr{va}, 0, len, svmsim::Direction::in, max_burst);
  std::vector<std::uint8_t> seen(len, 0);
  std::uint64_t prev_end = va;
  for (const auto& b : bursts) {
    if (b.length == 0 || b.length > max_burst) return "burst size out of range";
    const std::uint64_t lo = b.va.value, hi = lo + b.length;
    if (lo != prev_end) return "bursts not ascending and contiguous";
    if (lo / 4096 != (hi - 1) / 4096) return "burst crosses a page";
    if (b.internal != lo - va) return "internal address does not follow";
    for (std::uint64_t a = lo; a < hi; ++a) {
      if (a < va || a >= std::uint64_t{va} + len) return "burst outside the command";
      if (seen[a - va]++) return "byte covered twice";
    }
    prev_end = hi;
  }
  for (auto s : seen)
    if (s != 1) return "byte not covered";
  return {};
}

struct SplitSweep {
  std::uint64_t cases = 0;
  std::string first_failure;
};

/// Lengths 1..8192 against offsets 0..4095 on a strided grid (every offset
/// is used with a rotating subset of lengths).
inline SplitSweep sweep_split(std::uint32_t len_stride = 7, std::uint32_t off_stride = 3) {
  SplitSweep out;
  for (std::uint32_t off = 0; off < 4096; off += off_stride)
    for (std::uint32_t len = 1 + off % len_stride; len <= 8192; len += len_stride * 16 + 1) {
      ++out.cases;
      const std::uint32_t va = 0x4000'0000u + off;
      if (auto f = check_split(va, len); !f.empty() && out.first_failure.empty())
        out.first_failure = f + " (va=" + std::to_string(va) + ", len=" + std::to_string(len) + ")";
    }
  return out;
}

}  // namespace oracle
