#pragma once

// Burst splitting and the retirement buffer of the DMA engine.
//
// The retirement buffer is a linked list threaded through a small register
// file. Entries are appended in issue order and unlinked when their burst
// retires, so the list from head always holds the outstanding bursts in the
// order they were first requested. Reissued bursts keep their position.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "svmsim/config.hpp"
#include "svmsim/engine.hpp"
#include "svmsim/memory.hpp"

namespace svmsim {

enum class Direction : std::uint8_t { in, out };  // in: external -> L1

struct Burst {
  VirtAddr va;
  std::uint32_t internal = 0;  // L1 byte offset
  std::uint32_t length = 0;
  Direction dir = Direction::in;
  std::uint8_t axi_id = 0;
  std::uint32_t transfer = 0;
  std::uint32_t index = 0;  // position within its transfer
};

/// Cuts [va, va+len) at every `max_burst`-aligned boundary. With max_burst
/// dividing the page size this also cuts at every page boundary.
inline std::vector<Burst> split(VirtAddr va, std::uint32_t internal, std::uint32_t length, Direction dir,
                                std::uint32_t max_burst = 2048) {
  if (length == 0) throw std::invalid_argument("zero-length DMA command");
  if (max_burst == 0 || (max_burst & (max_burst - 1)) != 0 || max_burst > kPageSize)
    throw std::invalid_argument("max_burst must be a power of two no larger than a page");
  std::vector<Burst> out;
  std::uint64_t a = va.value;
  const std::uint64_t end = a + length;
  while (a < end) {
    const std::uint64_t boundary = (a / max_burst + 1) * max_burst;
    const std::uint64_t stop = std::min(boundary, end);
    Burst b;
    b.va = VirtAddr{static_cast<std::uint32_t>(a)};
    b.internal = internal + static_cast<std::uint32_t>(a - va.value);
    b.length = static_cast<std::uint32_t>(stop - a);
    b.dir = dir;
    b.index = static_cast<std::uint32_t>(out.size());
    out.push_back(b);
    a = stop;
  }
  return out;
}

enum class RbState : std::uint8_t { free, in_flight, failed, peeked, reissuable };

inline const char* to_string(RbState s) {
  switch (s) {
    case RbState::free: return "free";
    case RbState::in_flight: return "in-flight";
    case RbState::failed: return "failed";
    case RbState::peeked: return "peeked";
    case RbState::reissuable: return "reissuable";
  }
  return "?";
}

struct RbEntry {
  Burst burst;
  RbState state = RbState::free;
  int next = -1;
};

class RetirementBuffer {
 public:
  explicit RetirementBuffer(std::uint32_t capacity) : entries_(capacity) {}

  std::uint32_t capacity() const { return static_cast<std::uint32_t>(entries_.size()); }
  std::uint32_t in_flight() const { return in_flight_; }
  /// Entries in failed, peeked or reissuable state.
  std::uint32_t pending_retry() const { return pending_retry_; }
  std::uint32_t live() const { return live_; }
  bool full() const { return live_ == capacity(); }
  int head() const { return head_; }
  int tail() const { return tail_; }
  const RbEntry& entry(int i) const { return entries_.at(static_cast<std::size_t>(i)); }

  int add(const Burst& b) {
    int idx = -1;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].state == RbState::free) {
        idx = static_cast<int>(i);
        break;
      }
    if (idx < 0) throw SimFault("retirement buffer overflow");
    auto& e = entries_[static_cast<std::size_t>(idx)];
    e.burst = b;
    e.state = RbState::in_flight;
    e.next = -1;
    if (tail_ >= 0) entries_[static_cast<std::size_t>(tail_)].next = idx;
    else head_ = idx;
    tail_ = idx;
    ++live_;
    ++in_flight_;
    return idx;
  }

  /// Resolves the oldest in-flight burst carrying `axi_id`. Returns its index.
  int complete(std::uint8_t axi_id, bool ok) {
    int prev = -1;
    for (int i = head_; i >= 0; prev = i, i = entries_[static_cast<std::size_t>(i)].next) {
      auto& e = entries_[static_cast<std::size_t>(i)];
      if (e.state != RbState::in_flight || e.burst.axi_id != axi_id) continue;
      --in_flight_;
      if (ok) {
        unlink(prev, i);
      } else {
        e.state = RbState::failed;
        ++pending_retry_;
      }
      return i;
    }
    throw SimFault("DMA response without a matching in-flight burst");
  }

  /// Failed-address register read: the address of the first failed burst in
  /// request order (0 if none). All failed bursts on that page become peeked.
  std::uint32_t read_failed() {
    for (int i = head_; i >= 0; i = entries_[static_cast<std::size_t>(i)].next) {
      const auto& e = entries_[static_cast<std::size_t>(i)];
      if (e.state != RbState::failed) continue;
      const VirtAddr va = e.burst.va;
      for (auto& o : entries_)
        if (o.state == RbState::failed && o.burst.va.page() == va.page()) o.state = RbState::peeked;
      return va.value;
    }
    return 0;
  }

  /// Handled-address register write. Returns the number of entries released.
  std::uint32_t write_handled(VirtAddr va) {
    std::uint32_t n = 0;
    for (auto& o : entries_)
      if ((o.state == RbState::failed || o.state == RbState::peeked) && o.burst.va.page() == va.page()) {
        o.state = RbState::reissuable;
        ++n;
      }
    return n;
  }

  /// The oldest entry awaiting retry, if it is already reissuable. Younger
  /// reissuable entries wait behind an older unresolved one.
  std::optional<int> next_reissuable() const {
    std::optional<int> pick;
    for (int i = head_; i >= 0; i = entries_[static_cast<std::size_t>(i)].next) {
      const auto s = entries_[static_cast<std::size_t>(i)].state;
      if (s == RbState::in_flight) continue;
      if (s != RbState::reissuable) {
        if (!reverse_reissue_) return std::nullopt;
        continue;
      }
      pick = i;
      if (!reverse_reissue_) return pick;
    }
    return pick;
  }

  void reissue(int i) {
    auto& e = entries_.at(static_cast<std::size_t>(i));
    if (e.state != RbState::reissuable) throw SimFault("reissue of an entry that is not reissuable");
    e.state = RbState::in_flight;
    --pending_retry_;
    ++in_flight_;
  }

  /// Recounts by traversal and compares with the maintained counters.
  bool audit() const {
    std::uint32_t live = 0, inflight = 0, retry = 0;
    int last = -1;
    for (int i = head_; i >= 0; last = i, i = entries_[static_cast<std::size_t>(i)].next) {
      const auto s = entries_[static_cast<std::size_t>(i)].state;
      if (s == RbState::free || live > capacity()) return false;
      ++live;
      if (s == RbState::in_flight) ++inflight;
      else ++retry;
    }
    std::uint32_t used = 0;
    for (const auto& e : entries_) used += e.state != RbState::free;
    return last == tail_ && live == live_ && used == live_ && inflight == in_flight_ && retry == pending_retry_;
  }

  /// Test-only fault injection: retries the youngest reissuable entry first.
  void inject_reverse_reissue(bool on) { reverse_reissue_ = on; }

 private:
  void unlink(int prev, int i) {
    auto& e = entries_[static_cast<std::size_t>(i)];
    if (prev >= 0) entries_[static_cast<std::size_t>(prev)].next = e.next;
    else head_ = e.next;
    if (tail_ == i) tail_ = prev;
    e.state = RbState::free;
    e.next = -1;
    --live_;
  }

  std::vector<RbEntry> entries_;
  int head_ = -1;
  int tail_ = -1;
  std::uint32_t live_ = 0;
  std::uint32_t in_flight_ = 0;
  std::uint32_t pending_retry_ = 0;
  bool reverse_reissue_ = false;
};

/// Storage cost of the retirement buffer against the data it lets the engine
/// keep in flight.
struct RbFootprint {
  static constexpr std::uint32_t kExternalAddressBits = 32;
  static constexpr std::uint32_t kInternalAddressBits = 16;
  static constexpr std::uint32_t kAxiIdBits = 3;
  static constexpr std::uint32_t kLengthBits = 8;
  static constexpr std::uint32_t kStateBits = 3;
  static constexpr std::uint32_t kEntryBits =
      kExternalAddressBits + kInternalAddressBits + kAxiIdBits + kLengthBits + kStateBits;

  std::uint32_t entries = 0;
  std::uint32_t metadata_bits = 0;
  std::uint32_t metadata_bytes = 0;  // one 8-byte register per entry
  std::uint64_t data_bytes = 0;
  std::uint64_t factor = 0;
};

inline RbFootprint rb_footprint(const DmaConfig& cfg) {
  RbFootprint f;
  f.entries = cfg.max_in_flight;
  f.metadata_bits = f.entries * RbFootprint::kEntryBits;
  f.metadata_bytes = f.entries * ((RbFootprint::kEntryBits + 7) / 8);
  f.data_bytes = std::uint64_t{f.entries} * cfg.max_burst;
  f.factor = f.data_bytes / f.metadata_bytes;
  return f;
}

}  // namespace svmsim
