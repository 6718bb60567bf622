#pragma once

// Two-level software-managed TLB of the hybrid IOMMU and its datapath.
//
// Replacement is driven by one counter per set: the writer fetch-and-
// increments the counter of the vpn's set and replaces the entry at the
// returned index (modulo ways). The L1 is a single fully associative set that
// is filled only by promotion from L2 hits. The hierarchy is inclusive: an
// L2 replacement drops the L1 copy of the evicted page.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "svmsim/config.hpp"
#include "svmsim/memory.hpp"

namespace svmsim {

struct TlbEntry {
  Vpn vpn;
  Ppn ppn;
  bool valid = false;
  std::uint32_t locks = 0;  // SoA-mode transfer locks (counted)
  bool updating = false;    // between the vpn-word and the ppn-word write
  bool locked() const { return locks != 0; }
};

class TlbLevel {
 public:
  TlbLevel(std::uint32_t sets, std::uint32_t ways)
      : sets_(sets), ways_(ways), entries_(std::size_t{sets} * ways), counters_(sets, 0) {}

  std::uint32_t sets() const { return sets_; }
  std::uint32_t ways() const { return ways_; }
  std::uint32_t set_of(Vpn vpn) const { return vpn.value % sets_; }
  std::uint32_t slot(std::uint32_t set, std::uint32_t way) const { return set * ways_ + way; }

  std::optional<std::uint32_t> find(Vpn vpn) const {
    const std::uint32_t set = set_of(vpn);
    for (std::uint32_t w = 0; w < ways_; ++w) {
      const auto& e = entries_[slot(set, w)];
      if (e.valid && e.vpn == vpn) return slot(set, w);
    }
    return std::nullopt;
  }

  /// Fetch-and-increment of the set's counter until an unlocked entry comes
  /// up. Returns nullopt when every way of the set is locked or mid-update.
  std::optional<std::uint32_t> next_victim(std::uint32_t set) {
    for (std::uint32_t tries = 0; tries < ways_; ++tries) {
      const std::uint32_t way = counters_[set];
      counters_[set] = (counters_[set] + 1) % ways_;
      ++increments_;
      const auto& e = entries_[slot(set, way)];
      if (!e.locked() && !e.updating) return slot(set, way);
    }
    return std::nullopt;
  }

  TlbEntry& entry(std::uint32_t s) { return entries_.at(s); }
  const TlbEntry& entry(std::uint32_t s) const { return entries_.at(s); }
  std::uint32_t counter(std::uint32_t set) const { return counters_.at(set); }
  std::uint64_t counter_increments() const { return increments_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::uint32_t sets_;
  std::uint32_t ways_;
  std::vector<TlbEntry> entries_;
  std::vector<std::uint32_t> counters_;
  std::uint64_t increments_ = 0;
};

enum class TlbOutcome { hit, miss };

struct TlbLookup {
  TlbOutcome outcome = TlbOutcome::miss;
  int level = 0;  // 1 or 2 on hit
  Ppn ppn;
  Cycles latency = 0;
  /// L1 slot replaced by the promotion of an L2 hit (if any).
  std::optional<std::uint32_t> promoted_to;
};

class Tlb {
 public:
  Tlb(const TlbConfig& cfg, Cycles l1_latency, Cycles l2_latency)
      : l1_(1, cfg.l1_entries), l2_(cfg.l2_sets, cfg.l2_ways), l1_latency_(l1_latency),
        l2_latency_(l2_latency) {}

  /// Hardware lookup: L1 first, then L2 with promotion (copy) into L1.
  TlbLookup lookup(Vpn vpn) {
    TlbLookup r;
    if (auto s = l1_.find(vpn)) {
      r.outcome = TlbOutcome::hit;
      r.level = 1;
      r.ppn = l1_.entry(*s).ppn;
      r.latency = l1_latency_;
      return r;
    }
    if (auto s = l2_.find(vpn)) {
      r.outcome = TlbOutcome::hit;
      r.level = 2;
      r.ppn = l2_.entry(*s).ppn;
      r.latency = l2_latency_;
      if (auto v = l1_.next_victim(0)) {
        auto& e = l1_.entry(*v);
        e.vpn = vpn;
        e.ppn = r.ppn;
        e.valid = true;
        r.promoted_to = v;
      }
      return r;
    }
    r.latency = l1_latency_ + l2_latency_;
    return r;
  }

  /// True when the page would hit without side effects (no promotion).
  bool present(Vpn vpn) const { return l1_.find(vpn) || l2_.find(vpn); }

  /// First half of a software insert: picks the L2 victim and writes the vpn
  /// word. The entry is invalid until finish_insert. Returns nullopt when the
  /// set has no replaceable entry.
  std::optional<std::uint32_t> begin_insert(Vpn vpn) {
    if (auto existing = l2_.find(vpn)) return existing;
    auto victim = l2_.next_victim(l2_.set_of(vpn));
    if (!victim) return std::nullopt;
    auto& e = l2_.entry(*victim);
    if (e.valid) drop_l1_copy(e.vpn);
    e.valid = false;
    e.updating = true;
    e.vpn = vpn;
    return victim;
  }

  /// Second write: the ppn word. The entry becomes valid.
  void finish_insert(std::uint32_t slot, Ppn ppn) {
    auto& e = l2_.entry(slot);
    if (!e.updating) return;  // begin_insert found the page already present
    e.ppn = ppn;
    e.updating = false;
    e.valid = true;
  }

  /// Untimed insert (both writes back to back).
  std::optional<std::uint32_t> insert(Vpn vpn, Ppn ppn) {
    auto s = begin_insert(vpn);
    if (s) finish_insert(*s, ppn);
    return s;
  }

  bool lock(Vpn vpn) {
    auto s = l2_.find(vpn);
    if (!s) return false;
    ++l2_.entry(*s).locks;
    ++live_locks_;
    return true;
  }
  void unlock(Vpn vpn) {
    auto s = l2_.find(vpn);
    if (!s || l2_.entry(*s).locks == 0) throw SimFault("unlock of an entry that is not locked");
    --l2_.entry(*s).locks;
    --live_locks_;
  }
  std::uint64_t live_locks() const { return live_locks_; }

  /// Drops an unlocked page from both levels. Returns false if absent or locked.
  bool invalidate(Vpn vpn) {
    auto s = l2_.find(vpn);
    if (!s || l2_.entry(*s).locked()) return false;
    l2_.entry(*s).valid = false;
    drop_l1_copy(vpn);
    return true;
  }

  const TlbLevel& l1() const { return l1_; }
  const TlbLevel& l2() const { return l2_; }
  TlbLevel& l2() { return l2_; }

 private:
  void drop_l1_copy(Vpn vpn) {
    if (auto s = l1_.find(vpn)) l1_.entry(*s).valid = false;
  }

  TlbLevel l1_;
  TlbLevel l2_;
  Cycles l1_latency_;
  Cycles l2_latency_;
  std::uint64_t live_locks_ = 0;
};

enum class AccessKind { read, write };

struct Transaction {
  VirtAddr va;
  AccessKind kind = AccessKind::read;
  bool prefetch = false;
  std::uint32_t source = 0;
  std::uint32_t length = 4;
};

struct Translation {
  TlbOutcome outcome = TlbOutcome::miss;
  int level = 0;
  PhysAddr pa;
  /// Cycles from submission until the response leaves the IOMMU.
  Cycles latency = 0;
};

struct TransactionRecord {
  SimTime time;
  VirtAddr va;
  AccessKind kind;
  bool prefetch;
  TlbOutcome outcome;
  int level;
};

struct IommuStats {
  std::uint64_t lookups = 0;
  std::uint64_t l1_hits = 0;
  std::uint64_t l2_hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t prefetch_hits = 0;
  std::uint64_t prefetch_misses = 0;
};

/// The IOMMU datapath: accepts one transaction per cycle, answers from the
/// TLB, drops misses. In ideal mode every address translates in one cycle.
class Iommu {
 public:
  Iommu(const SimConfig& cfg, const PageTable& pt)
      : tlb_(cfg.tlb, cfg.latency.l1_access, cfg.latency.tlb_l2_lookup),
        ideal_(cfg.mode == Mode::ideal), pt_(pt) {}

  Translation translate(SimTime now, const Transaction& t) {
    if (t.va.offset() + t.length > kPageSize) throw SimFault("transaction crosses a page boundary");
    const SimTime start = std::max(now, next_free_);
    next_free_ = start + 1;
    const Cycles queueing = start - now;
    ++stats_.lookups;

    Translation out;
    if (ideal_) {
      auto ppn = pt_.lookup(t.va.page());
      if (!ppn) throw SimFault("ideal translation of an unmapped page");
      out.outcome = TlbOutcome::hit;
      out.level = 1;
      out.pa = compose(*ppn, t.va.offset());
      out.latency = queueing + 1;
      ++stats_.l1_hits;
    } else {
      const TlbLookup l = tlb_.lookup(t.va.page());
      out.outcome = l.outcome;
      out.level = l.level;
      out.latency = queueing + l.latency;
      if (l.outcome == TlbOutcome::hit) {
        out.pa = compose(l.ppn, t.va.offset());
        ++(l.level == 1 ? stats_.l1_hits : stats_.l2_hits);
      } else {
        ++stats_.misses;
      }
    }
    if (t.prefetch) ++(out.outcome == TlbOutcome::hit ? stats_.prefetch_hits : stats_.prefetch_misses);
    if (hook_) hook_(TransactionRecord{now, t.va, t.kind, t.prefetch, out.outcome, out.level});
    return out;
  }

  void set_trace_hook(std::function<void(const TransactionRecord&)> h) { hook_ = std::move(h); }
  bool ideal() const { return ideal_; }
  Tlb& tlb() { return tlb_; }
  const Tlb& tlb() const { return tlb_; }
  const IommuStats& stats() const { return stats_; }

 private:
  Tlb tlb_;
  bool ideal_;
  const PageTable& pt_;
  SimTime next_free_ = 0;
  IommuStats stats_;
  std::function<void(const TransactionRecord&)> hook_;
};

}  // namespace svmsim
