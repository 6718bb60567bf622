#pragma once

// Standalone reference of the two-level TLB replacement: plain tag arrays,
// one round-robin counter per set, L1 filled by promotion, inclusive L2.
// Shares no code with the simulator.

#include <cstdint>
#include <optional>
#include <vector>

namespace oracle {

struct TlbDecision {
  bool hit = false;
  int level = 0;
  int l1_slot = -1;  // promotion target on an L2 hit
  int l2_slot = -1;  // insert target on a miss
  bool operator==(const TlbDecision&) const = default;
};

class ReferenceTlb {
 public:
  ReferenceTlb(unsigned l1_entries, unsigned sets, unsigned ways)
      : l1_(l1_entries), l2_(sets * ways), sets_(sets), ways_(ways), ctr_(sets, 0) {}

  /// One access; a miss is followed by an immediate insert of the page.
  TlbDecision access(std::uint32_t vpn) {
    TlbDecision d;
    for (unsigned i = 0; i < l1_.size(); ++i)
      if (l1_[i] == vpn) {
        d.hit = true;
        d.level = 1;
        return d;
      }
    const unsigned set = vpn % sets_;
    for (unsigned w = 0; w < ways_; ++w)
      if (l2_[set * ways_ + w] == vpn) {
        d.hit = true;
        d.level = 2;
        d.l1_slot = static_cast<int>(l1_ctr_);
        l1_[l1_ctr_] = vpn;
        l1_ctr_ = (l1_ctr_ + 1) % static_cast<unsigned>(l1_.size());
        return d;
      }
    const unsigned slot = set * ways_ + ctr_[set];
    ctr_[set] = (ctr_[set] + 1) % ways_;
    if (l2_[slot])
      for (auto& t : l1_)
        if (t == l2_[slot]) t.reset();
    l2_[slot] = vpn;
    d.l2_slot = static_cast<int>(slot);
    return d;
  }

 private:
  std::vector<std::optional<std::uint32_t>> l1_;
  std::vector<std::optional<std::uint32_t>> l2_;
  unsigned sets_;
  unsigned ways_;
  std::vector<unsigned> ctr_;
  unsigned l1_ctr_ = 0;
};

}  // namespace oracle
