#include <gtest/gtest.h>

#include <vector>

#include "oracles/tlb_replay.hpp"
#include "svmsim/tlb.hpp"

namespace svmsim {
namespace {

Tlb make_tlb() { return Tlb(TlbConfig{}, 1, 6); }

TEST(Tlb, InsertThenHitInL2AndPromote) {
  auto tlb = make_tlb();
  tlb.insert(Vpn{5}, Ppn{9});
  auto r = tlb.lookup(Vpn{5});
  EXPECT_EQ(r.outcome, TlbOutcome::hit);
  EXPECT_EQ(r.level, 2);
  EXPECT_EQ(r.ppn, Ppn{9});
  EXPECT_EQ(r.latency, 6u);
  r = tlb.lookup(Vpn{5});
  EXPECT_EQ(r.level, 1);
  EXPECT_EQ(r.latency, 1u);
}

TEST(Tlb, MissCostsBothLevels) {
  auto tlb = make_tlb();
  const auto r = tlb.lookup(Vpn{77});
  EXPECT_EQ(r.outcome, TlbOutcome::miss);
  EXPECT_EQ(r.latency, 7u);
}

TEST(Tlb, CounterWalksTheWaysOfOneSet) {
  auto tlb = make_tlb();
  // vpns 3, 35, 67, ... share set 3.
  std::vector<std::uint32_t> slots;
  for (std::uint32_t i = 0; i < 9; ++i) slots.push_back(*tlb.insert(Vpn{3 + 32 * i}, Ppn{i}));
  for (std::uint32_t i = 0; i < 8; ++i) EXPECT_EQ(slots[i], 3 * 8 + i);
  EXPECT_EQ(slots[8], 3u * 8);
  EXPECT_FALSE(tlb.present(Vpn{3}));
  EXPECT_TRUE(tlb.present(Vpn{3 + 32 * 8}));
}

TEST(Tlb, LockedEntrySurvivesReplacement) {
  auto tlb = make_tlb();
  tlb.insert(Vpn{3}, Ppn{1});
  ASSERT_TRUE(tlb.lock(Vpn{3}));
  for (std::uint32_t i = 1; i <= 16; ++i) tlb.insert(Vpn{3 + 32 * i}, Ppn{i});
  EXPECT_TRUE(tlb.present(Vpn{3}));
  tlb.unlock(Vpn{3});
  EXPECT_EQ(tlb.live_locks(), 0u);
}

TEST(Tlb, FullyLockedSetRefusesInsert) {
  auto tlb = make_tlb();
  for (std::uint32_t i = 0; i < 8; ++i) {
    tlb.insert(Vpn{1 + 32 * i}, Ppn{i});
    tlb.lock(Vpn{1 + 32 * i});
  }
  EXPECT_FALSE(tlb.begin_insert(Vpn{1 + 32 * 8}).has_value());
}

TEST(Tlb, UnlockWithoutLockFaults) {
  auto tlb = make_tlb();
  tlb.insert(Vpn{2}, Ppn{2});
  EXPECT_THROW(tlb.unlock(Vpn{2}), SimFault);
}

TEST(Tlb, EntryIsInvisibleBetweenTheTwoWrites) {
  auto tlb = make_tlb();
  auto s = tlb.begin_insert(Vpn{4});
  ASSERT_TRUE(s);
  EXPECT_FALSE(tlb.present(Vpn{4}));
  tlb.finish_insert(*s, Ppn{8});
  EXPECT_TRUE(tlb.present(Vpn{4}));
}

TEST(Tlb, L2EvictionDropsTheL1Copy) {
  auto tlb = make_tlb();
  tlb.insert(Vpn{6}, Ppn{1});
  tlb.lookup(Vpn{6});  // promote
  for (std::uint32_t i = 1; i <= 8; ++i) tlb.insert(Vpn{6 + 32 * i}, Ppn{i});
  EXPECT_EQ(tlb.lookup(Vpn{6}).outcome, TlbOutcome::miss);
}

TEST(Tlb, ReplayMatchesReferenceModel) {
  EXPECT_EQ(oracle::tlb_replay_divergence(1, 100000), std::nullopt);
  EXPECT_EQ(oracle::tlb_replay_divergence(2, 100000), std::nullopt);
}

TEST(Iommu, IdealModeAlwaysHitsInOneCycle) {
  SimConfig cfg;
  cfg.mode = Mode::ideal;
  PageTable pt;
  pt.map(Vpn{0x10000}, Ppn{42});
  Iommu io(cfg, pt);
  const auto t = io.translate(0, Transaction{VirtAddr{0x10000010}, AccessKind::read, false, 0, 4});
  EXPECT_EQ(t.outcome, TlbOutcome::hit);
  EXPECT_EQ(t.latency, 1u);
  EXPECT_EQ(t.pa.value, (42ull << 12) | 0x10);
}

TEST(Iommu, OneTransactionPerCycle) {
  SimConfig cfg;
  PageTable pt;
  Iommu io(cfg, pt);
  io.tlb().insert(Vpn{1}, Ppn{2});
  const Transaction t{VirtAddr{0x1000}, AccessKind::read, false, 0, 8};
  EXPECT_EQ(io.translate(10, t).latency, 6u);
  EXPECT_EQ(io.translate(10, t).latency, 2u);  // queued one cycle, then L1 hit
}

TEST(Iommu, PageCrossingTransactionFaults) {
  SimConfig cfg;
  PageTable pt;
  Iommu io(cfg, pt);
  EXPECT_THROW(io.translate(0, Transaction{VirtAddr{0xFFC}, AccessKind::read, false, 0, 8}), SimFault);
}

TEST(Iommu, MissIsReportedAndCounted) {
  SimConfig cfg;
  PageTable pt;
  Iommu io(cfg, pt);
  std::vector<TransactionRecord> seen;
  io.set_trace_hook([&](const TransactionRecord& r) { seen.push_back(r); });
  const auto t = io.translate(0, Transaction{VirtAddr{0x5000}, AccessKind::write, true, 0, 4});
  EXPECT_EQ(t.outcome, TlbOutcome::miss);
  EXPECT_EQ(io.stats().misses, 1u);
  EXPECT_EQ(io.stats().prefetch_misses, 1u);
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_TRUE(seen[0].prefetch);
}

}  // namespace
}  // namespace svmsim
