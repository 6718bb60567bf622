#include <gtest/gtest.h>

#include <set>
#include <vector>

#include "oracles/dma_integrity.hpp"
#include "oracles/dma_rig.hpp"
#include "oracles/reference_rb.hpp"
#include "oracles/split_oracle.hpp"
#include "svmsim/dma.hpp"

namespace svmsim {
namespace {

std::vector<std::uint32_t> lengths(const std::vector<Burst>& bs) {
  std::vector<std::uint32_t> out;
  for (const auto& b : bs) out.push_back(b.length);
  return out;
}

TEST(Split, CutsAtPageAndBurstBoundaries) {
  const auto bs = split(VirtAddr{0x1F80}, 0, 5000, Direction::in);
  EXPECT_EQ(lengths(bs), (std::vector<std::uint32_t>{128, 2048, 2048, 776}));
  EXPECT_EQ(bs[1].va.value, 0x2000u);
  EXPECT_EQ(bs[3].internal, 128u + 4096u);
}

TEST(Split, LargestUnalignedCommandTouchesSeventeenPages) {
  const auto bs = split(VirtAddr{0x0FFF}, 0, 64 * 1024, Direction::in);
  std::set<std::uint32_t> pages;
  for (const auto& b : bs) pages.insert(b.va.page().value);
  EXPECT_EQ(pages.size(), 17u);
}

TEST(Split, SmallAlignedCommandIsOneBurst) {
  EXPECT_EQ(lengths(split(VirtAddr{0x3000}, 0, 64, Direction::out)), (std::vector<std::uint32_t>{64}));
}

TEST(Split, ZeroLengthIsRejected) { EXPECT_THROW(split(VirtAddr{0}, 0, 0, Direction::in), std::invalid_argument); }

TEST(Split, GridAgainstBruteForceOracle) {
  const auto sweep = oracle::sweep_split();
  EXPECT_GE(sweep.cases, 10000u);
  EXPECT_EQ(sweep.first_failure, "");
  EXPECT_EQ(oracle::check_split(0x7FFF, 8192, 512), "");
}

Burst burst(std::uint32_t va, std::uint8_t id, std::uint32_t tag) {
  Burst b;
  b.va = VirtAddr{va};
  b.axi_id = id;
  b.transfer = tag;
  return b;
}

TEST(RetirementBuffer, FirstAddBecomesHeadAndTail) {
  RetirementBuffer rb(8);
  const int i = rb.add(burst(0x1000, 0, 0));
  EXPECT_EQ(rb.head(), i);
  EXPECT_EQ(rb.tail(), i);
}

TEST(RetirementBuffer, EightAddsCloseTheGate) {
  RetirementBuffer rb(8);
  for (std::uint32_t i = 0; i < 8; ++i) rb.add(burst(0x1000 * i, 0, i));
  EXPECT_TRUE(rb.full());
  EXPECT_THROW(rb.add(burst(0, 0, 9)), SimFault);
}

TEST(RetirementBuffer, SameIdCompletesOldestFirst) {
  RetirementBuffer rb(8);
  const int a = rb.add(burst(0x1000, 2, 0));
  const int b = rb.add(burst(0x2000, 2, 1));
  EXPECT_EQ(rb.complete(2, true), a);
  EXPECT_EQ(rb.head(), b);
}

TEST(RetirementBuffer, FailureIsCounted) {
  RetirementBuffer rb(8);
  rb.add(burst(0x1000, 1, 0));
  rb.complete(1, false);
  EXPECT_EQ(rb.pending_retry(), 1u);
  EXPECT_EQ(rb.in_flight(), 0u);
  EXPECT_THROW(rb.complete(1, true), SimFault);
}

TEST(RetirementBuffer, FailedRegisterProtocol) {
  RetirementBuffer rb(8);
  EXPECT_EQ(rb.read_failed(), 0u);
  for (std::uint32_t i = 0; i < 3; ++i) rb.add(burst(0x5000 + 0x100 * i, static_cast<std::uint8_t>(i), i));
  rb.add(burst(0x9040, 3, 3));
  for (std::uint8_t id = 0; id < 4; ++id) rb.complete(id, false);
  EXPECT_EQ(rb.read_failed(), 0x5000u);
  int peeked = 0;
  for (int i = rb.head(); i >= 0; i = rb.entry(i).next) peeked += rb.entry(i).state == RbState::peeked;
  EXPECT_EQ(peeked, 3);
  EXPECT_EQ(rb.read_failed(), 0x9040u);
  EXPECT_EQ(rb.write_handled(VirtAddr{0x5FFF}), 3u);
  EXPECT_EQ(rb.write_handled(VirtAddr{0x7000}), 0u);
  EXPECT_EQ(rb.next_reissuable(), rb.head());
}

TEST(RetirementBuffer, HandledWriteWithoutReadReleasesFailedEntries) {
  RetirementBuffer rb(8);
  rb.add(burst(0x9000, 0, 0));
  rb.complete(0, false);
  EXPECT_EQ(rb.write_handled(VirtAddr{0x9000}), 1u);
  EXPECT_EQ(rb.entry(rb.head()).state, RbState::reissuable);
}

TEST(RetirementBuffer, YoungerReissuableWaitsForOlderEntry) {
  RetirementBuffer rb(8);
  rb.add(burst(0x1000, 0, 0));
  rb.add(burst(0x2000, 1, 1));
  rb.complete(0, false);
  rb.complete(1, false);
  rb.write_handled(VirtAddr{0x2000});
  EXPECT_FALSE(rb.next_reissuable().has_value());
  rb.write_handled(VirtAddr{0x1000});
  EXPECT_EQ(rb.entry(*rb.next_reissuable()).burst.transfer, 0u);
}

TEST(RetirementBuffer, DifferentialFuzz) {
  const auto r = oracle::fuzz_retirement_buffer(11, 2000, 60);
  EXPECT_EQ(r.failure, "");
  EXPECT_GT(r.reissues, 1000u);
  EXPECT_EQ(oracle::fuzz_retirement_buffer(12, 200, 200, 16).failure, "");
}

TEST(RetirementBuffer, FuzzCatchesReversedReissueOrder) {
  const auto r = oracle::fuzz_retirement_buffer(11, 2000, 60, 8, true);
  EXPECT_NE(r.failure.find("order preservation"), std::string::npos) << r.failure;
}

TEST(RetirementBuffer, MetadataFootprint) {
  DmaConfig cfg;
  auto f = rb_footprint(cfg);
  EXPECT_EQ(f.metadata_bits, 496u);
  EXPECT_EQ(f.metadata_bytes, 64u);
  EXPECT_EQ(f.data_bytes, 16384u);
  EXPECT_EQ(f.factor, 256u);
  cfg.max_in_flight = 16;
  f = rb_footprint(cfg);
  EXPECT_EQ(f.metadata_bytes, 128u);
  EXPECT_EQ(f.data_bytes, 32768u);
  EXPECT_EQ(f.factor, 256u);
}

Task<void> one_transfer(oracle::DmaRig& rig, DmaCommand cmd, SimTime& done_at) {
  const auto id = co_await rig.dma.submit(cmd);
  co_await rig.dma.wait(id);
  done_at = rig.e.now();
}

TEST(DmaEngine, MappedTransferMovesData) {
  oracle::DmaRig rig(SimConfig{});
  const VirtAddr va = rig.as.allocate(8192);
  std::vector<std::uint8_t> src(6000);
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = static_cast<std::uint8_t>(i * 13 + 1);
  rig.as.write(VirtAddr{va.value + 100}, src);
  rig.premap(va, 8192);
  rig.start();
  SimTime done = 0;
  rig.e.spawn("pe", ProcessKind::worker, one_transfer(rig, DmaCommand{VirtAddr{va.value + 100}, 64, 6000}, done));
  rig.e.run_until_done(1'000'000);
  EXPECT_TRUE(std::equal(src.begin(), src.end(), rig.l1.at(64, 6000)));
  EXPECT_EQ(rig.dma.stats().bursts_failed, 0u);
  // 6000 B at 8 B/cycle is the floor.
  EXPECT_GE(done, 750u);
  EXPECT_LT(done, 1100u);
}

TEST(DmaEngine, FailedBurstsReissueInRequestOrder) {
  SimConfig cfg;
  cfg.dma.max_burst = 1024;
  oracle::DmaRig rig(cfg);
  const VirtAddr va = rig.as.allocate(4 * kPageSize);
  rig.premap(va, kPageSize);  // first page mapped, second not
  std::vector<std::pair<std::uint32_t, bool>> reissues;
  rig.dma.set_burst_hook([&](const BurstEvent& ev) {
    if (ev.reissue && !ev.response) reissues.emplace_back(ev.index, true);
  });
  rig.start();
  SimTime done = 0;
  // Bursts 0..3 on page 0, 4..7 on page 1.
  rig.e.spawn("pe", ProcessKind::worker, one_transfer(rig, DmaCommand{va, 0, 2 * kPageSize}, done));
  rig.e.run_until_done(1'000'000);
  ASSERT_EQ(reissues.size(), 4u);
  for (std::uint32_t i = 0; i < 4; ++i) EXPECT_EQ(reissues[i].first, 4 + i);
  EXPECT_EQ(rig.mh.stats().walks, 1u);
  EXPECT_GT(rig.dma.stats().drain_stall_cycles, 300u);
}

TEST(DmaEngine, EightFailuresOnOnePageNeedOneWalk) {
  SimConfig cfg;
  cfg.dma.max_burst = 512;
  cfg.latency.tlb_l2_lookup = 10;  // the first miss answers after all eight bursts are out
  oracle::DmaRig rig(cfg);
  const VirtAddr va = rig.as.allocate(kPageSize);
  rig.start();
  SimTime done = 0;
  rig.e.spawn("pe", ProcessKind::worker, one_transfer(rig, DmaCommand{va, 0, kPageSize}, done));
  rig.e.run_until_done(1'000'000);
  EXPECT_EQ(rig.dma.stats().bursts_failed, 8u);
  EXPECT_EQ(rig.dma.stats().bursts_reissued, 8u);
  EXPECT_EQ(rig.mh.stats().enqueued, 1u);
  EXPECT_EQ(rig.mh.stats().walks, 1u);
  EXPECT_EQ(rig.dma.max_observed_in_flight(), 8u);
}

TEST(DmaEngine, NoFailuresMeansNoRecoveryActivity) {
  oracle::DmaRig rig(SimConfig{});
  const VirtAddr va = rig.as.allocate(64 * 1024);
  rig.premap(va, 64 * 1024);
  rig.start();
  SimTime done = 0;
  rig.e.spawn("pe", ProcessKind::worker, one_transfer(rig, DmaCommand{va, 0, 64 * 1024, Direction::out}, done));
  rig.e.run_until_done(10'000'000);
  EXPECT_EQ(rig.dma.stats().bursts_issued, 32u);
  EXPECT_EQ(rig.dma.stats().bursts_reissued, 0u);
  EXPECT_EQ(rig.dma.stats().drain_stall_cycles, 0u);
  EXPECT_LE(rig.dma.max_observed_in_flight(), 8u);
  EXPECT_GE(done, 8192u);
}

TEST(DmaEngine, IntegrityUnderInjectedMisses) {
  const auto r = oracle::run_dma_integrity(5, 200);
  EXPECT_EQ(r.failure, "");
  EXPECT_EQ(r.transfers, 200u);
  EXPECT_GT(r.failed_bursts, 20u);
}

Task<void> soa_transfer(oracle::DmaRig& rig, DmaCommand cmd, std::uint64_t& locks_during, SimTime& done_at) {
  co_await rig.dma.soa_lock_span(cmd.va, cmd.length);
  const auto id = co_await rig.dma.submit(cmd);
  locks_during = rig.iommu.tlb().live_locks();
  co_await rig.dma.wait(id);
  co_await rig.dma.soa_unlock_span(cmd.va, cmd.length);
  done_at = rig.e.now();
}

TEST(SoaTransfer, LocksEveryPageForTheWholeTransfer) {
  SimConfig cfg;
  cfg.mode = Mode::soa;
  oracle::DmaRig rig(cfg);
  const VirtAddr va = rig.as.allocate(3 * kPageSize);
  rig.start();
  std::uint64_t locks = 0;
  SimTime done = 0;
  rig.e.spawn("wt", ProcessKind::worker, soa_transfer(rig, DmaCommand{va, 0, 3 * kPageSize}, locks, done));
  rig.e.run_until_done(1'000'000);
  EXPECT_EQ(locks, 3u);
  EXPECT_EQ(rig.iommu.tlb().live_locks(), 0u);
  EXPECT_EQ(rig.dma.stats().bursts_failed, 0u);
  EXPECT_EQ(rig.mh.stats().walks, 3u);
}

TEST(SoaTransfer, AddsLockOverheadToAnIdenticalMappedTransfer) {
  SimTime t_vdma = 0, t_soa = 0;
  for (Mode m : {Mode::vdma, Mode::soa}) {
    SimConfig cfg;
    cfg.mode = m;
    oracle::DmaRig rig(cfg);
    const VirtAddr va = rig.as.allocate(kPageSize);
    rig.premap(va, kPageSize);
    rig.start();
    std::uint64_t locks = 0;
    SimTime done = 0;
    if (m == Mode::soa)
      rig.e.spawn("wt", ProcessKind::worker, soa_transfer(rig, DmaCommand{va, 0, 2048}, locks, done));
    else
      rig.e.spawn("wt", ProcessKind::worker, one_transfer(rig, DmaCommand{va, 0, 2048}, done));
    rig.e.run_until_done(1'000'000);
    (m == Mode::soa ? t_soa : t_vdma) = done;
  }
  EXPECT_GT(t_soa, t_vdma);
}

Task<void> lock_one(oracle::DmaRig& rig, VirtAddr va) { co_await rig.dma.soa_lock_span(va, 4); }

TEST(SoaTransfer, LockingBeyondTheWaysOfASetStalls) {
  SimConfig cfg;
  cfg.mode = Mode::soa;
  cfg.time_limit = 200'000;
  oracle::DmaRig rig(cfg);
  // 32 sets: pages 32 apart share a set.
  const VirtAddr va = rig.as.allocate(33 * 9 * kPageSize);
  const std::uint32_t first = va.page().value;
  const std::uint32_t aligned = (first + 31) / 32 * 32;
  rig.start();
  for (std::uint32_t k = 0; k < 9; ++k)
    rig.e.spawn("wt", ProcessKind::worker, lock_one(rig, VirtAddr{(aligned + 32 * k) << kPageShift}));
  EXPECT_THROW(rig.e.run_until_done(cfg.time_limit), SimTimeout);
  EXPECT_EQ(rig.iommu.tlb().live_locks(), 8u);
}

}  // namespace
}  // namespace svmsim
