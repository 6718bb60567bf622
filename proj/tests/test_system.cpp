#include <gtest/gtest.h>

#include "svmsim/system.hpp"

using namespace svmsim;

namespace {

SimConfig setup(Mode mode, std::uint32_t w, std::uint32_t p, std::uint32_t m) {
  SimConfig c;
  c.mode = mode;
  c.cluster.workers = w;
  c.cluster.prefetchers = p;
  c.cluster.miss_handlers = m;
  return c;
}

PcSpec small_pc() {
  PcSpec s;
  s.vertices = 300;
  return s;
}

SpSpec small_sp(std::uint32_t bytes = 64 * 1024) {
  SpSpec s;
  s.buffer_bytes = bytes;
  return s;
}

RunMetrics run_pc(const SimConfig& c, rt::Word milli, PcSpec s = small_pc()) {
  System sys(c);
  const auto w = gen_pc(s, c, sys.address_space());
  return sys.run(w, milli);
}

RunMetrics run_sp(const SimConfig& c, rt::Word milli, SpSpec s = small_sp()) {
  System sys(c);
  const auto w = gen_sp(s, c, sys.address_space());
  return sys.run(w, milli);
}

struct Case {
  Mode mode;
  std::uint32_t w, p, m;
};

class AllModes : public ::testing::TestWithParam<Case> {};

}  // namespace

TEST_P(AllModes, PcProducesReferenceOutput) {
  const auto [mode, w, p, m] = GetParam();
  const auto r = run_pc(setup(mode, w, p, m), 500);
  EXPECT_TRUE(r.ok) << r.status << ": " << r.detail;
}

TEST_P(AllModes, SpProducesReferenceOutput) {
  const auto [mode, w, p, m] = GetParam();
  const auto r = run_sp(setup(mode, w, p, m), 500);
  EXPECT_TRUE(r.ok) << r.status << ": " << r.detail;
}

INSTANTIATE_TEST_SUITE_P(Setups, AllModes,
                         ::testing::Values(Case{Mode::ideal, 7, 0, 0}, Case{Mode::soa, 7, 0, 1},
                                           Case{Mode::vdma, 7, 0, 1}, Case{Mode::vdma, 6, 0, 2},
                                           Case{Mode::vdma, 6, 1, 1}, Case{Mode::vdma, 5, 1, 2}));

TEST(System, IdealNeverMissesOrWalks) {
  const auto r = run_pc(setup(Mode::ideal, 7, 0, 0), 0);
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(r.misses, 0u);
  EXPECT_EQ(r.walks, 0u);
  EXPECT_EQ(r.prefetch_misses, 0u);
}

TEST(System, ColdTlbWalksEveryTouchedPage) {
  for (Mode mode : {Mode::soa, Mode::vdma}) {
    const SimConfig c = setup(mode, 7, 0, 1);
    System sys(c);
    const auto w = gen_sp(small_sp(), c, sys.address_space());
    const auto r = sys.run(w, 0);
    ASSERT_TRUE(r.ok);
    EXPECT_GE(r.walks, w.mapped_pages) << to_string(mode);
    EXPECT_GE(r.misses, w.mapped_pages) << to_string(mode);
  }
}

TEST(System, SoaReleasesEveryTlbLock) {
  const SimConfig c = setup(Mode::soa, 7, 0, 1);
  System sys(c);
  const auto w = gen_pc(small_pc(), c, sys.address_space());
  ASSERT_TRUE(sys.run(w, 250).ok);
  EXPECT_EQ(sys.iommu().tlb().live_locks(), 0u);
}

TEST(System, StreamingIsBoundByDramBandwidth) {
  // Every byte crosses DRAM twice, at dram_gap_per_64b cycles per 64 B.
  const SimConfig c = setup(Mode::ideal, 7, 0, 0);
  const std::uint32_t bytes = 256 * 1024;
  const auto r = run_sp(c, 0, small_sp(bytes));
  ASSERT_TRUE(r.ok);
  const SimTime bound = 2ull * bytes / 64 * c.latency.dram_gap_per_64b;
  EXPECT_GE(r.elapsed, bound);
}

TEST(System, ComputeBoundRunApproachesComputeTime) {
  // 140 blocks of 1 KiB over 7 workers at 10^4 cycles per byte.
  const SimConfig c = setup(Mode::ideal, 7, 0, 0);
  const auto r = run_sp(c, 10'000'000, small_sp(140 * 1024));
  ASSERT_TRUE(r.ok);
  const double compute = 20.0 * 1024 * 10'000;
  EXPECT_GE(static_cast<double>(r.elapsed), compute);
  EXPECT_LE(static_cast<double>(r.elapsed), compute * 1.05);
  for (Cycles b : r.busy) EXPECT_EQ(b, 20ull * 1024 * 10'000);
}

TEST(System, VdmaBeatsSoaOnPointerChasingAtLowIntensity) {
  const auto soa = run_pc(setup(Mode::soa, 7, 0, 1), 250);
  const auto vdma = run_pc(setup(Mode::vdma, 5, 1, 2), 250);
  ASSERT_TRUE(soa.ok);
  ASSERT_TRUE(vdma.ok);
  EXPECT_LT(vdma.elapsed, soa.elapsed);
}

TEST(System, PrefetchHelperIssuesPrefetches) {
  const auto r = run_pc(setup(Mode::vdma, 6, 1, 1), 250);
  ASSERT_TRUE(r.ok);
  EXPECT_GT(r.prefetch_hits + r.prefetch_misses, 0u);
}

TEST(System, TinyTimeLimitReportsTimeout) {
  SimConfig c = setup(Mode::vdma, 7, 0, 1);
  c.time_limit = 1000;
  const auto r = run_pc(c, 250);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.status, "timeout");
}

TEST(System, SameSeedSameResult) {
  const SimConfig c = setup(Mode::vdma, 5, 1, 2);
  const auto a = run_pc(c, 1000);
  const auto b = run_pc(c, 1000);
  EXPECT_EQ(a.elapsed, b.elapsed);
  EXPECT_EQ(a.walks, b.walks);
  EXPECT_EQ(a.prefetch_hits, b.prefetch_hits);
}
