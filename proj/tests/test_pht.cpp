#include <gtest/gtest.h>

#include <map>

#include "fixture_io.hpp"
#include "svmsim/dsl/parser.hpp"
#include "svmsim/pht/compiler.hpp"

using namespace svmsim;

namespace {

pht::Compiled compile_src(const std::string& src) { return pht::compile(dsl::parse(src)); }

std::string helper_of(const std::string& src) { return dsl::to_source(compile_src(src).helper); }

int count(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

class HelperGolden : public ::testing::TestWithParam<const char*> {};

TEST_P(HelperGolden, MatchesReviewedOutput) {
  const std::string name = GetParam();
  const auto c = pht::compile(dsl::parse(read_fixture("kernels/" + name + ".svk")));
  EXPECT_EQ(dsl::to_source(c.helper), read_fixture("golden/" + name + ".pht"));
}

TEST_P(HelperGolden, HelperReparsesAsGeneratedCode) {
  const std::string name = GetParam();
  const auto c = pht::compile(dsl::parse(read_fixture("kernels/" + name + ".svk")));
  const std::string text = dsl::to_source(c.helper);
  EXPECT_EQ(dsl::to_source(dsl::parse(text, {true})), text);
  const std::string worker = dsl::to_source(c.worker);
  EXPECT_EQ(dsl::to_source(dsl::parse(worker, {true})), worker);
}

INSTANTIATE_TEST_SUITE_P(Fixtures, HelperGolden,
                         ::testing::Values("sp", "pc", "array", "gather", "cond", "nested", "local_only"));

TEST(Ddg, MatchesReviewedOutput) {
  for (const char* name : {"sp", "pc"}) {
    SCOPED_TRACE(name);
    const auto k = dsl::parse(read_fixture(std::string("kernels/") + name + ".svk"));
    EXPECT_EQ(pht::compile(k).ddg.dump(k.name), read_fixture(std::string("golden/") + name + ".ddg"));
  }
}

TEST(Ddg, VersionsEachAssignment) {
  const auto c = compile_src(
      "kernel k(svm int* p) { parallel_for (i in 0 .. 4) { int x = p[i]; x = x + 1; int y = p[x]; } }");
  const auto* x2 = c.ddg.find("x.2");
  ASSERT_NE(x2, nullptr);
  EXPECT_EQ(x2->deps, (std::set<std::string>{"x.1"}));
  EXPECT_TRUE(x2->svm);
  EXPECT_FALSE(x2->svm_leaf);
  EXPECT_TRUE(x2->address);
  const auto* y = c.ddg.find("y.1");
  ASSERT_NE(y, nullptr);
  EXPECT_FALSE(y->address);
}

TEST(Compiler, RejectsKernelWithoutParallelLoop) {
  try {
    pht::compile(dsl::parse(read_fixture("kernels/no_parallel.svk")));
    FAIL() << "expected a compile error";
  } catch (const dsl::CompileError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported shape"), std::string::npos);
  }
}

TEST(Compiler, RejectsAddressFromUnfilledLocalData) {
  EXPECT_THROW(compile_src("kernel k(svm int* p) { local int b[4]; parallel_for (i in 0 .. 4) {"
                           " b[0] = i; int x = p[b[0]]; } }"),
               dsl::CompileError);
}

TEST(Compiler, WorkerGetsProgressStore) {
  const auto c = compile_src("kernel k(svm int* p) { parallel_for (i in 0 .. 4) { int x = p[i]; } }");
  const std::string w = dsl::to_source(c.worker);
  EXPECT_NE(w.find("parallel_for (i in 0 .. 4) {\n    progress(i);\n"), std::string::npos);
}

TEST(Compiler, UnrelatedComputationIsSliced) {
  const std::string h = helper_of(
      "kernel k(svm int* p, int n) { parallel_for (i in 0 .. n) {"
      " int acc = 0; for (j in 0 .. 100) { acc += j * j; } compute(acc); int x = p[i]; } }");
  EXPECT_EQ(count(h, "for (j"), 0);
  EXPECT_EQ(count(h, "acc"), 0);
  EXPECT_EQ(count(h, "prefetch(p + i * 4);"), 1);
}

TEST(Ddg, OnlyAddressFeedingValuesAreMarked) {
  const auto c = compile_src(
      "kernel k(svm int* p, svm int* q, int n) { parallel_for (i in 0 .. n) {"
      " int s = 0; int v = p[i]; s = s + v * v; int w = q[v]; } }");
  std::map<std::string, bool> marked;
  for (const auto& node : c.ddg.nodes) marked[node.id()] = node.address;
  ASSERT_TRUE(marked.count("s.2"));
  EXPECT_FALSE(marked.at("s.2"));  // s = s + v * v
  EXPECT_FALSE(marked.at("s.1"));
  EXPECT_TRUE(marked.at("v.1"));
  EXPECT_TRUE(marked.at("i.1"));
  EXPECT_FALSE(marked.at("w.1"));
}

TEST(Compiler, MirroredLocalReadsBecomeSharedLoads) {
  const std::string h = helper_of(
      "kernel k(svm int* idx, svm int* t) { local int b[16]; parallel_for (i in 0 .. 4) {"
      " int d = dma_in(b, 0, idx + i * 64, 64); dma_wait(d); int j = b[3]; int v = t[j]; } }");
  EXPECT_NE(h.find("int j = (idx + i * 64)[3];"), std::string::npos) << h;
  EXPECT_NE(h.find("prefetch(t + j * 4);"), std::string::npos) << h;
}

TEST(Prune, SamePageLoadsFoldWhenAligned) {
  // p is page-aligned and i * 4096 keeps that, so offsets 0 and 20 share a page.
  const std::string h = helper_of(
      "kernel k(svm int* p) { parallel_for (i in 0 .. 4) { svm int* q = p + i * 4096;"
      " int a = q[0]; int b = q[5]; int c = q[1024]; compute(a + b + c); } }");
  EXPECT_EQ(count(h, "prefetch("), 2) << h;
  EXPECT_NE(h.find("prefetch(q + 4096);"), std::string::npos) << h;
}

TEST(Prune, UnknownAlignmentDoesNotFold) {
  const std::string h = helper_of(
      "kernel k(svm int* p, int off) { parallel_for (i in 0 .. 4) { svm int* q = p + off;"
      " int a = q[0]; int b = q[1]; compute(a + b); } }");
  EXPECT_EQ(count(h, "prefetch("), 2) << h;
}

TEST(Prune, ReassignedBaseBlocksFolding) {
  const std::string h = helper_of(
      "kernel k(svm int* p) { parallel_for (i in 0 .. 4) { svm int* q = p; int a = q[0];"
      " q = p + i * 8192; int b = q[0]; compute(a + b); } }");
  EXPECT_EQ(count(h, "prefetch("), 2) << h;
}

TEST(Prune, BranchPrefetchDoesNotDominateJoin) {
  const std::string h = helper_of(
      "kernel k(svm int* p, int n) { parallel_for (i in 0 .. 4) { if (n > 0) { int a = p[0]; compute(a); }"
      " int b = p[1]; compute(b); } }");
  EXPECT_EQ(count(h, "prefetch(p)"), 1) << h;
  EXPECT_EQ(count(h, "prefetch(p + 4)"), 1) << h;
}

TEST(Prune, CoveredBranchDisappears) {
  const std::string h = helper_of(
      "kernel k(svm int* p) { parallel_for (i in 0 .. 4) { int a = p[0];"
      " if (a > 0) { int b = p[2]; compute(b); } } }");
  EXPECT_EQ(count(h, "prefetch("), 1) << h;
  EXPECT_EQ(count(h, "if ("), 0) << h;
}

TEST(Prune, IdenticalSpansAreDeduplicated) {
  const std::string h = helper_of(
      "kernel k(svm int* p) { local int b[16]; parallel_for (i in 0 .. 4) { svm int* s = p + i * 64;"
      " int d = dma_in(b, 0, s, 64); dma_wait(d); int e = dma_out(s, b, 0, 64); dma_wait(e); } }");
  EXPECT_EQ(count(h, "prefetch_span(s, 64);"), 1) << h;
}
