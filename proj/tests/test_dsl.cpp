#include <gtest/gtest.h>

#include "fixture_io.hpp"
#include "svmsim/dsl/parser.hpp"
#include "svmsim/dsl/printer.hpp"

using namespace svmsim::dsl;

namespace {

std::string error_of(const std::string& src, ParseOptions opt = {}) {
  try {
    parse(src, opt);
  } catch (const CompileError& e) {
    return e.what();
  }
  return "";
}

const char* kFixtures[] = {"sp", "pc", "array", "gather", "cond", "nested", "local_only", "no_parallel"};

}  // namespace

TEST(Lexer, TokensCarryPositions) {
  auto toks = lex("kernel k(int n) {\n  n += 0x10;\n}");
  ASSERT_GE(toks.size(), 10u);
  EXPECT_EQ(toks[0].text, "kernel");
  EXPECT_EQ(toks[0].kind, Tok::keyword);
  const Token& plus = toks[8];
  EXPECT_EQ(plus.text, "+=");
  EXPECT_EQ(plus.span.line, 2);
  EXPECT_EQ(plus.span.column, 5);
  EXPECT_EQ(toks[9].value, 16);
  EXPECT_EQ(toks.back().kind, Tok::end);
}

TEST(Lexer, MalformedTokensAreRejectedWithPosition) {
  EXPECT_EQ(error_of("kernel k() {\n  int x = 12ab;\n}"), "2:11: malformed number '12a'");
  EXPECT_EQ(error_of("kernel k() {\n  int x = 0x;\n}"), "2:11: malformed number '0x'");
  EXPECT_EQ(error_of("kernel k() { int x = 3 @ 4; }"), "1:24: unexpected character '@'");
}

TEST(Parser, UndeclaredVariable) {
  EXPECT_EQ(error_of("kernel k(int n) {\n  int x = n + y;\n}"), "2:15: use of undeclared variable 'y'");
}

TEST(Parser, SyntaxErrorsNameTheExpectedToken) {
  EXPECT_EQ(error_of("kernel k(int n) {\n  int x = n\n}"), "3:1: expected ';' but found '}'");
  EXPECT_EQ(error_of("kernel k(int n) { for (i in 0 n) { } }"), "1:31: expected '..' but found 'n'");
}

TEST(Parser, ScopingRules) {
  EXPECT_NE(error_of("kernel k(int n) { int n = 1; }").find("shadows"), std::string::npos);
  EXPECT_NE(error_of("kernel k() { int a = 1; int a = 2; }").find("redeclaration of 'a'"), std::string::npos);
  EXPECT_NE(error_of("kernel k() { for (i in 0 .. 4) { i = 2; } }").find("'i'"), std::string::npos);
  EXPECT_EQ(error_of("kernel k() { for (i in 0 .. 4) { } for (i in 0 .. 4) { } }"), "");
  EXPECT_NE(error_of("kernel k() { { int a = 1; } int b = a; }").find("undeclared variable 'a'"), std::string::npos);
}

TEST(Parser, TypeChecks) {
  EXPECT_NE(error_of("kernel k(int n) { int x = n[0]; }"), "");
  EXPECT_NE(error_of("kernel k(svm int* p) { local int b[4]; int h = dma_in(p, 0, b, 16); }"), "");
  EXPECT_NE(error_of("kernel k() { compute(1, 2); }"), "");
}

TEST(Parser, NestedParallelLoopsAreRejected) {
  EXPECT_NE(error_of("kernel k() { parallel_for (i in 0 .. 2) { parallel_for (j in 0 .. 2) { } } }").find("parallel"),
            std::string::npos);
}

TEST(Parser, GeneratedOnlyConstructs) {
  const std::string src = "kernel k(svm int* p) { prefetch_window (i in 0 .. 4) { prefetch(p + i); } }";
  EXPECT_NE(error_of(src), "");
  EXPECT_EQ(error_of(src, {true}), "");
  EXPECT_NE(error_of("kernel k(svm int* p) { parallel_for (i in 0 .. 4) { prefetch(p); } }"), "");
}

TEST(Parser, PointerArithmeticKeepsPointerType) {
  Kernel k = parse("kernel k(svm int* p, int n) { svm int* q = p + n * 4; int x = q[1]; }");
  ASSERT_EQ(k.body.size(), 2u);
  EXPECT_EQ(k.body[0].exprs[0].type, Type::svm_ptr);
}

TEST(Printer, SourceRoundTripIsStable) {
  for (const char* name : kFixtures) {
    SCOPED_TRACE(name);
    const Kernel k = parse(read_fixture(std::string("kernels/") + name + ".svk"));
    const std::string once = to_source(k);
    const std::string twice = to_source(parse(once));
    EXPECT_EQ(once, twice);
  }
}

TEST(Printer, MinimalParentheses) {
  Kernel k = parse("kernel k(int a, int b, int c) { int x = (a + b) * c; int y = a - (b - c); int z = a * b + c; }");
  const std::string s = to_source(k);
  EXPECT_NE(s.find("int x = (a + b) * c;"), std::string::npos);
  EXPECT_NE(s.find("int y = a - (b - c);"), std::string::npos);
  EXPECT_NE(s.find("int z = a * b + c;"), std::string::npos);
}

TEST(Printer, AstDumpMatchesGolden) {
  const Kernel k = parse(read_fixture("kernels/gather.svk"));
  EXPECT_EQ(dump_ast(k), read_fixture("golden/gather.ast"));
}
