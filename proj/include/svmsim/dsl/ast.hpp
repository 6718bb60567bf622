#pragma once

// Kernel language syntax tree. Nodes are plain values; children are held in
// vectors so a whole tree copies with the default copy constructor.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace svmsim::dsl {

struct Span {
  int line = 0;
  int column = 0;
};

class CompileError : public std::runtime_error {
 public:
  CompileError(Span at, const std::string& msg)
      : std::runtime_error(std::to_string(at.line) + ":" + std::to_string(at.column) + ": " + msg), at_(at) {}
  Span where() const { return at_; }

 private:
  Span at_;
};

enum class Type { int_, svm_ptr, local_array, void_ };

inline const char* to_string(Type t) {
  switch (t) {
    case Type::int_: return "int";
    case Type::svm_ptr: return "svm int*";
    case Type::local_array: return "local int[]";
    case Type::void_: return "void";
  }
  return "?";
}

enum class ExprKind { literal, var, unary, binary, index, deref, call };

struct Expr {
  ExprKind kind = ExprKind::literal;
  std::string op;    // operator spelling or callee name
  std::string name;  // variable name
  std::int64_t value = 0;
  std::vector<Expr> args;
  Type type = Type::int_;
  Span span;
  /// For a read of an L1 array filled by a visible dma_in: the equivalent
  /// load from the transfer's source. Filled in by the prefetch generator.
  std::vector<Expr> mirror;

  static Expr lit(std::int64_t v, Span s = {}) {
    Expr e;
    e.kind = ExprKind::literal;
    e.value = v;
    e.span = s;
    return e;
  }
  static Expr ref(std::string n, Span s = {}) {
    Expr e;
    e.kind = ExprKind::var;
    e.name = std::move(n);
    e.span = s;
    return e;
  }
  static Expr bin(std::string op, Expr a, Expr b) {
    Expr e;
    e.kind = ExprKind::binary;
    e.op = std::move(op);
    e.span = a.span;
    e.args.push_back(std::move(a));
    e.args.push_back(std::move(b));
    return e;
  }
  static Expr call(std::string fn, std::vector<Expr> args, Span s = {}) {
    Expr e;
    e.kind = ExprKind::call;
    e.op = std::move(fn);
    e.args = std::move(args);
    e.type = Type::void_;
    e.span = s;
    return e;
  }
};

enum class StmtKind { decl, assign, if_, for_, parallel_for, block, expr, prefetch_window };

struct Stmt {
  StmtKind kind = StmtKind::block;
  std::string name;              // declared variable / loop variable
  Type decl_type = Type::int_;   // decl
  std::uint32_t array_words = 0; // decl of a local array
  std::string op;                // assign: "=", "+=", "-="
  std::vector<Expr> exprs;       // decl: [init]; assign: [lhs, rhs]; if: [cond]; for: [lo, hi]; expr: [call]
  std::vector<Stmt> body;        // block, loop body, then-branch
  std::vector<Stmt> else_body;
  bool has_else = false;
  Span span;
};

struct Param {
  std::string name;
  Type type = Type::int_;
  Span span;
};

struct Kernel {
  std::string name;
  std::vector<Param> params;
  std::vector<Stmt> body;
};

/// Intrinsics callable from kernels. `pht_only` ones are produced by the
/// prefetch-thread generator and rejected in source kernels.
struct IntrinsicInfo {
  const char* name;
  int arity;
  Type result;
  bool pht_only;
};

inline const std::vector<IntrinsicInfo>& intrinsics() {
  static const std::vector<IntrinsicInfo> table = {
      {"compute", 1, Type::void_, false},
      {"dma_in", 4, Type::int_, false},   // (local, word index, svm src, bytes)
      {"dma_out", 4, Type::int_, false},  // (svm dst, local, word index, bytes)
      {"dma_wait", 1, Type::void_, false},
      {"dma_wait_all", 0, Type::void_, false},
      {"apply", 5, Type::void_, false},   // (local dst, index, local src, index, bytes)
      {"chunk_begin", 0, Type::int_, false},
      {"chunk_end", 0, Type::int_, false},
      {"progress", 1, Type::void_, true},
      {"prefetch", 1, Type::void_, true},
      {"prefetch_span", 2, Type::void_, true},
  };
  return table;
}

inline const IntrinsicInfo* find_intrinsic(const std::string& name) {
  for (const auto& i : intrinsics())
    if (name == i.name) return &i;
  return nullptr;
}

}  // namespace svmsim::dsl
