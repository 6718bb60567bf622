#pragma once

// Executes kernel programs as simulated processes. Everything timed or
// memory-visible goes through a Backend, so the same interpreter drives the
// cycle model and the untimed co-simulation.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "svmsim/dma.hpp"
#include "svmsim/dsl/ast.hpp"
#include "svmsim/engine.hpp"
#include "svmsim/memory.hpp"

namespace svmsim::rt {

using Word = std::int64_t;
using dsl::Expr;
using dsl::ExprKind;
using dsl::Kernel;
using dsl::Stmt;
using dsl::StmtKind;
using dsl::Type;

/// Per-thread interpreter state.
struct ThreadCtx {
  struct LocalArray {
    std::uint32_t offset = 0;  // byte offset in the cluster L1
    std::uint32_t words = 0;
  };

  std::uint32_t index = 0;  // worker index this context belongs to
  ProcessId pid = kNoProcess;
  std::unordered_map<std::string, Word> vars;
  std::unordered_map<std::string, LocalArray> arrays;
  std::uint32_t l1_next = 0;
  std::uint32_t l1_end = 0;
  Word chunk_begin = 0;
  Word chunk_end = 0;
  std::vector<std::uint32_t> outstanding;  // DMA transfers not yet waited for
  Cycles debt = 0;                         // untimed local work not yet slept
  Cycles busy = 0;                         // compute cycles executed
};

/// The machine a program runs on.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual Task<Word> load(ThreadCtx& t, VirtAddr va) = 0;
  virtual Task<void> store(ThreadCtx& t, VirtAddr va, Word v) = 0;
  virtual Task<void> prefetch(ThreadCtx& t, VirtAddr va) = 0;
  virtual Task<std::uint32_t> dma(ThreadCtx& t, DmaCommand cmd) = 0;
  virtual Task<void> dma_wait(ThreadCtx& t, std::uint32_t id) = 0;
  virtual Task<void> sleep(ThreadCtx& t, Cycles n) = 0;
  virtual void progress(ThreadCtx& t, Word iteration) = 0;
  virtual Scratchpad& l1() = 0;
  virtual Cycles l1_cost() const = 0;
};

/// Word transform applied by the `apply` intrinsic.
inline std::uint32_t apply_word(std::uint32_t w) { return 3 * w + 1; }

/// Static chunk of `items` owned by worker k of `workers`.
inline std::pair<Word, Word> static_chunk(Word items, std::uint32_t k, std::uint32_t workers) {
  return {items * k / workers, items * (k + 1) / workers};
}

/// A kernel split around its top-level parallel loop.
struct Program {
  Kernel kernel;
  std::size_t loop = 0;  // index of the parallel loop in kernel.body

  explicit Program(Kernel k) : kernel(std::move(k)) {
    for (std::size_t i = 0; i < kernel.body.size(); ++i) {
      const auto kind = kernel.body[i].kind;
      if (kind == StmtKind::parallel_for || kind == StmtKind::prefetch_window) {
        loop = i;
        return;
      }
    }
    loop = kernel.body.size();
  }

  bool has_loop() const { return loop < kernel.body.size(); }
  const Stmt& loop_stmt() const { return kernel.body.at(loop); }
};

class Interpreter {
 public:
  Interpreter(const Program& p, Backend& b) : prog_(p), be_(b) {}

  /// Binds parameters and the thread's L1 region and chunk.
  ThreadCtx make_ctx(std::uint32_t index, ProcessId pid, const std::vector<Word>& args, std::uint32_t l1_begin,
                     std::uint32_t l1_end, Word chunk_begin, Word chunk_end) const {
    const auto& params = prog_.kernel.params;
    if (args.size() != params.size())
      throw SimFault("kernel " + prog_.kernel.name + " takes " + std::to_string(params.size()) + " arguments");
    ThreadCtx t;
    t.index = index;
    t.pid = pid;
    for (std::size_t i = 0; i < params.size(); ++i) t.vars[params[i].name] = args[i];
    t.l1_next = l1_begin;
    t.l1_end = l1_end;
    t.chunk_begin = chunk_begin;
    t.chunk_end = chunk_end;
    return t;
  }

  /// Runs the whole kernel, then waits for the thread's remaining transfers.
  Task<void> run(ThreadCtx& t) {
    co_await exec(t, prog_.kernel.body);
    co_await wait_all(t);
    co_await flush(t);
  }

  Task<void> run_prologue(ThreadCtx& t) {
    for (std::size_t i = 0; i < prog_.loop && i < prog_.kernel.body.size(); ++i)
      co_await exec(t, prog_.kernel.body[i]);
    co_await flush(t);
  }

  Task<std::pair<Word, Word>> loop_bounds(ThreadCtx& t) {
    const Stmt& s = prog_.loop_stmt();
    const Word lo = co_await eval(t, s.exprs[0]);
    const Word hi = co_await eval(t, s.exprs[1]);
    co_return std::pair{lo, hi};
  }

  Task<void> run_iteration(ThreadCtx& t, Word i) {
    const Stmt& s = prog_.loop_stmt();
    t.vars[s.name] = i;
    t.debt += 1;
    co_await exec(t, s.body);
    co_await flush(t);
  }

  Task<void> run_epilogue(ThreadCtx& t) {
    for (std::size_t i = prog_.loop + 1; i < prog_.kernel.body.size(); ++i) co_await exec(t, prog_.kernel.body[i]);
    co_await wait_all(t);
    co_await flush(t);
  }

  const Program& program() const { return prog_; }

 private:
  Task<void> flush(ThreadCtx& t) {
    if (t.debt == 0) co_return;
    const Cycles n = std::exchange(t.debt, 0);
    co_await be_.sleep(t, n);
  }

  Task<void> wait_all(ThreadCtx& t) {
    std::vector<std::uint32_t> ids = std::move(t.outstanding);
    t.outstanding.clear();
    if (ids.empty()) co_return;
    co_await flush(t);
    for (auto id : ids) co_await be_.dma_wait(t, id);
  }

  Task<void> exec(ThreadCtx& t, const std::vector<Stmt>& body) {
    for (const auto& s : body) co_await exec(t, s);
  }

  Task<void> exec(ThreadCtx& t, const Stmt& s) {
    t.debt += 1;
    switch (s.kind) {
      case StmtKind::decl:
        if (s.decl_type == Type::local_array) {
          allocate(t, s);
        } else {
          t.vars[s.name] = s.exprs.empty() ? 0 : co_await eval(t, s.exprs[0]);
        }
        break;
      case StmtKind::assign: co_await assign(t, s); break;
      case StmtKind::expr: (void)co_await eval(t, s.exprs[0]); break;
      case StmtKind::if_:
        if (co_await eval(t, s.exprs[0])) co_await exec(t, s.body);
        else co_await exec(t, s.else_body);
        break;
      case StmtKind::for_:
      case StmtKind::parallel_for:
      case StmtKind::prefetch_window: {
        const Word lo = co_await eval(t, s.exprs[0]);
        const Word hi = co_await eval(t, s.exprs[1]);
        for (Word i = lo; i < hi; ++i) {
          t.vars[s.name] = i;
          t.debt += 1;
          co_await exec(t, s.body);
        }
        break;
      }
      case StmtKind::block: co_await exec(t, s.body); break;
    }
  }

  void allocate(ThreadCtx& t, const Stmt& s) {
    if (t.arrays.count(s.name)) return;
    const std::uint32_t bytes = s.array_words * 4;
    if (t.l1_next + bytes > t.l1_end)
      throw SimFault("local array '" + s.name + "' does not fit the thread's L1 share");
    t.arrays[s.name] = ThreadCtx::LocalArray{t.l1_next, s.array_words};
    t.l1_next += (bytes + 7) / 8 * 8;
  }

  const ThreadCtx::LocalArray& array(ThreadCtx& t, const std::string& name) {
    auto it = t.arrays.find(name);
    if (it == t.arrays.end()) throw SimFault("local array '" + name + "' used before its declaration ran");
    return it->second;
  }

  std::uint32_t local_offset(ThreadCtx& t, const std::string& name, Word index, Word bytes) {
    const auto& a = array(t, name);
    if (index < 0 || bytes < 0 || (index * 4 + bytes) > Word{a.words} * 4)
      throw SimFault("access outside local array '" + name + "'");
    return a.offset + static_cast<std::uint32_t>(index * 4);
  }

  static VirtAddr to_va(Word v) {
    if (v < 0 || v > 0xFFFF'FFFFLL) throw SimFault("address " + std::to_string(v) + " out of range");
    if (v % 4 != 0) throw SimFault("unaligned shared-memory access at " + std::to_string(v));
    return VirtAddr{static_cast<std::uint32_t>(v)};
  }

  Task<void> assign(ThreadCtx& t, const Stmt& s) {
    const Expr& lhs = s.exprs[0];
    Word v = co_await eval(t, s.exprs[1]);
    if (lhs.kind == ExprKind::var) {
      Word& slot = t.vars[lhs.name];
      slot = s.op == "=" ? v : s.op == "+=" ? slot + v : slot - v;
      co_return;
    }
    if (lhs.kind == ExprKind::index && lhs.args[0].type == Type::local_array) {
      const Word idx = co_await eval(t, lhs.args[1]);
      const std::uint32_t off = local_offset(t, lhs.args[0].name, idx, 4);
      if (s.op != "=") {
        const Word old = be_.l1().read32(off);
        v = s.op == "+=" ? old + v : old - v;
      }
      t.debt += be_.l1_cost();
      be_.l1().write32(off, static_cast<std::uint32_t>(v));
      co_return;
    }
    const VirtAddr va = to_va(co_await address(t, lhs));
    if (s.op != "=") {
      co_await flush(t);
      const Word old = co_await be_.load(t, va);
      v = s.op == "+=" ? old + v : old - v;
    }
    co_await flush(t);
    co_await be_.store(t, va, v);
  }

  Task<Word> address(ThreadCtx& t, const Expr& e) {
    if (e.kind == ExprKind::deref) co_return co_await eval(t, e.args[0]);
    const Word base = co_await eval(t, e.args[0]);
    const Word idx = co_await eval(t, e.args[1]);
    co_return base + idx * 4;
  }

  static bool pure(const Expr& e) {
    if (e.kind == ExprKind::call || e.kind == ExprKind::deref) return false;
    if (e.kind == ExprKind::index && e.args[0].type == Type::svm_ptr) return false;
    for (const auto& a : e.args)
      if (!pure(a)) return false;
    return true;
  }

  static Word arith(const std::string& op, Word a, Word b, const Expr& at) {
    if (op == "+") return a + b;
    if (op == "-") return a - b;
    if (op == "*") return a * b;
    if (op == "/" || op == "%") {
      if (b == 0) throw SimFault(std::to_string(at.span.line) + ":" + std::to_string(at.span.column) +
                                 ": division by zero");
      return op == "/" ? a / b : a % b;
    }
    if (op == "<<") return a << (b & 63);
    if (op == ">>") return a >> (b & 63);
    if (op == "==") return a == b;
    if (op == "!=") return a != b;
    if (op == "<") return a < b;
    if (op == "<=") return a <= b;
    if (op == ">") return a > b;
    if (op == ">=") return a >= b;
    throw SimFault("unknown operator " + op);
  }

  /// Evaluates an expression without shared-memory accesses or intrinsics.
  Word eval_pure(ThreadCtx& t, const Expr& e) {
    switch (e.kind) {
      case ExprKind::literal: return e.value;
      case ExprKind::var: {
        auto it = t.vars.find(e.name);
        if (it == t.vars.end()) throw SimFault("variable '" + e.name + "' read before assignment");
        return it->second;
      }
      case ExprKind::unary: {
        const Word v = eval_pure(t, e.args[0]);
        return e.op == "-" ? -v : !v;
      }
      case ExprKind::binary: {
        const Word a = eval_pure(t, e.args[0]);
        if (e.op == "&&") return a && eval_pure(t, e.args[1]);
        if (e.op == "||") return a || eval_pure(t, e.args[1]);
        return arith(e.op, a, eval_pure(t, e.args[1]), e);
      }
      case ExprKind::index: {
        const Word idx = eval_pure(t, e.args[1]);
        t.debt += be_.l1_cost();
        return be_.l1().read32(local_offset(t, e.args[0].name, idx, 4));
      }
      default: throw SimFault("impure expression in pure evaluation");
    }
  }

  Task<Word> eval(ThreadCtx& t, const Expr& e) {
    if (pure(e)) co_return eval_pure(t, e);
    switch (e.kind) {
      case ExprKind::unary: {
        const Word v = co_await eval(t, e.args[0]);
        co_return e.op == "-" ? -v : !v;
      }
      case ExprKind::binary: {
        const Word a = co_await eval(t, e.args[0]);
        if (e.op == "&&") co_return a && co_await eval(t, e.args[1]);
        if (e.op == "||") co_return a || co_await eval(t, e.args[1]);
        const Word b = co_await eval(t, e.args[1]);
        co_return arith(e.op, a, b, e);
      }
      case ExprKind::index:
        if (e.args[0].type == Type::local_array) {
          const Word idx = co_await eval(t, e.args[1]);
          t.debt += be_.l1_cost();
          co_return be_.l1().read32(local_offset(t, e.args[0].name, idx, 4));
        }
        [[fallthrough]];
      case ExprKind::deref: {
        const VirtAddr va = to_va(co_await address(t, e));
        co_await flush(t);
        co_return co_await be_.load(t, va);
      }
      case ExprKind::call: co_return co_await call(t, e);
      default: co_return eval_pure(t, e);
    }
  }

  Task<Word> call(ThreadCtx& t, const Expr& e) {
    const std::string& fn = e.op;
    if (fn == "chunk_begin") co_return t.chunk_begin;
    if (fn == "chunk_end") co_return t.chunk_end;
    std::vector<Word> a;
    for (const auto& arg : e.args) {
      if (arg.type == Type::local_array) a.push_back(0);
      else a.push_back(co_await eval(t, arg));
    }
    if (fn == "compute") {
      if (a[0] > 0) {
        co_await flush(t);
        t.busy += static_cast<Cycles>(a[0]);
        co_await be_.sleep(t, static_cast<Cycles>(a[0]));
      }
      co_return 0;
    }
    if (fn == "dma_in" || fn == "dma_out") {
      const bool in = fn == "dma_in";
      const Expr& local = in ? e.args[0] : e.args[1];
      const Word idx = in ? a[1] : a[2];
      const Word bytes = a[3];
      const Word svm = in ? a[2] : a[0];
      if (bytes <= 0) throw SimFault(fn + " of " + std::to_string(bytes) + " bytes");
      DmaCommand cmd;
      cmd.va = to_va(svm);
      cmd.internal = local_offset(t, local.name, idx, bytes);
      cmd.length = static_cast<std::uint32_t>(bytes);
      cmd.dir = in ? Direction::in : Direction::out;
      co_await flush(t);
      const std::uint32_t id = co_await be_.dma(t, cmd);
      t.outstanding.push_back(id);
      co_return static_cast<Word>(id);
    }
    if (fn == "dma_wait") {
      const auto id = static_cast<std::uint32_t>(a[0]);
      auto it = std::find(t.outstanding.begin(), t.outstanding.end(), id);
      if (it == t.outstanding.end()) co_return 0;  // already waited for
      t.outstanding.erase(it);
      co_await flush(t);
      co_await be_.dma_wait(t, id);
      co_return 0;
    }
    if (fn == "dma_wait_all") {
      co_await wait_all(t);
      co_return 0;
    }
    if (fn == "apply") {
      const Word bytes = a[4];
      const std::uint32_t dst = local_offset(t, e.args[0].name, a[1], bytes);
      const std::uint32_t src = local_offset(t, e.args[2].name, a[3], bytes);
      for (Word off = 0; off + 4 <= bytes; off += 4) {
        const auto o = static_cast<std::uint32_t>(off);
        be_.l1().write32(dst + o, apply_word(be_.l1().read32(src + o)));
      }
      co_return 0;
    }
    if (fn == "progress") {
      t.debt += be_.l1_cost();
      be_.progress(t, a[0]);
      co_return 0;
    }
    if (fn == "prefetch") {
      co_await flush(t);
      co_await be_.prefetch(t, to_va(a[0] & ~Word{3}));
      co_return 0;
    }
    if (fn == "prefetch_span") {
      if (a[1] <= 0) co_return 0;
      co_await flush(t);
      for (const Vpn p : DmaEngine::pages_of(to_va(a[0] & ~Word{3}), static_cast<std::uint32_t>(a[1]))) {
        const Word first = std::max<Word>(a[0] & ~Word{3}, Word{p.value} << kPageShift);
        co_await be_.prefetch(t, to_va(first));
      }
      co_return 0;
    }
    throw SimFault("unknown intrinsic " + fn);
  }

  const Program& prog_;
  Backend& be_;
};

}  // namespace svmsim::rt
