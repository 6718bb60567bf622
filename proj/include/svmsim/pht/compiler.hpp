#pragma once

// Prefetching helper thread generation.
//
// forward():  walks the kernel in program order, versions every assignment
//             and records which values it depends on. Reads of L1 buffers
//             that a visible dma_in filled are annotated with the equivalent
//             shared-memory load.
// backward(): walks each compound in reverse with the set of variables that
//             feed shared-memory addresses. Statements defining such
//             variables stay; every other statement is reduced to prefetches
//             of the shared memory it touches.
// prune():    drops prefetches covered by a dominating prefetch or load of
//             the same page.
// The worker kernel gains a progress store at the top of its parallel loop;
// the helper's parallel loop becomes a prefetch window.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "svmsim/dsl/ast.hpp"
#include "svmsim/dsl/printer.hpp"

namespace svmsim::pht {

using dsl::CompileError;
using dsl::Expr;
using dsl::ExprKind;
using dsl::Kernel;
using dsl::Stmt;
using dsl::StmtKind;
using dsl::Type;

// ---------------------------------------------------------------------------
// Expression helpers

inline void collect_vars(const Expr& e, std::set<std::string>& out) {
  if (!e.mirror.empty()) return collect_vars(e.mirror[0], out);
  if (e.kind == ExprKind::var && e.type != Type::local_array) out.insert(e.name);
  for (const auto& a : e.args) collect_vars(a, out);
}

inline std::set<std::string> vars_of(const Expr& e) {
  std::set<std::string> s;
  collect_vars(e, s);
  return s;
}

inline bool is_svm_load(const Expr& e) {
  return e.kind == ExprKind::deref || (e.kind == ExprKind::index && e.args[0].type == Type::svm_ptr);
}

inline bool is_local_read(const Expr& e) {
  return e.kind == ExprKind::index && e.args[0].type == Type::local_array;
}

inline Expr fold_add(Expr a, Expr b) {
  if (b.kind == ExprKind::literal && b.value == 0) return a;
  if (a.kind == ExprKind::literal && b.kind == ExprKind::literal) return Expr::lit(a.value + b.value);
  Expr e = Expr::bin("+", std::move(a), std::move(b));
  e.type = Type::svm_ptr;
  return e;
}

inline Expr fold_mul(Expr a, std::int64_t k) {
  if (a.kind == ExprKind::literal) return Expr::lit(a.value * k);
  return Expr::bin("*", std::move(a), Expr::lit(k));
}

/// Byte address read by an SVM load expression.
inline Expr address_of(const Expr& load) {
  if (load.kind == ExprKind::deref) return load.args[0];
  return fold_add(load.args[0], fold_mul(load.args[1], 4));
}

/// Replaces mirrored L1 reads with their shared-memory equivalents.
inline Expr helper_view(const Expr& e) {
  if (!e.mirror.empty()) return helper_view(e.mirror[0]);
  if (is_local_read(e)) throw CompileError(e.span, "unsupported shape: address depends on L1 data with no visible dma_in");
  Expr out = e;
  out.mirror.clear();
  for (auto& a : out.args) a = helper_view(a);
  return out;
}

/// A shared-memory touch that the helper must cover.
struct Touch {
  Expr address;
  std::optional<Expr> bytes;  // span length for DMA transfers
};

/// Outermost SVM accesses of `e` in evaluation order. Loads nested inside an
/// address are executed by the helper itself when it computes that address.
inline void collect_touches(const Expr& e, std::vector<Touch>& out) {
  if (e.kind == ExprKind::call && e.op == "dma_in") {
    for (std::size_t i = 0; i < 2; ++i) collect_touches(e.args[i], out);
    out.push_back(Touch{e.args[2], e.args[3]});
    return;
  }
  if (e.kind == ExprKind::call && e.op == "dma_out") {
    out.push_back(Touch{e.args[0], e.args[3]});
    for (std::size_t i = 1; i < 4; ++i) collect_touches(e.args[i], out);
    return;
  }
  if (is_svm_load(e)) {
    out.push_back(Touch{address_of(e), std::nullopt});
    return;
  }
  if (!e.mirror.empty() || is_local_read(e)) {
    // L1 data; the transfer that filled it is prefetched at its dma_in. Its
    // index may still touch shared memory.
    collect_touches(e.args[1], out);
    return;
  }
  for (const auto& a : e.args) collect_touches(a, out);
}

inline bool contains_call(const Expr& e, const char* fn) {
  if (e.kind == ExprKind::call && e.op == fn) return true;
  for (const auto& a : e.args)
    if (contains_call(a, fn)) return true;
  return false;
}

inline Stmt make_call_stmt(const std::string& fn, std::vector<Expr> args, dsl::Span at) {
  Stmt s;
  s.kind = StmtKind::expr;
  s.span = at;
  s.exprs.push_back(Expr::call(fn, std::move(args), at));
  return s;
}

inline Stmt prefetch_stmt(const Touch& t, dsl::Span at) {
  if (t.bytes) return make_call_stmt("prefetch_span", {helper_view(t.address), helper_view(*t.bytes)}, at);
  return make_call_stmt("prefetch", {helper_view(t.address)}, at);
}

// ---------------------------------------------------------------------------
// Data dependency graph

struct DdgNode {
  std::string var;
  int version = 0;
  std::set<std::string> deps;  // "name.version"
  std::set<std::string> ctrl;
  bool svm_leaf = false;  // right-hand side loads shared memory
  bool svm = false;       // depends on shared memory, possibly through others
  bool address = false;   // feeds a shared-memory address
  dsl::Span span;
  std::string id() const { return var + "." + std::to_string(version); }
};

struct Ddg {
  std::vector<DdgNode> nodes;

  std::string dump(const std::string& kernel) const {
    std::ostringstream os;
    os << "ddg " << kernel << "\n";
    for (const auto& n : nodes) {
      os << "  " << n.id() << " @" << n.span.line << ":" << n.span.column << " <-";
      if (n.deps.empty()) os << " -";
      for (const auto& d : n.deps) os << " " << d;
      if (!n.ctrl.empty()) {
        os << " | ctrl";
        for (const auto& c : n.ctrl) os << " " << c;
      }
      if (n.svm_leaf) os << " [svm-leaf]";
      if (n.svm) os << " [svm]";
      if (n.address) os << " [address]";
      os << "\n";
    }
    return os.str();
  }

  const DdgNode* find(const std::string& id) const {
    for (const auto& n : nodes)
      if (n.id() == id) return &n;
    return nullptr;
  }
};

class Forward {
 public:
  explicit Forward(const Kernel& k) {
    for (const auto& p : k.params) {
      version_[p.name] = 0;
      DdgNode n;
      n.var = p.name;
      n.span = p.span;
      ddg_.nodes.push_back(n);
    }
  }

  void run(std::vector<Stmt>& body) {
    walk(body);
    propagate();
  }

  Ddg take() { return std::move(ddg_); }

 private:
  struct Mirror {
    Expr source;
    Expr index;
    std::map<std::string, int> versions;  // of the variables in source/index
  };

  std::string cur(const std::string& v) const {
    auto it = version_.find(v);
    return v + "." + std::to_string(it == version_.end() ? 0 : it->second);
  }

  std::set<std::string> versioned(const std::set<std::string>& vars) const {
    std::set<std::string> out;
    for (const auto& v : vars) out.insert(cur(v));
    return out;
  }

  bool has_svm_load(const Expr& e) const {
    if (is_svm_load(e)) return true;
    if (!e.mirror.empty()) return true;
    for (const auto& a : e.args)
      if (has_svm_load(a)) return true;
    return false;
  }

  /// Annotates mirrored reads and records address roots.
  void annotate(Expr& e) {
    for (auto& a : e.args) annotate(a);
    if (is_local_read(e)) {
      auto it = mirrors_.find(e.args[0].name);
      if (it != mirrors_.end() && still_valid(it->second)) {
        const Mirror& m = it->second;
        Expr idx = e.args[1];
        if (!(m.index.kind == ExprKind::literal && m.index.value == 0)) idx = Expr::bin("-", idx, m.index);
        Expr load;
        load.kind = ExprKind::index;
        load.type = Type::int_;
        load.span = e.span;
        load.args.push_back(m.source);
        load.args.push_back(std::move(idx));
        e.mirror.assign(1, std::move(load));
        record_address(address_of(e.mirror[0]));
      }
    }
    if (is_svm_load(e)) record_address(address_of(e));
    if (e.kind == ExprKind::call && e.op == "dma_in") record_address(Expr::bin("+", e.args[2], e.args[3]));
    if (e.kind == ExprKind::call && e.op == "dma_out") record_address(Expr::bin("+", e.args[0], e.args[3]));
  }

  bool still_valid(const Mirror& m) const {
    for (const auto& [v, ver] : m.versions)
      if (version_.at(v) != ver) return false;
    return true;
  }

  void record_address(const Expr& addr) {
    for (const auto& v : vars_of(addr)) address_roots_.insert(cur(v));
  }

  void define(const std::string& var, const Expr* rhs, bool compound, dsl::Span at) {
    DdgNode n;
    n.var = var;
    n.span = at;
    if (rhs) {
      n.deps = versioned(vars_of(*rhs));
      n.svm_leaf = has_svm_load(*rhs);
    }
    if (compound) n.deps.insert(cur(var));
    for (const auto& c : ctrl_) n.ctrl.insert(c.begin(), c.end());
    n.version = ++counter_[var];
    version_[var] = n.version;
    ddg_.nodes.push_back(std::move(n));
  }

  void walk(std::vector<Stmt>& body) {
    for (auto& s : body) step(s);
  }

  void step(Stmt& s) {
    for (auto& e : s.exprs) annotate(e);
    switch (s.kind) {
      case StmtKind::decl:
        if (s.decl_type == Type::local_array) {
          mirrors_.erase(s.name);
          break;
        }
        version_[s.name] = 0;
        define(s.name, s.exprs.empty() ? nullptr : &s.exprs[0], false, s.span);
        note_dma(s.exprs.empty() ? nullptr : &s.exprs[0]);
        break;
      case StmtKind::assign:
        if (s.exprs[0].kind == ExprKind::var) define(s.exprs[0].name, &s.exprs[1], s.op != "=", s.span);
        else if (is_local_read(s.exprs[0])) mirrors_.erase(s.exprs[0].args[0].name);
        note_dma(&s.exprs[1]);
        break;
      case StmtKind::expr: note_dma(&s.exprs[0]); break;
      case StmtKind::if_: {
        ctrl_.push_back(versioned(vars_of(s.exprs[0])));
        walk(s.body);
        walk(s.else_body);
        ctrl_.pop_back();
        break;
      }
      case StmtKind::for_:
      case StmtKind::parallel_for:
      case StmtKind::prefetch_window: {
        std::set<std::string> bounds = vars_of(s.exprs[0]);
        for (const auto& v : vars_of(s.exprs[1])) bounds.insert(v);
        version_[s.name] = 0;
        define(s.name, nullptr, false, s.span);
        ddg_.nodes.back().deps = versioned(bounds);
        ctrl_.push_back(versioned(bounds));
        walk(s.body);
        ctrl_.pop_back();
        break;
      }
      case StmtKind::block: walk(s.body); break;
    }
  }

  void note_dma(const Expr* e) {
    if (!e || e->kind != ExprKind::call) return;
    if (e->op == "dma_in") {
      Mirror m{e->args[2], e->args[1], {}};
      for (const auto& v : vars_of(m.source)) m.versions[v] = version_.at(v);
      for (const auto& v : vars_of(m.index)) m.versions[v] = version_.at(v);
      mirrors_[e->args[0].name] = std::move(m);
    } else if (e->op == "apply") {
      mirrors_.erase(e->args[0].name);
    }
  }

  void propagate() {
    std::map<std::string, DdgNode*> by_id;
    for (auto& n : ddg_.nodes) by_id[n.id()] = &n;
    for (bool changed = true; changed;) {
      changed = false;
      for (auto& n : ddg_.nodes) {
        bool svm = n.svm_leaf;
        for (const auto& d : n.deps)
          if (auto it = by_id.find(d); it != by_id.end() && it->second->svm) svm = true;
        if (svm != n.svm) {
          n.svm = svm;
          changed = true;
        }
      }
    }
    std::vector<std::string> work(address_roots_.begin(), address_roots_.end());
    while (!work.empty()) {
      const std::string id = work.back();
      work.pop_back();
      auto it = by_id.find(id);
      if (it == by_id.end() || it->second->address) continue;
      it->second->address = true;
      for (const auto& d : it->second->deps) work.push_back(d);
      for (const auto& c : it->second->ctrl) work.push_back(c);
    }
  }

  Ddg ddg_;
  std::map<std::string, int> version_;
  std::map<std::string, int> counter_;
  std::vector<std::set<std::string>> ctrl_;
  std::map<std::string, Mirror> mirrors_;
  std::set<std::string> address_roots_;
};

// ---------------------------------------------------------------------------
// Backward slicing

class Backward {
 public:
  std::vector<Stmt> slice(const std::vector<Stmt>& body, std::set<std::string>& needed) {
    std::vector<Stmt> out;
    for (auto it = body.rbegin(); it != body.rend(); ++it) {
      std::vector<Stmt> part = slice_stmt(*it, needed);
      for (auto p = part.rbegin(); p != part.rend(); ++p) out.push_back(std::move(*p));
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  static void add_all(std::set<std::string>& dst, const std::set<std::string>& src) {
    dst.insert(src.begin(), src.end());
  }

  /// The statement is dropped: keep only prefetches of what it touches.
  std::vector<Stmt> reduce(const Stmt& s, std::set<std::string>& needed) {
    std::vector<Touch> touches;
    for (const auto& e : s.exprs) collect_touches(e, touches);
    std::vector<Stmt> out;
    for (const auto& t : touches) {
      add_all(needed, vars_of(t.address));
      if (t.bytes) add_all(needed, vars_of(*t.bytes));
      out.push_back(prefetch_stmt(t, s.span));
    }
    return out;
  }

  std::vector<Stmt> slice_stmt(const Stmt& s, std::set<std::string>& needed) {
    switch (s.kind) {
      case StmtKind::decl: {
        if (s.decl_type == Type::local_array) return {};
        const bool live = needed.count(s.name) != 0;
        if (!live && !referenced_.count(s.name)) return reduce(s, needed);
        Stmt keep = s;
        std::vector<Stmt> out;
        if (live && !s.exprs.empty()) {
          if (contains_call(s.exprs[0], "dma_in") || contains_call(s.exprs[0], "dma_out"))
            throw CompileError(s.span, "unsupported shape: a DMA handle feeds an address");
          keep.exprs[0] = helper_view(s.exprs[0]);
          needed.erase(s.name);
          add_all(needed, vars_of(s.exprs[0]));
          add_all(referenced_, vars_of(s.exprs[0]));
        } else {
          keep.exprs.clear();
          needed.erase(s.name);
          out = reduce(s, needed);
        }
        out.insert(out.begin(), std::move(keep));
        return out;
      }
      case StmtKind::assign: {
        const Expr& lhs = s.exprs[0];
        if (lhs.kind == ExprKind::var && needed.count(lhs.name)) {
          if (contains_call(s.exprs[1], "dma_in") || contains_call(s.exprs[1], "dma_out"))
            throw CompileError(s.span, "unsupported shape: a DMA handle feeds an address");
          Stmt keep = s;
          keep.exprs[1] = helper_view(s.exprs[1]);
          if (s.op == "=") needed.erase(lhs.name);
          add_all(needed, vars_of(s.exprs[1]));
          referenced_.insert(lhs.name);
          add_all(referenced_, vars_of(s.exprs[1]));
          return {keep};
        }
        if (is_svm_load(lhs)) {
          // A store: prefetch its target, then whatever the value reads.
          std::vector<Touch> touches;
          for (const auto& a : lhs.args) collect_touches(a, touches);
          touches.push_back(Touch{address_of(lhs), std::nullopt});
          collect_touches(s.exprs[1], touches);
          std::vector<Stmt> out;
          for (const auto& t : touches) {
            add_all(needed, vars_of(t.address));
            out.push_back(prefetch_stmt(t, s.span));
          }
          return out;
        }
        return reduce(s, needed);
      }
      case StmtKind::expr: return reduce(s, needed);
      case StmtKind::if_: {
        std::set<std::string> n_then = needed, n_else = needed;
        Stmt keep = s;
        keep.body = slice(s.body, n_then);
        keep.else_body = slice(s.else_body, n_else);
        keep.has_else = !keep.else_body.empty();
        if (keep.body.empty() && keep.else_body.empty()) return {};
        needed = n_then;
        add_all(needed, n_else);
        return with_condition(std::move(keep), needed);
      }
      case StmtKind::for_:
      case StmtKind::parallel_for:
      case StmtKind::prefetch_window: {
        std::set<std::string> entry = needed;
        std::vector<Stmt> body;
        for (;;) {
          std::set<std::string> n = entry;
          body = slice(s.body, n);
          n.erase(s.name);
          std::set<std::string> next = entry;
          add_all(next, n);
          if (next == entry) break;
          entry = std::move(next);
        }
        if (body.empty()) return {};
        Stmt keep = s;
        keep.body = std::move(body);
        if (keep.kind == StmtKind::parallel_for) keep.kind = StmtKind::prefetch_window;
        needed = entry;
        return with_condition(std::move(keep), needed);
      }
      case StmtKind::block: {
        Stmt keep = s;
        keep.body = slice(s.body, needed);
        if (keep.body.empty()) return {};
        return {keep};
      }
    }
    return {};
  }

  /// A retained conditional or loop evaluates its condition or bounds in the
  /// helper, so their operands become needed.
  std::vector<Stmt> with_condition(Stmt keep, std::set<std::string>& needed) {
    for (auto& e : keep.exprs) {
      add_all(needed, vars_of(e));
      add_all(referenced_, vars_of(e));
      e = helper_view(e);
    }
    return {keep};
  }

  std::set<std::string> referenced_;
};

// ---------------------------------------------------------------------------
// Pruning

/// Address as a linear combination of opaque terms plus a constant.
struct Linear {
  std::map<std::string, std::int64_t> terms;
  std::map<std::string, Expr> term_expr;
  std::int64_t constant = 0;
  std::string key() const {
    std::string k;
    for (const auto& [t, c] : terms)
      if (c != 0) k += std::to_string(c) + "*" + t + ";";
    return k;
  }
};

inline Linear linearize(const Expr& e) {
  Linear l;
  if (e.kind == ExprKind::literal) {
    l.constant = e.value;
    return l;
  }
  if (e.kind == ExprKind::binary && (e.op == "+" || e.op == "-")) {
    Linear a = linearize(e.args[0]);
    Linear b = linearize(e.args[1]);
    const std::int64_t sign = e.op == "+" ? 1 : -1;
    for (const auto& [t, c] : b.terms) {
      a.terms[t] += sign * c;
      a.term_expr.emplace(t, b.term_expr.at(t));
    }
    a.constant += sign * b.constant;
    return a;
  }
  if (e.kind == ExprKind::binary && e.op == "*") {
    for (int side = 0; side < 2; ++side)
      if (e.args[1 - side].kind == ExprKind::literal) {
        Linear a = linearize(e.args[side]);
        const std::int64_t k = e.args[1 - side].value;
        for (auto& [t, c] : a.terms) c *= k;
        a.constant *= k;
        return a;
      }
  }
  const std::string t = dsl::to_source(e);
  l.terms[t] = 1;
  l.term_expr.emplace(t, e);
  return l;
}

/// Guaranteed power-of-two alignment of an expression's value (capped at a
/// page). Shared-memory parameters are page-aligned host allocations.
class Alignment {
 public:
  static constexpr std::int64_t kPage = 4096;

  explicit Alignment(const Kernel& k) {
    for (const auto& p : k.params)
      if (p.type == Type::svm_ptr) known_[p.name] = kPage;
    count_assignments(k.body);
  }

  void learn(const Stmt& decl) {
    if (decl.kind == StmtKind::decl && !decl.exprs.empty() && assigned_.count(decl.name) == 0)
      known_[decl.name] = of(decl.exprs[0]);
  }

  std::int64_t of(const Expr& e) const {
    switch (e.kind) {
      case ExprKind::literal: return lowbit(e.value);
      case ExprKind::var: {
        auto it = known_.find(e.name);
        return it == known_.end() ? 1 : it->second;
      }
      case ExprKind::binary:
        if (e.op == "+" || e.op == "-") return std::min(of(e.args[0]), of(e.args[1]));
        if (e.op == "*") return std::min(kPage, of(e.args[0]) * of(e.args[1]));
        if (e.op == "<<" && e.args[1].kind == ExprKind::literal && e.args[1].value >= 0 && e.args[1].value < 13)
          return std::min(kPage, of(e.args[0]) << e.args[1].value);
        return 1;
      default: return 1;
    }
  }

  /// Largest alignment guaranteed for sum(c_i * term_i).
  std::int64_t of(const Linear& l) const {
    std::int64_t a = kPage;
    for (const auto& [t, c] : l.terms)
      if (c != 0) a = std::min(a, std::min(kPage, of(l.term_expr.at(t)) * lowbit(c)));
    return a;
  }

 private:
  static std::int64_t lowbit(std::int64_t v) {
    if (v == 0) return kPage;
    const std::uint64_t u = static_cast<std::uint64_t>(v < 0 ? -v : v);
    return std::min<std::int64_t>(kPage, static_cast<std::int64_t>(u & (~u + 1)));
  }

  void count_assignments(const std::vector<Stmt>& body) {
    for (const auto& s : body) {
      if (s.kind == StmtKind::assign && s.exprs[0].kind == ExprKind::var) assigned_.insert(s.exprs[0].name);
      count_assignments(s.body);
      count_assignments(s.else_body);
    }
  }

  std::map<std::string, std::int64_t> known_;
  std::set<std::string> assigned_;
};

class Pruner {
 public:
  explicit Pruner(const Kernel& k) : align_(k) {}

  std::vector<Stmt> run(const std::vector<Stmt>& body) {
    std::vector<Item> avail;
    return block(body, avail);
  }

 private:
  struct Item {
    std::string base;  // linear key of the non-constant part
    std::int64_t constant;
    std::int64_t align;
    std::string span_key;  // non-empty for prefetch_span
    std::set<std::string> vars;
  };

  Item item_for(const Expr& addr, const Expr* bytes) {
    const Linear l = linearize(addr);
    Item it{l.key(), l.constant, align_.of(l), {}, vars_of(addr)};
    if (bytes) {
      it.span_key = dsl::to_source(addr) + "#" + dsl::to_source(*bytes);
      for (const auto& v : vars_of(*bytes)) it.vars.insert(v);
    }
    return it;
  }

  static bool same_page(const Item& a, const Item& b) {
    if (a.base != b.base) return false;
    const std::int64_t al = std::min(a.align, b.align);
    auto blk = [al](std::int64_t c) { return c >= 0 ? c / al : -((-c + al - 1) / al); };
    return blk(a.constant) == blk(b.constant);
  }

  static bool covered(const std::vector<Item>& avail, const Item& x) {
    for (const auto& a : avail) {
      if (!x.span_key.empty()) {
        if (a.span_key == x.span_key) return true;
        continue;
      }
      if (a.span_key.empty() && same_page(a, x)) return true;
    }
    return false;
  }

  void kill(std::vector<Item>& avail, const std::string& var) {
    avail.erase(std::remove_if(avail.begin(), avail.end(), [&](const Item& i) { return i.vars.count(var) != 0; }),
                avail.end());
  }

  void loads_in(const Expr& e, std::vector<Item>& avail) {
    for (const auto& a : e.args) loads_in(a, avail);
    if (is_svm_load(e)) avail.push_back(item_for(address_of(e), nullptr));
  }

  static void assigned_in(const std::vector<Stmt>& body, std::set<std::string>& out) {
    for (const auto& s : body) {
      if (s.kind == StmtKind::assign && s.exprs[0].kind == ExprKind::var) out.insert(s.exprs[0].name);
      if (s.kind == StmtKind::decl) out.insert(s.name);
      if (s.kind == StmtKind::for_ || s.kind == StmtKind::prefetch_window) out.insert(s.name);
      assigned_in(s.body, out);
      assigned_in(s.else_body, out);
    }
  }

  std::vector<Stmt> block(const std::vector<Stmt>& body, std::vector<Item>& avail) {
    std::vector<Stmt> out;
    for (const auto& s : body) {
      if (s.kind == StmtKind::expr && s.exprs[0].kind == ExprKind::call &&
          (s.exprs[0].op == "prefetch" || s.exprs[0].op == "prefetch_span")) {
        const Expr& call = s.exprs[0];
        for (const auto& a : call.args) loads_in(a, avail);
        Item it = item_for(call.args[0], call.op == "prefetch_span" ? &call.args[1] : nullptr);
        if (covered(avail, it)) continue;
        avail.push_back(std::move(it));
        out.push_back(s);
        continue;
      }
      Stmt keep = s;
      switch (s.kind) {
        case StmtKind::decl:
        case StmtKind::assign:
          for (const auto& e : s.exprs) loads_in(e, avail);
          if (s.kind == StmtKind::decl) {
            kill(avail, s.name);
            align_.learn(s);
          } else if (s.exprs[0].kind == ExprKind::var) {
            kill(avail, s.exprs[0].name);
          }
          break;
        case StmtKind::if_: {
          for (const auto& e : s.exprs) loads_in(e, avail);
          std::vector<Item> a = avail, b = avail;
          keep.body = block(s.body, a);
          keep.else_body = block(s.else_body, b);
          std::set<std::string> changed;
          assigned_in(s.body, changed);
          assigned_in(s.else_body, changed);
          for (const auto& v : changed) kill(avail, v);
          break;
        }
        case StmtKind::for_:
        case StmtKind::prefetch_window:
        case StmtKind::parallel_for: {
          for (const auto& e : s.exprs) loads_in(e, avail);
          std::set<std::string> changed;
          assigned_in(s.body, changed);
          changed.insert(s.name);
          for (const auto& v : changed) kill(avail, v);
          std::vector<Item> inner = s.kind == StmtKind::for_ ? avail : std::vector<Item>{};
          keep.body = block(s.body, inner);
          break;
        }
        case StmtKind::block: {
          keep.body = block(s.body, avail);
          break;
        }
        case StmtKind::expr:
          for (const auto& e : s.exprs) loads_in(e, avail);
          break;
      }
      out.push_back(std::move(keep));
    }
    return out;
  }

  Alignment align_;
};

// ---------------------------------------------------------------------------
// Driver

struct Compiled {
  Kernel worker;  // with progress stores
  Kernel helper;  // prefetching helper thread
  Ddg ddg;
};

inline bool has_parallel_loop(const std::vector<Stmt>& body) {
  for (const auto& s : body) {
    if (s.kind == StmtKind::parallel_for) return true;
    if (has_parallel_loop(s.body) || has_parallel_loop(s.else_body)) return true;
  }
  return false;
}

/// The helper paces itself against the iterations of one parallel loop that
/// sits directly in the kernel body.
inline void check_shape(const Kernel& k) {
  for (const auto& s : k.body)
    if (s.kind == StmtKind::parallel_for) return;
  for (const auto& s : k.body)
    if (has_parallel_loop(s.body) || has_parallel_loop(s.else_body))
      throw CompileError(s.span, "unsupported shape: the parallel loop must be a top-level statement");
  throw CompileError({1, 1}, "unsupported shape: kernel '" + k.name + "' has no parallel loop");
}

inline void insert_progress(std::vector<Stmt>& body) {
  for (auto& s : body) {
    if (s.kind == StmtKind::parallel_for) {
      Expr iv = Expr::ref(s.name, s.span);
      s.body.insert(s.body.begin(), make_call_stmt("progress", {iv}, s.span));
      return;
    }
    insert_progress(s.body);
    insert_progress(s.else_body);
  }
}

inline void used_vars(const std::vector<Stmt>& body, std::set<std::string>& used) {
  for (const auto& s : body) {
    for (std::size_t i = 0; i < s.exprs.size(); ++i) {
      // Writing a plain variable is not a use of it.
      if (s.kind == StmtKind::assign && i == 0 && s.exprs[0].kind == ExprKind::var) continue;
      collect_vars(s.exprs[i], used);
    }
    used_vars(s.body, used);
    used_vars(s.else_body, used);
  }
}

/// Removes statements pruning left without effect: empty conditionals and
/// loops, and declarations or assignments nothing reads. Shared-memory loads
/// in what is removed are kept as prefetches. Returns whether anything changed.
inline bool tidy(std::vector<Stmt>& body, const std::set<std::string>& used) {
  bool changed = false;
  std::vector<Stmt> out;
  for (auto& s : body) {
    changed = tidy(s.body, used) || changed;
    changed = tidy(s.else_body, used) || changed;
    if (s.kind == StmtKind::if_ && s.has_else && s.else_body.empty()) {
      s.has_else = false;
      changed = true;
    }
    bool dead = false;
    switch (s.kind) {
      case StmtKind::if_:
      case StmtKind::for_:
      case StmtKind::prefetch_window:
      case StmtKind::block: dead = s.body.empty() && s.else_body.empty(); break;
      case StmtKind::decl: dead = s.decl_type != Type::local_array && !used.count(s.name); break;
      case StmtKind::assign: dead = s.exprs[0].kind == ExprKind::var && !used.count(s.exprs[0].name); break;
      default: break;
    }
    if (!dead) {
      out.push_back(std::move(s));
      continue;
    }
    changed = true;
    std::vector<Touch> touches;
    for (const auto& e : s.exprs) collect_touches(e, touches);
    for (const auto& t : touches) out.push_back(prefetch_stmt(t, s.span));
  }
  body = std::move(out);
  return changed;
}

inline Compiled compile(const Kernel& source) {
  check_shape(source);
  Compiled out;
  Kernel annotated = source;
  Forward fwd(annotated);
  fwd.run(annotated.body);
  out.ddg = fwd.take();

  Backward bwd;
  std::set<std::string> needed;
  std::vector<Stmt> body = bwd.slice(annotated.body, needed);
  for (;;) {
    body = Pruner(source).run(body);
    std::set<std::string> used;
    used_vars(body, used);
    if (!tidy(body, used)) break;
  }
  out.helper.name = source.name + "_pht";
  out.helper.params = source.params;
  out.helper.body = std::move(body);

  out.worker = source;
  insert_progress(out.worker.body);
  return out;
}

}  // namespace svmsim::pht
