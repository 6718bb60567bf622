#pragma once

// Recursive-descent parser for the kernel language. Scoping and typing are
// checked while parsing, so every tree it returns is well-scoped and typed.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "svmsim/dsl/ast.hpp"
#include "svmsim/dsl/lexer.hpp"

namespace svmsim::dsl {

struct ParseOptions {
  /// Accept the intrinsics and constructs only generated code uses.
  bool generated = false;
};

class Parser {
 public:
  Parser(std::string_view src, ParseOptions opt = {}) : toks_(lex(src)), opt_(opt) {}

  Kernel parse_kernel() {
    Kernel k;
    expect_kw("kernel");
    k.name = expect(Tok::ident, "kernel name").text;
    expect_punct("(");
    push_scope();
    if (!at_punct(")")) {
      do {
        Param p;
        p.span = peek().span;
        p.type = parse_scalar_type();
        p.name = expect(Tok::ident, "parameter name").text;
        declare(p.name, p.type, p.span, false);
        k.params.push_back(p);
      } while (accept_punct(","));
    }
    expect_punct(")");
    k.body = parse_block_body();
    pop_scope();
    if (peek().kind != Tok::end) fail(peek(), "trailing input after kernel");
    return k;
  }

 private:
  struct Symbol {
    Type type;
    bool constant;
  };

  // --- token helpers ---------------------------------------------------------
  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool at_punct(std::string_view p) const { return peek().kind == Tok::punct && peek().text == p; }
  bool at_kw(std::string_view k) const { return peek().kind == Tok::keyword && peek().text == k; }
  bool accept_punct(std::string_view p) {
    if (!at_punct(p)) return false;
    next();
    return true;
  }
  [[noreturn]] static void fail(const Token& t, const std::string& msg) { throw CompileError(t.span, msg); }
  [[noreturn]] static void unexpected(const Token& t, const std::string& wanted) {
    fail(t, "expected " + wanted + " but found '" + t.text + "'");
  }
  const Token& expect(Tok kind, const std::string& what) {
    if (peek().kind != kind) unexpected(peek(), what);
    return next();
  }
  void expect_punct(std::string_view p) {
    if (!at_punct(p)) unexpected(peek(), "'" + std::string(p) + "'");
    next();
  }
  void expect_kw(std::string_view k) {
    if (!at_kw(k)) unexpected(peek(), "'" + std::string(k) + "'");
    next();
  }

  // --- scopes ------------------------------------------------------------------
  void push_scope() { scopes_.emplace_back(); }
  void pop_scope() { scopes_.pop_back(); }
  void declare(const std::string& name, Type t, Span at, bool constant) {
    if (find_intrinsic(name)) throw CompileError(at, "'" + name + "' is an intrinsic");
    if (scopes_.back().count(name)) throw CompileError(at, "redeclaration of '" + name + "'");
    for (const auto& sc : scopes_)
      if (sc.count(name)) throw CompileError(at, "'" + name + "' shadows an outer declaration");
    scopes_.back()[name] = Symbol{t, constant};
  }
  const Symbol& lookup(const std::string& name, Span at) const {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it)
      if (auto f = it->find(name); f != it->end()) return f->second;
    throw CompileError(at, "use of undeclared variable '" + name + "'");
  }

  Type parse_scalar_type() {
    if (at_kw("int")) {
      next();
      return Type::int_;
    }
    if (at_kw("svm")) {
      next();
      expect_kw("int");
      expect_punct("*");
      return Type::svm_ptr;
    }
    unexpected(peek(), "a type");
  }

  // --- statements --------------------------------------------------------------
  std::vector<Stmt> parse_block_body() {
    expect_punct("{");
    push_scope();
    std::vector<Stmt> out;
    while (!at_punct("}")) {
      if (peek().kind == Tok::end) unexpected(peek(), "'}'");
      out.push_back(parse_stmt());
    }
    next();
    pop_scope();
    return out;
  }

  Stmt parse_stmt() {
    const Token& t = peek();
    Stmt s;
    s.span = t.span;
    if (at_kw("int") || at_kw("svm") || at_kw("const")) {
      const bool constant = at_kw("const");
      if (constant) next();
      s.kind = StmtKind::decl;
      s.decl_type = parse_scalar_type();
      if (constant && s.decl_type != Type::int_) fail(t, "only int constants are supported");
      if (constant) s.op = "const";
      const Token& name = expect(Tok::ident, "variable name");
      s.name = name.text;
      if (accept_punct("=")) {
        Expr init = parse_expr();
        check_assignable(s.decl_type, init);
        s.exprs.push_back(std::move(init));
      } else if (constant) {
        unexpected(peek(), "'=' (constants need an initializer)");
      }
      expect_punct(";");
      declare(s.name, s.decl_type, name.span, constant);
      return s;
    }
    if (at_kw("local")) {
      next();
      expect_kw("int");
      s.kind = StmtKind::decl;
      s.decl_type = Type::local_array;
      const Token& name = expect(Tok::ident, "array name");
      s.name = name.text;
      expect_punct("[");
      const Token& n = expect(Tok::number, "array size");
      if (n.value <= 0 || n.value > (1 << 20)) fail(n, "array size out of range");
      s.array_words = static_cast<std::uint32_t>(n.value);
      expect_punct("]");
      expect_punct(";");
      declare(s.name, Type::local_array, name.span, false);
      return s;
    }
    if (at_kw("if")) return parse_if();
    if (at_kw("for") || at_kw("parallel_for") || at_kw("prefetch_window")) {
      const std::string kw = next().text;
      s.kind = kw == "for" ? StmtKind::for_ : kw == "parallel_for" ? StmtKind::parallel_for : StmtKind::prefetch_window;
      if (s.kind == StmtKind::prefetch_window && !opt_.generated) fail(t, "'prefetch_window' is reserved for generated code");
      if (s.kind != StmtKind::for_) {
        if (in_parallel_ || loop_depth_ > 0) fail(t, "parallel loops cannot be nested in other loops");
      }
      expect_punct("(");
      const Token& var = expect(Tok::ident, "loop variable");
      s.name = var.text;
      expect_kw("in");
      s.exprs.push_back(parse_int_expr());
      expect_punct("..");
      s.exprs.push_back(parse_int_expr());
      expect_punct(")");
      push_scope();
      declare(s.name, Type::int_, var.span, true);
      const bool was_parallel = in_parallel_;
      if (s.kind == StmtKind::for_) ++loop_depth_;
      else in_parallel_ = true;
      s.body = parse_block_body();
      if (s.kind == StmtKind::for_) --loop_depth_;
      in_parallel_ = was_parallel;
      pop_scope();
      return s;
    }
    if (at_punct("{")) {
      s.kind = StmtKind::block;
      s.body = parse_block_body();
      return s;
    }
    // assignment or call
    Expr lhs = parse_expr();
    if (at_punct("=") || at_punct("+=") || at_punct("-=")) {
      s.kind = StmtKind::assign;
      s.op = next().text;
      check_lvalue(lhs);
      Expr rhs = parse_expr();
      const Type target = lhs.kind == ExprKind::var ? lookup(lhs.name, lhs.span).type : Type::int_;
      if (s.op != "=" && target != Type::int_ && target != Type::svm_ptr) fail(t, "compound assignment to non-scalar");
      if (s.op != "=" && rhs.type != Type::int_) throw CompileError(rhs.span, "compound assignment needs an int operand");
      check_assignable(target, rhs);
      s.exprs.push_back(std::move(lhs));
      s.exprs.push_back(std::move(rhs));
      expect_punct(";");
      return s;
    }
    if (lhs.kind != ExprKind::call) fail(t, "expression statement must be a call or an assignment");
    s.kind = StmtKind::expr;
    s.exprs.push_back(std::move(lhs));
    expect_punct(";");
    return s;
  }

  Stmt parse_if() {
    Stmt s;
    s.span = peek().span;
    expect_kw("if");
    s.kind = StmtKind::if_;
    expect_punct("(");
    Expr c = parse_expr();
    if (c.type == Type::void_ || c.type == Type::local_array) throw CompileError(c.span, "condition must be a value");
    s.exprs.push_back(std::move(c));
    expect_punct(")");
    s.body = parse_block_body();
    if (at_kw("else")) {
      next();
      s.has_else = true;
      if (at_kw("if")) s.else_body.push_back(parse_if());
      else s.else_body = parse_block_body();
    }
    return s;
  }

  void check_lvalue(const Expr& e) {
    if (e.kind == ExprKind::var) {
      const Symbol& sym = lookup(e.name, e.span);
      if (sym.constant) throw CompileError(e.span, "assignment to constant '" + e.name + "'");
      if (sym.type == Type::local_array) throw CompileError(e.span, "cannot assign a whole array");
      return;
    }
    if (e.kind == ExprKind::index || e.kind == ExprKind::deref) return;
    throw CompileError(e.span, "left-hand side is not assignable");
  }

  static void check_assignable(Type target, const Expr& v) {
    if (v.type != Type::int_ && v.type != Type::svm_ptr)
      throw CompileError(v.span, std::string("cannot assign a value of type ") + to_string(v.type));
    (void)target;
  }

  // --- expressions -------------------------------------------------------------
  Expr parse_int_expr() {
    Expr e = parse_expr();
    if (e.type != Type::int_) throw CompileError(e.span, "expected an int expression");
    return e;
  }

  Expr parse_expr() { return parse_or(); }

  Expr binary(std::string op, Expr a, Expr b, Span at) {
    auto scalar = [&](const Expr& x) {
      if (x.type != Type::int_ && x.type != Type::svm_ptr)
        throw CompileError(x.span, std::string("operand of '") + op + "' must be a value");
    };
    scalar(a);
    scalar(b);
    Type t = Type::int_;
    if (op == "+") {
      if (a.type == Type::svm_ptr && b.type == Type::svm_ptr) throw CompileError(at, "cannot add two pointers");
      if (a.type == Type::svm_ptr || b.type == Type::svm_ptr) t = Type::svm_ptr;
    } else if (op == "-") {
      if (b.type == Type::svm_ptr) throw CompileError(at, "cannot subtract a pointer");
      t = a.type;
    } else if (op == "*" || op == "/" || op == "%" || op == "<<" || op == ">>") {
      if (a.type == Type::svm_ptr || b.type == Type::svm_ptr)
        throw CompileError(at, "arithmetic operator '" + op + "' on a pointer");
    }
    Expr e = Expr::bin(std::move(op), std::move(a), std::move(b));
    e.type = t;
    e.span = at;
    return e;
  }

  Expr parse_or() {
    Expr e = parse_and();
    while (at_punct("||")) {
      const Span at = next().span;
      e = binary("||", std::move(e), parse_and(), at);
    }
    return e;
  }
  Expr parse_and() {
    Expr e = parse_cmp();
    while (at_punct("&&")) {
      const Span at = next().span;
      e = binary("&&", std::move(e), parse_cmp(), at);
    }
    return e;
  }
  Expr parse_cmp() {
    Expr e = parse_shift();
    for (auto op : {"==", "!=", "<=", ">=", "<", ">"})
      if (at_punct(op)) {
        const Span at = next().span;
        return binary(op, std::move(e), parse_shift(), at);
      }
    return e;
  }
  Expr parse_shift() {
    Expr e = parse_add();
    while (at_punct("<<") || at_punct(">>")) {
      const Token& t = next();
      e = binary(t.text, std::move(e), parse_add(), t.span);
    }
    return e;
  }
  Expr parse_add() {
    Expr e = parse_mul();
    while (at_punct("+") || at_punct("-")) {
      const Token& t = next();
      e = binary(t.text, std::move(e), parse_mul(), t.span);
    }
    return e;
  }
  Expr parse_mul() {
    Expr e = parse_unary();
    while (at_punct("*") || at_punct("/") || at_punct("%")) {
      const Token& t = next();
      e = binary(t.text, std::move(e), parse_unary(), t.span);
    }
    return e;
  }
  Expr parse_unary() {
    const Token& t = peek();
    if (at_punct("-") || at_punct("!")) {
      next();
      Expr inner = parse_unary();
      if (inner.type != Type::int_) throw CompileError(inner.span, "unary operator on a non-int");
      Expr e;
      e.kind = ExprKind::unary;
      e.op = t.text;
      e.span = t.span;
      e.args.push_back(std::move(inner));
      return e;
    }
    if (at_punct("*")) {
      next();
      Expr inner = parse_unary();
      if (inner.type != Type::svm_ptr) throw CompileError(t.span, "dereference of a non-svm pointer");
      Expr e;
      e.kind = ExprKind::deref;
      e.span = t.span;
      e.args.push_back(std::move(inner));
      return e;
    }
    return parse_postfix();
  }
  Expr parse_postfix() {
    Expr e = parse_primary();
    while (at_punct("[")) {
      const Span at = next().span;
      Expr idx = parse_int_expr();
      expect_punct("]");
      if (e.type != Type::svm_ptr && e.type != Type::local_array) throw CompileError(at, "indexing a non-array value");
      Expr ix;
      ix.kind = ExprKind::index;
      ix.span = at;
      ix.type = Type::int_;
      ix.args.push_back(std::move(e));
      ix.args.push_back(std::move(idx));
      e = std::move(ix);
    }
    if (e.type == Type::local_array && !allow_array_value_)
      throw CompileError(e.span, "array '" + e.name + "' used as a value");
    return e;
  }
  Expr parse_primary() {
    const Token& t = peek();
    if (t.kind == Tok::number) {
      next();
      return Expr::lit(t.value, t.span);
    }
    if (t.kind == Tok::ident) {
      next();
      if (at_punct("(")) return parse_call(t);
      Expr e = Expr::ref(t.text, t.span);
      e.type = lookup(t.text, t.span).type;
      if (e.type == Type::local_array && !at_punct("[") && !allow_array_value_)
        throw CompileError(t.span, "array '" + t.text + "' used as a value");
      return e;
    }
    if (at_punct("(")) {
      next();
      const bool saved = allow_array_value_;
      allow_array_value_ = false;
      Expr e = parse_expr();
      allow_array_value_ = saved;
      expect_punct(")");
      return e;
    }
    unexpected(t, "an expression");
  }
  Expr parse_call(const Token& name) {
    const IntrinsicInfo* info = find_intrinsic(name.text);
    if (!info) fail(name, "unknown function '" + name.text + "'");
    if (info->pht_only && !opt_.generated) fail(name, "'" + name.text + "' is reserved for generated code");
    expect_punct("(");
    std::vector<Expr> args;
    const bool saved = allow_array_value_;
    if (!at_punct(")")) {
      do {
        allow_array_value_ = true;
        args.push_back(parse_expr());
        allow_array_value_ = saved;
      } while (accept_punct(","));
    }
    allow_array_value_ = saved;
    expect_punct(")");
    if (static_cast<int>(args.size()) != info->arity)
      fail(name, "'" + name.text + "' takes " + std::to_string(info->arity) + " arguments");
    check_call_args(name, args);
    Expr e = Expr::call(name.text, std::move(args), name.span);
    e.type = info->result;
    return e;
  }
  static void want(const Expr& a, Type t, const std::string& fn) {
    const bool ok = t == Type::local_array ? (a.kind == ExprKind::var && a.type == t) : a.type == t;
    if (!ok) throw CompileError(a.span, "argument of '" + fn + "' must be " + to_string(t));
  }
  static void check_call_args(const Token& name, const std::vector<Expr>& a) {
    const std::string& fn = name.text;
    if (fn == "dma_in") {
      want(a[0], Type::local_array, fn), want(a[1], Type::int_, fn), want(a[2], Type::svm_ptr, fn), want(a[3], Type::int_, fn);
    } else if (fn == "dma_out") {
      want(a[0], Type::svm_ptr, fn), want(a[1], Type::local_array, fn), want(a[2], Type::int_, fn), want(a[3], Type::int_, fn);
    } else if (fn == "apply") {
      want(a[0], Type::local_array, fn), want(a[1], Type::int_, fn), want(a[2], Type::local_array, fn);
      want(a[3], Type::int_, fn), want(a[4], Type::int_, fn);
    } else if (fn == "prefetch") {
      want(a[0], Type::svm_ptr, fn);
    } else if (fn == "prefetch_span") {
      want(a[0], Type::svm_ptr, fn), want(a[1], Type::int_, fn);
    } else {
      for (const auto& x : a) want(x, Type::int_, fn);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  ParseOptions opt_;
  std::vector<std::map<std::string, Symbol>> scopes_;
  bool in_parallel_ = false;
  int loop_depth_ = 0;
  bool allow_array_value_ = false;
};

inline Kernel parse(std::string_view src, ParseOptions opt = {}) { return Parser(src, opt).parse_kernel(); }

}  // namespace svmsim::dsl
