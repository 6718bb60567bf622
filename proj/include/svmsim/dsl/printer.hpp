#pragma once

// Two textual forms of a kernel: source (re-parsable, canonical spacing and
// minimal parentheses) and a line-per-node tree dump.

#include <sstream>
#include <string>

#include "svmsim/dsl/ast.hpp"

namespace svmsim::dsl {

namespace detail {

inline int precedence(const Expr& e) {
  if (e.kind != ExprKind::binary) return 100;
  const std::string& op = e.op;
  if (op == "||") return 1;
  if (op == "&&") return 2;
  if (op == "==" || op == "!=" || op == "<" || op == "<=" || op == ">" || op == ">=") return 3;
  if (op == "<<" || op == ">>") return 4;
  if (op == "+" || op == "-") return 5;
  return 6;
}

}  // namespace detail

inline std::string to_source(const Expr& e) {
  switch (e.kind) {
    case ExprKind::literal: return std::to_string(e.value);
    case ExprKind::var: return e.name;
    case ExprKind::unary: {
      const std::string inner = to_source(e.args[0]);
      return e.op + (detail::precedence(e.args[0]) < 100 ? "(" + inner + ")" : inner);
    }
    case ExprKind::deref: {
      const std::string inner = to_source(e.args[0]);
      return "*" + (detail::precedence(e.args[0]) < 100 ? "(" + inner + ")" : inner);
    }
    case ExprKind::index: {
      const std::string base = to_source(e.args[0]);
      return (detail::precedence(e.args[0]) < 100 ? "(" + base + ")" : base) + "[" + to_source(e.args[1]) + "]";
    }
    case ExprKind::binary: {
      const int p = detail::precedence(e);
      std::string l = to_source(e.args[0]);
      std::string r = to_source(e.args[1]);
      // Left-associative: parenthesize a right operand of equal precedence.
      if (detail::precedence(e.args[0]) < p) l = "(" + l + ")";
      if (detail::precedence(e.args[1]) <= p) r = "(" + r + ")";
      if (p == 3 && detail::precedence(e.args[0]) == 3) l = "(" + to_source(e.args[0]) + ")";
      return l + " " + e.op + " " + r;
    }
    case ExprKind::call: {
      std::string s = e.op + "(";
      for (std::size_t i = 0; i < e.args.size(); ++i) s += (i ? ", " : "") + to_source(e.args[i]);
      return s + ")";
    }
  }
  return "?";
}

namespace detail {

inline void print_body(std::ostringstream& os, const std::vector<Stmt>& body, int depth);

inline void print_stmt(std::ostringstream& os, const Stmt& s, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  switch (s.kind) {
    case StmtKind::decl:
      if (s.decl_type == Type::local_array) {
        os << pad << "local int " << s.name << "[" << s.array_words << "];\n";
      } else {
        os << pad << (s.op == "const" ? "const " : "") << (s.decl_type == Type::svm_ptr ? "svm int* " : "int ")
           << s.name;
        if (!s.exprs.empty()) os << " = " << to_source(s.exprs[0]);
        os << ";\n";
      }
      break;
    case StmtKind::assign:
      os << pad << to_source(s.exprs[0]) << " " << s.op << " " << to_source(s.exprs[1]) << ";\n";
      break;
    case StmtKind::expr: os << pad << to_source(s.exprs[0]) << ";\n"; break;
    case StmtKind::if_:
      os << pad << "if (" << to_source(s.exprs[0]) << ") {\n";
      print_body(os, s.body, depth + 1);
      if (s.has_else) {
        if (s.else_body.size() == 1 && s.else_body[0].kind == StmtKind::if_) {
          std::ostringstream inner;
          print_stmt(inner, s.else_body[0], depth);
          os << pad << "} else " << inner.str().substr(pad.size());
          return;
        }
        os << pad << "} else {\n";
        print_body(os, s.else_body, depth + 1);
      }
      os << pad << "}\n";
      break;
    case StmtKind::for_:
    case StmtKind::parallel_for:
    case StmtKind::prefetch_window: {
      const char* kw = s.kind == StmtKind::for_ ? "for" : s.kind == StmtKind::parallel_for ? "parallel_for" : "prefetch_window";
      os << pad << kw << " (" << s.name << " in " << to_source(s.exprs[0]) << " .. " << to_source(s.exprs[1])
         << ") {\n";
      print_body(os, s.body, depth + 1);
      os << pad << "}\n";
      break;
    }
    case StmtKind::block:
      os << pad << "{\n";
      print_body(os, s.body, depth + 1);
      os << pad << "}\n";
      break;
  }
}

inline void print_body(std::ostringstream& os, const std::vector<Stmt>& body, int depth) {
  for (const auto& s : body) print_stmt(os, s, depth);
}

}  // namespace detail

inline std::string to_source(const Kernel& k) {
  std::ostringstream os;
  os << "kernel " << k.name << "(";
  for (std::size_t i = 0; i < k.params.size(); ++i)
    os << (i ? ", " : "") << (k.params[i].type == Type::svm_ptr ? "svm int* " : "int ") << k.params[i].name;
  os << ") {\n";
  detail::print_body(os, k.body, 1);
  os << "}\n";
  return os.str();
}

namespace detail {

inline void dump_expr(std::ostringstream& os, const Expr& e, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  os << pad;
  switch (e.kind) {
    case ExprKind::literal: os << "literal " << e.value; break;
    case ExprKind::var: os << "var " << e.name; break;
    case ExprKind::unary: os << "unary " << e.op; break;
    case ExprKind::binary: os << "binary " << e.op; break;
    case ExprKind::index: os << (e.args[0].type == Type::svm_ptr ? "svm-load index" : "local-load index"); break;
    case ExprKind::deref: os << "svm-load deref"; break;
    case ExprKind::call: os << "call " << e.op; break;
  }
  os << " : " << to_string(e.type) << " @" << e.span.line << ":" << e.span.column << "\n";
  for (const auto& a : e.args) dump_expr(os, a, depth + 1);
}

inline void dump_body(std::ostringstream& os, const std::vector<Stmt>& body, int depth);

inline void dump_stmt(std::ostringstream& os, const Stmt& s, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  const std::string at = " @" + std::to_string(s.span.line) + ":" + std::to_string(s.span.column);
  switch (s.kind) {
    case StmtKind::decl:
      os << pad << "decl " << s.name << " : " << to_string(s.decl_type);
      if (s.decl_type == Type::local_array) os << " [" << s.array_words << "]";
      if (s.op == "const") os << " const";
      os << at << "\n";
      break;
    case StmtKind::assign: os << pad << "assign " << s.op << at << "\n"; break;
    case StmtKind::expr: os << pad << "call-stmt" << at << "\n"; break;
    case StmtKind::if_: os << pad << "if" << (s.has_else ? " (with else)" : "") << at << "\n"; break;
    case StmtKind::for_: os << pad << "for " << s.name << at << "\n"; break;
    case StmtKind::parallel_for: os << pad << "parallel_for " << s.name << at << "\n"; break;
    case StmtKind::prefetch_window: os << pad << "prefetch_window " << s.name << at << "\n"; break;
    case StmtKind::block: os << pad << "block" << at << "\n"; break;
  }
  for (const auto& e : s.exprs) dump_expr(os, e, depth + 1);
  if (!s.body.empty() || s.kind == StmtKind::block || s.kind == StmtKind::if_) {
    if (s.kind == StmtKind::if_) os << pad << "  then\n";
    dump_body(os, s.body, depth + 2);
  }
  if (s.has_else) {
    os << pad << "  else\n";
    dump_body(os, s.else_body, depth + 2);
  }
}

inline void dump_body(std::ostringstream& os, const std::vector<Stmt>& body, int depth) {
  for (const auto& s : body) dump_stmt(os, s, depth);
}

}  // namespace detail

inline std::string dump_ast(const Kernel& k) {
  std::ostringstream os;
  os << "kernel " << k.name << "\n";
  for (const auto& p : k.params) os << "  param " << p.name << " : " << to_string(p.type) << "\n";
  os << "  body\n";
  detail::dump_body(os, k.body, 2);
  return os.str();
}

}  // namespace svmsim::dsl
