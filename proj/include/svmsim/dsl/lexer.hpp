#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "svmsim/dsl/ast.hpp"

namespace svmsim::dsl {

enum class Tok { ident, number, keyword, punct, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::int64_t value = 0;
  Span span;
};

inline bool is_keyword(std::string_view s) {
  static constexpr std::string_view kw[] = {"kernel", "int",          "svm",  "local", "const", "if",
                                            "else",   "for",          "in",   "parallel_for",
                                            "prefetch_window"};
  for (auto k : kw)
    if (k == s) return true;
  return false;
}

inline std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    Token t;
    t.span = {line, col};
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      t.text = std::string(src.substr(i, j - i));
      t.kind = is_keyword(t.text) ? Tok::keyword : Tok::ident;
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      int base = 10;
      if (c == '0' && i + 1 < src.size() && (src[i + 1] == 'x' || src[i + 1] == 'X')) {
        base = 16;
        j += 2;
      }
      while (j < src.size() && std::isxdigit(static_cast<unsigned char>(src[j])) &&
             (base == 16 || std::isdigit(static_cast<unsigned char>(src[j]))))
        ++j;
      t.text = std::string(src.substr(i, j - i));
      if (base == 16 && t.text.size() == 2) throw CompileError(t.span, "malformed number '" + t.text + "'");
      t.value = std::stoll(base == 16 ? t.text.substr(2) : t.text, nullptr, base);
      t.kind = Tok::number;
      if (j < src.size() && (std::isalpha(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        throw CompileError(t.span, "malformed number '" + std::string(src.substr(i, j - i + 1)) + "'");
      advance(j - i);
    } else {
      static constexpr std::string_view two[] = {"..", "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "<<", ">>"};
      t.kind = Tok::punct;
      for (auto p : two)
        if (src.substr(i, 2) == p) t.text = std::string(p);
      if (t.text.empty()) {
        static constexpr std::string_view one = "(){}[];,=+-*/%<>!";
        if (one.find(c) == std::string_view::npos)
          throw CompileError(t.span, std::string("unexpected character '") + c + "'");
        t.text = std::string(1, c);
      }
      advance(t.text.size());
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = Tok::end;
  end.text = "end of input";
  end.span = {line, col};
  out.push_back(end);
  return out;
}

}  // namespace svmsim::dsl
