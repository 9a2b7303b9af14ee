#pragma once

#include <cctype>
#include <charconv>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpr/error.hpp"
#include "mpr/stl/formula.hpp"

namespace mpr::stl {

/// Returns the arity of a known predicate, or nullopt if the name is unknown.
using PredicateLookup = std::function<std::optional<std::size_t>(std::string_view)>;

namespace detail {

// Grammar, lowest precedence first:
//   formula  := conj ('|' conj)*
//   conj     := until ('&' until)*
//   until    := unary ('U' interval unary)?
//   unary    := '!' unary | ('G'|'F') interval '(' formula ')' | 'A' '[' ident ']' '(' formula ')'
//             | 'true' | ident '(' ident (',' ident)* ')' | '(' formula ')'
//   interval := '[' int ',' (int | 'inf') ']'
class Parser {
 public:
  Parser(std::string_view text, const PredicateLookup& lookup) : text_(text), lookup_(lookup) {}

  Formula parseAll() {
    Formula f = parseOr();
    skipSpace();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const { throw ParseError(message, pos_); }

  void skipSpace() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool peek(char c) {
    skipSpace();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  void expect(char c) {
    if (!peek(c)) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  static bool identStart(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool identChar(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

  std::string identifier() {
    skipSpace();
    if (pos_ >= text_.size() || !identStart(text_[pos_])) fail("expected identifier");
    std::size_t start = pos_;
    while (pos_ < text_.size() && identChar(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  // Operator keyword: a single letter immediately followed by '['.
  bool keyword(char letter) {
    skipSpace();
    if (pos_ + 1 < text_.size() && text_[pos_] == letter && text_[pos_ + 1] == '[') {
      ++pos_;
      return true;
    }
    return false;
  }

  std::size_t number() {
    skipSpace();
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc{}) fail("expected step index");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return value;
  }

  StepInterval interval() {
    std::size_t start = pos_;
    expect('[');
    std::size_t lo = number();
    expect(',');
    skipSpace();
    std::size_t hi = kUnbounded;
    if (text_.substr(pos_, 3) == "inf") {
      pos_ += 3;
    } else {
      hi = number();
    }
    expect(']');
    if (lo > hi) throw ParseError("malformed interval: lower bound exceeds upper bound", start);
    return StepInterval(lo, hi);
  }

  Formula parseOr() {
    Formula f = parseAnd();
    while (peek('|')) {
      ++pos_;
      f = disjunction(f, parseAnd());
    }
    return f;
  }

  Formula parseAnd() {
    Formula f = parseUntil();
    while (peek('&')) {
      ++pos_;
      f = conjunction(f, parseUntil());
    }
    return f;
  }

  Formula parseUntil() {
    Formula f = parseUnary();
    if (keyword('U')) {
      StepInterval i = interval();
      f = until(i, f, parseUnary());
    }
    return f;
  }

  Formula parseUnary() {
    skipSpace();
    if (peek('!')) {
      ++pos_;
      return negation(parseUnary());
    }
    if (peek('(')) {
      ++pos_;
      Formula f = parseOr();
      expect(')');
      return f;
    }
    if (keyword('G') || keyword('F')) {
      char op = text_[pos_ - 1];
      StepInterval i = interval();
      expect('(');
      Formula f = parseOr();
      expect(')');
      return op == 'G' ? globally(i, f) : eventually(i, f);
    }
    if (keyword('A')) {
      expect('[');
      std::string var = identifier();
      expect(']');
      expect('(');
      Formula f = parseOr();
      expect(')');
      return forAll(var, f);
    }
    std::size_t start = pos_;
    std::string name = identifier();
    if (name == "true" && !peek('(')) return top();
    if (!peek('(')) throw ParseError("expected '(' after predicate name '" + name + "'", pos_);
    ++pos_;
    std::vector<std::string> args;
    if (!peek(')')) {
      args.push_back(identifier());
      while (peek(',')) {
        ++pos_;
        args.push_back(identifier());
      }
    }
    expect(')');
    if (lookup_) {
      auto arity = lookup_(name);
      if (!arity) throw ParseError("unknown predicate '" + name + "'", start);
      if (*arity != args.size()) {
        throw ParseError("predicate '" + name + "' expects " + std::to_string(*arity) + " argument(s), got " +
                             std::to_string(args.size()),
                         start);
      }
    }
    return predicate(std::move(name), std::move(args));
  }

  std::string_view text_;
  const PredicateLookup& lookup_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses a formula. With an empty lookup every predicate name is accepted.
inline Formula parseFormula(std::string_view text, const PredicateLookup& lookup = {}) {
  return detail::Parser(text, lookup).parseAll();
}

struct NamedFormula {
  std::string name;
  Formula formula;
};

/// Parses a rules file: one `name := formula` per line; blank lines and `#` comments are skipped.
inline std::vector<NamedFormula> parseRules(std::string_view text, const PredicateLookup& lookup = {}) {
  std::vector<NamedFormula> rules;
  std::size_t lineNo = 0;
  while (!text.empty()) {
    ++lineNo;
    std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    if (line.empty()) continue;
    std::size_t sep = line.find(":=");
    if (sep == std::string_view::npos) {
      throw InputError("rules line " + std::to_string(lineNo) + ": expected 'name := formula'");
    }
    std::string_view name = line.substr(0, sep);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.remove_suffix(1);
    if (name.empty()) throw InputError("rules line " + std::to_string(lineNo) + ": empty rule name");
    try {
      rules.push_back({std::string(name), parseFormula(line.substr(sep + 2), lookup)});
    } catch (const ParseError& e) {
      throw InputError("rules line " + std::to_string(lineNo) + ": " + e.what());
    }
  }
  return rules;
}

}  // namespace mpr::stl
