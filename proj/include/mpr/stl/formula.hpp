#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mpr/error.hpp"

namespace mpr::stl {

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

/// Closed step interval [lo, hi]; hi may be kUnbounded.
struct StepInterval {
  std::size_t lo = 0;
  std::size_t hi = kUnbounded;

  StepInterval() = default;
  StepInterval(std::size_t lo_, std::size_t hi_) : lo(lo_), hi(hi_) {
    if (lo > hi) {
      throw InputError("malformed interval: lower bound " + std::to_string(lo) +
                       " exceeds upper bound " + std::to_string(hi));
    }
  }

  bool unbounded() const noexcept { return hi == kUnbounded; }
  friend bool operator==(const StepInterval&, const StepInterval&) = default;
};

struct FormulaNode;

/// Immutable, cheaply copyable handle to an STL abstract syntax tree.
class Formula {
 public:
  explicit Formula(std::shared_ptr<const FormulaNode> node) : node_(std::move(node)) {}

  const FormulaNode& node() const noexcept { return *node_; }

  template <class T>
  const T* as() const noexcept;

  friend bool operator==(const Formula& a, const Formula& b);

 private:
  std::shared_ptr<const FormulaNode> node_;
};

struct True {
  friend bool operator==(const True&, const True&) = default;
};

/// Atomic predicate `name(arg, ...)`. Arguments are vehicle ids or variables bound by ForAll.
struct Predicate {
  std::string name;
  std::vector<std::string> args;
  friend bool operator==(const Predicate&, const Predicate&) = default;
};

struct Not {
  Formula arg;
  friend bool operator==(const Not&, const Not&) = default;
};

struct And {
  Formula lhs;
  Formula rhs;
  friend bool operator==(const And&, const And&) = default;
};

struct Or {
  Formula lhs;
  Formula rhs;
  friend bool operator==(const Or&, const Or&) = default;
};

struct Until {
  StepInterval interval;
  Formula lhs;
  Formula rhs;
  friend bool operator==(const Until&, const Until&) = default;
};

struct Eventually {
  StepInterval interval;
  Formula arg;
  friend bool operator==(const Eventually&, const Eventually&) = default;
};

struct Globally {
  StepInterval interval;
  Formula arg;
  friend bool operator==(const Globally&, const Globally&) = default;
};

/// Finite conjunction of `body` over every non-ego vehicle of the trace, with
/// `variable` substituted by the vehicle id.
struct ForAll {
  std::string variable;
  Formula body;
  friend bool operator==(const ForAll&, const ForAll&) = default;
};

struct FormulaNode : std::variant<True, Predicate, Not, And, Or, Until, Eventually, Globally, ForAll> {
  using variant::variant;
};

template <class T>
const T* Formula::as() const noexcept {
  return std::get_if<T>(static_cast<const FormulaNode::variant*>(node_.get()));
}

inline bool operator==(const Formula& a, const Formula& b) {
  if (a.node_ == b.node_) return true;
  return static_cast<const FormulaNode::variant&>(*a.node_) ==
         static_cast<const FormulaNode::variant&>(*b.node_);
}

namespace detail {
template <class T>
Formula make(T&& value) {
  return Formula(std::make_shared<const FormulaNode>(std::forward<T>(value)));
}
}  // namespace detail

inline Formula top() { return detail::make(True{}); }
inline Formula predicate(std::string name, std::vector<std::string> args) {
  return detail::make(Predicate{std::move(name), std::move(args)});
}
inline Formula negation(Formula f) { return detail::make(Not{std::move(f)}); }
inline Formula conjunction(Formula a, Formula b) { return detail::make(And{std::move(a), std::move(b)}); }
inline Formula disjunction(Formula a, Formula b) { return detail::make(Or{std::move(a), std::move(b)}); }
inline Formula until(StepInterval i, Formula a, Formula b) {
  return detail::make(Until{i, std::move(a), std::move(b)});
}
inline Formula eventually(StepInterval i, Formula f) { return detail::make(Eventually{i, std::move(f)}); }
inline Formula globally(StepInterval i, Formula f) { return detail::make(Globally{i, std::move(f)}); }
inline Formula forAll(std::string variable, Formula body) {
  return detail::make(ForAll{std::move(variable), std::move(body)});
}

inline std::string toString(const StepInterval& i) {
  return "[" + std::to_string(i.lo) + "," + (i.unbounded() ? std::string("inf") : std::to_string(i.hi)) + "]";
}

/// Prints in the grammar accepted by parseFormula. Binary operators are always
/// parenthesized so the output re-parses to the same tree.
inline std::string toString(const Formula& f) {
  struct Printer {
    std::string operator()(const True&) const { return "true"; }
    std::string operator()(const Predicate& p) const {
      std::string out = p.name + "(";
      for (std::size_t i = 0; i < p.args.size(); ++i) {
        if (i) out += ",";
        out += p.args[i];
      }
      return out + ")";
    }
    std::string operator()(const Not& n) const { return "!" + toString(n.arg); }
    std::string operator()(const And& a) const { return "(" + toString(a.lhs) + " & " + toString(a.rhs) + ")"; }
    std::string operator()(const Or& o) const { return "(" + toString(o.lhs) + " | " + toString(o.rhs) + ")"; }
    std::string operator()(const Until& u) const {
      return "(" + toString(u.lhs) + " U" + toString(u.interval) + " " + toString(u.rhs) + ")";
    }
    std::string operator()(const Eventually& e) const { return "F" + toString(e.interval) + "(" + toString(e.arg) + ")"; }
    std::string operator()(const Globally& g) const { return "G" + toString(g.interval) + "(" + toString(g.arg) + ")"; }
    std::string operator()(const ForAll& a) const { return "A[" + a.variable + "](" + toString(a.body) + ")"; }
  };
  return std::visit(Printer{}, static_cast<const FormulaNode::variant&>(f.node()));
}

/// Collects every predicate leaf in depth-first order.
inline void collectPredicates(const Formula& f, std::vector<Predicate>& out) {
  struct Walker {
    std::vector<Predicate>& out;
    void operator()(const True&) const {}
    void operator()(const Predicate& p) const { out.push_back(p); }
    void operator()(const Not& n) const { collectPredicates(n.arg, out); }
    void operator()(const And& a) const { collectPredicates(a.lhs, out); collectPredicates(a.rhs, out); }
    void operator()(const Or& o) const { collectPredicates(o.lhs, out); collectPredicates(o.rhs, out); }
    void operator()(const Until& u) const { collectPredicates(u.lhs, out); collectPredicates(u.rhs, out); }
    void operator()(const Eventually& e) const { collectPredicates(e.arg, out); }
    void operator()(const Globally& g) const { collectPredicates(g.arg, out); }
    void operator()(const ForAll& a) const { collectPredicates(a.body, out); }
  };
  std::visit(Walker{out}, static_cast<const FormulaNode::variant&>(f.node()));
}

}  // namespace mpr::stl
