#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mpr/error.hpp"
#include "mpr/stl/formula.hpp"

namespace mpr::stl {

/// Default clip for model-free robustness; also the value of an empty minimum.
inline constexpr double kDefaultRhoMax = 1e3;

/// A finite trace of joint states that predicate leaves can be evaluated on.
/// `quantifiedIds` lists the vehicles a ForAll ranges over.
template <class T>
concept Trace = requires(const T& t) {
  { t.length() } -> std::convertible_to<std::size_t>;
  { t.quantifiedIds() } -> std::convertible_to<std::span<const std::string>>;
};

/// Result of evaluating a formula at one step. `truncated` is set when an
/// unbounded interval was cut at the end of the signal.
template <class V>
struct Evaluation {
  V value;
  bool truncated = false;
};

/// Qualitative semantics: values in {-1, +1}.
struct CharacteristicSemantics {
  using value_type = int;

  value_type top() const { return 1; }
  value_type negate(value_type v) const { return -v; }
  value_type max(std::span<const value_type> xs) const {
    return xs.empty() ? -1 : *std::max_element(xs.begin(), xs.end());
  }
  value_type min(std::span<const value_type> xs) const {
    return xs.empty() ? 1 : *std::min_element(xs.begin(), xs.end());
  }
  template <class Tr>
  value_type leaf(const Tr& trace, const Predicate& p, std::span<const std::string> args, std::size_t k) const {
    return trace.holds(p, args, k) ? 1 : -1;
  }
};

/// Model-free quantitative semantics: predicate leaves return their evaluation
/// function, clipped to [-rhoMax, rhoMax].
struct ModelFreeSemantics {
  using value_type = double;
  double rhoMax = kDefaultRhoMax;

  value_type top() const { return rhoMax; }
  value_type negate(value_type v) const { return -v; }
  value_type max(std::span<const value_type> xs) const {
    return xs.empty() ? -rhoMax : *std::max_element(xs.begin(), xs.end());
  }
  value_type min(std::span<const value_type> xs) const {
    return xs.empty() ? rhoMax : *std::min_element(xs.begin(), xs.end());
  }
  template <class Tr>
  value_type leaf(const Tr& trace, const Predicate& p, std::span<const std::string> args, std::size_t k) const {
    return std::clamp(trace.alpha(p, args, k), -rhoMax, rhoMax);
  }
};

/// Log-sum-exp smoothing of max, and its dual for min. Each operator node
/// with m operands overestimates max (underestimates min) by at most t*ln(m).
struct SmoothSemantics {
  using value_type = double;
  double temperature = 1.0;
  double rhoMax = kDefaultRhoMax;

  explicit SmoothSemantics(double t, double rho_max = kDefaultRhoMax) : temperature(t), rhoMax(rho_max) {
    if (!(t > 0.0)) throw InputError("smooth robustness temperature must be positive");
  }

  value_type top() const { return rhoMax; }
  value_type negate(value_type v) const { return -v; }
  value_type max(std::span<const value_type> xs) const {
    if (xs.empty()) return -rhoMax;
    const double m = *std::max_element(xs.begin(), xs.end());
    double sum = 0.0;
    for (double x : xs) sum += std::exp((x - m) / temperature);
    return m + temperature * std::log(sum);
  }
  value_type min(std::span<const value_type> xs) const {
    if (xs.empty()) return rhoMax;
    const double m = *std::min_element(xs.begin(), xs.end());
    double sum = 0.0;
    for (double x : xs) sum += std::exp((m - x) / temperature);
    return m - temperature * std::log(sum);
  }
  template <class Tr>
  value_type leaf(const Tr& trace, const Predicate& p, std::span<const std::string> args, std::size_t k) const {
    return std::clamp(trace.alpha(p, args, k), -rhoMax, rhoMax);
  }
};

namespace detail {

template <class Sem, Trace Tr>
class Evaluator {
 public:
  using V = typename Sem::value_type;

  Evaluator(const Sem& sem, const Tr& trace) : sem_(sem), trace_(trace) {}

  V eval(const Formula& f, std::size_t k) {
    return std::visit([&](const auto& node) { return evalNode(node, k); },
                      static_cast<const FormulaNode::variant&>(f.node()));
  }

  bool truncated() const { return truncated_; }

 private:
  V evalNode(const True&, std::size_t) { return sem_.top(); }

  V evalNode(const Predicate& p, std::size_t k) {
    if (bindings_.empty()) return sem_.leaf(trace_, p, std::span<const std::string>(p.args), k);
    std::vector<std::string> args = p.args;
    for (auto& a : args) {
      for (auto it = bindings_.rbegin(); it != bindings_.rend(); ++it) {
        if (it->first == a) {
          a = it->second;
          break;
        }
      }
    }
    return sem_.leaf(trace_, p, std::span<const std::string>(args), k);
  }

  V evalNode(const Not& n, std::size_t k) { return sem_.negate(eval(n.arg, k)); }

  V evalNode(const Or& o, std::size_t k) {
    const V xs[2] = {eval(o.lhs, k), eval(o.rhs, k)};
    return sem_.max(xs);
  }

  // a & b is evaluated as !(!a | !b).
  V evalNode(const And& a, std::size_t k) {
    const V xs[2] = {sem_.negate(eval(a.lhs, k)), sem_.negate(eval(a.rhs, k))};
    return sem_.negate(sem_.max(xs));
  }

  V evalNode(const Until& u, std::size_t k) {
    return evalUntil(u.interval, k, [&](std::size_t t) { return eval(u.lhs, t); },
                     [&](std::size_t t) { return eval(u.rhs, t); });
  }

  // F_I phi := true U_I phi
  V evalNode(const Eventually& e, std::size_t k) {
    return evalUntil(e.interval, k, [&](std::size_t) { return sem_.top(); },
                     [&](std::size_t t) { return eval(e.arg, t); });
  }

  // G_I phi := !F_I !phi
  V evalNode(const Globally& g, std::size_t k) {
    return sem_.negate(evalUntil(g.interval, k, [&](std::size_t) { return sem_.top(); },
                                 [&](std::size_t t) { return sem_.negate(eval(g.arg, t)); }));
  }

  // Conjunction over the quantified vehicles, built from negation and disjunction.
  V evalNode(const ForAll& a, std::size_t k) {
    std::vector<V> negated;
    for (const std::string& id : trace_.quantifiedIds()) {
      bindings_.emplace_back(a.variable, id);
      negated.push_back(sem_.negate(eval(a.body, k)));
      bindings_.pop_back();
    }
    return sem_.negate(sem_.max(negated));
  }

  // max over tau in (k + I) of min(rhs(tau), min over tau' in (k, tau) of lhs(tau')).
  template <class Lhs, class Rhs>
  V evalUntil(const StepInterval& interval, std::size_t k, Lhs&& lhs, Rhs&& rhs) {
    const std::size_t n = trace_.length();
    if (k >= n) throw HorizonError("step " + std::to_string(k) + " is outside the signal");
    const std::size_t last = n - 1;
    std::size_t upper;
    if (interval.unbounded()) {
      upper = last;
      truncated_ = true;
    } else {
      if (interval.hi > last - k) {
        throw HorizonError("interval " + toString(interval) + " at step " + std::to_string(k) +
                           " extends past the signal end (step " + std::to_string(last) + ")");
      }
      upper = k + interval.hi;
    }
    std::vector<V> candidates;
    if (interval.lo > last - k) return sem_.max(candidates);
    const std::size_t lower = k + interval.lo;

    std::vector<V> lhsValues;  // lhs at k+1 .. upper-1
    for (std::size_t t = k + 1; t < upper; ++t) lhsValues.push_back(lhs(t));

    std::vector<V> inner;
    for (std::size_t tau = lower; tau <= upper; ++tau) {
      inner.clear();
      inner.push_back(rhs(tau));
      for (std::size_t t = k + 1; t < tau; ++t) inner.push_back(lhsValues[t - k - 1]);
      candidates.push_back(sem_.min(inner));
    }
    return sem_.max(candidates);
  }

  const Sem& sem_;
  const Tr& trace_;
  std::vector<std::pair<std::string, std::string>> bindings_;
  bool truncated_ = false;
};

}  // namespace detail

/// Evaluates `f` at step `k` under the given semantics.
template <class Sem, Trace Tr>
Evaluation<typename Sem::value_type> evaluate(const Formula& f, const Tr& trace, std::size_t k, const Sem& sem) {
  detail::Evaluator<Sem, Tr> ev(sem, trace);
  auto value = ev.eval(f, k);
  return {value, ev.truncated()};
}

template <Trace Tr>
Evaluation<int> evalCharacteristic(const Formula& f, const Tr& trace, std::size_t k) {
  return evaluate(f, trace, k, CharacteristicSemantics{});
}

template <Trace Tr>
Evaluation<double> evalModelFreeRobustness(const Formula& f, const Tr& trace, std::size_t k,
                                           double rhoMax = kDefaultRhoMax) {
  return evaluate(f, trace, k, ModelFreeSemantics{rhoMax});
}

template <Trace Tr>
Evaluation<double> evalSmoothRobustness(const Formula& f, const Tr& trace, std::size_t k, double temperature,
                                        double rhoMax = kDefaultRhoMax) {
  return evaluate(f, trace, k, SmoothSemantics(temperature, rhoMax));
}

}  // namespace mpr::stl
