#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace confound {

/// Logits are clamped to this magnitude wherever they become probabilities.
inline constexpr double kLogitCap = 15.0;

inline double clamp_logit(double z) { return std::clamp(z, -kLogitCap, kLogitCap); }

inline double sigmoid(double z) {
  z = clamp_logit(z);
  return 1.0 / (1.0 + std::exp(-z));
}

inline double logit(double p) { return clamp_logit(std::log(p) - std::log1p(-p)); }

/// Cardinalities of the two covariates, the action and the optional display decision.
struct CategoricalSpec {
  int k1 = 5;
  int k2 = 5;
  int n_actions = 10;
  std::optional<int> n_decisions;

  int decisions() const { return n_decisions.value_or(1); }
  bool two_decision() const { return n_decisions.has_value(); }
  /// Number of joint (a, d) choices; equals n_actions outside two-decision mode.
  int joint_actions() const { return n_actions * decisions(); }
  std::size_t contexts() const { return static_cast<std::size_t>(k1) * static_cast<std::size_t>(k2); }

  void validate() const {
    if (k1 < 2 || k2 < 2 || n_actions < 2)
      throw std::invalid_argument("CategoricalSpec: k1, k2 and n_actions must all be >= 2");
    if (n_decisions && *n_decisions < 2)
      throw std::invalid_argument("CategoricalSpec: n_decisions must be >= 2 when present");
  }

  friend bool operator==(const CategoricalSpec&, const CategoricalSpec&) = default;
};

/// A subset of the covariates {x1, x2}; used both for model features and policy visibility.
struct CovariateSet {
  bool x1 = false;
  bool x2 = false;

  static constexpr CovariateSet none() { return {}; }
  static constexpr CovariateSet x1_only() { return {true, false}; }
  static constexpr CovariateSet x2_only() { return {false, true}; }
  static constexpr CovariateSet both() { return {true, true}; }

  bool empty() const { return !x1 && !x2; }
  bool contains(CovariateSet other) const { return (x1 || !other.x1) && (x2 || !other.x2); }
  CovariateSet operator|(CovariateSet o) const { return {x1 || o.x1, x2 || o.x2}; }

  /// Number of distinct keys this subset induces over (x1, x2).
  std::size_t cardinality(const CategoricalSpec& s) const {
    return static_cast<std::size_t>(x1 ? s.k1 : 1) * static_cast<std::size_t>(x2 ? s.k2 : 1);
  }
  /// Mixed-radix key of (x1, x2) restricted to this subset, x1 most significant.
  std::size_t key(const CategoricalSpec& s, int v1, int v2) const {
    std::size_t k = 0;
    if (x1) k = static_cast<std::size_t>(v1);
    if (x2) k = k * static_cast<std::size_t>(s.k2) + static_cast<std::size_t>(v2);
    return k;
  }

  std::string str() const {
    if (x1 && x2) return "x1,x2";
    if (x1) return "x1";
    if (x2) return "x2";
    return "none";
  }

  /// Accepts forms such as "x1", "X1,X2", "{X1, X2}", "{}", "none".
  static CovariateSet parse(std::string_view text) {
    CovariateSet out;
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      if (token == "x1") {
        out.x1 = true;
      } else if (token == "x2") {
        out.x2 = true;
      } else if (token != "none") {
        throw std::invalid_argument("unknown covariate '" + token + "' (expected x1, x2 or none)");
      }
      token.clear();
    };
    for (char ch : text) {
      if (ch == ',' || ch == ' ' || ch == '{' || ch == '}' || ch == '+') {
        flush();
      } else {
        token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      }
    }
    flush();
    return out;
  }

  friend bool operator==(const CovariateSet&, const CovariateSet&) = default;
};

/// Lowest-index argmax.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline void check_index(int value, int bound, const char* what) {
  if (value < 0 || value >= bound)
    throw std::out_of_range(std::string(what) + " index " + std::to_string(value) + " out of range [0, " +
                            std::to_string(bound) + ")");
}

}  // namespace confound
