#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "categorical.hpp"

namespace confound {

/// Which action factors enter the Kronecker product.
struct ActionFactors {
  bool a = true;
  bool d = false;

  bool empty() const { return !a && !d; }
  std::string str() const {
    if (a && d) return "a,d";
    return a ? "a" : (d ? "d" : "");
  }
  friend bool operator==(const ActionFactors&, const ActionFactors&) = default;
};

/// One-hot Kronecker design: included covariates crossed with the action factors.
///
/// Coordinates use mixed radix over (x1, x2, a, d), most significant first,
/// restricted to the factors present. Every encoded vector has exactly one
/// nonzero entry, so it is represented by that coordinate's index.
struct FeatureSpec {
  CategoricalSpec spec;
  CovariateSet included;
  ActionFactors factors;

  void validate() const {
    spec.validate();
    if (factors.empty()) throw std::invalid_argument("FeatureSpec: at least one action factor required");
    if (factors.d && !spec.two_decision()) throw std::invalid_argument("FeatureSpec: decision factor requires two-decision mode");
  }

  std::string str() const {
    std::string s = included.empty() ? "" : included.str() + ",";
    return s + factors.str();
  }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

inline std::size_t dim(const FeatureSpec& fs) {
  std::size_t n = fs.included.cardinality(fs.spec);
  if (fs.factors.a) n *= static_cast<std::size_t>(fs.spec.n_actions);
  if (fs.factors.d) n *= static_cast<std::size_t>(fs.spec.decisions());
  return n;
}

/// Index of the single hot coordinate of (x1 (x) x2 (x) a (x) d) under `fs`.
inline std::size_t encode(const FeatureSpec& fs, int x1, int x2, int a, int d = 0) {
  check_index(x1, fs.spec.k1, "x1");
  check_index(x2, fs.spec.k2, "x2");
  check_index(a, fs.spec.n_actions, "action");
  check_index(d, fs.spec.decisions(), "decision");
  std::size_t idx = fs.included.key(fs.spec, x1, x2);
  if (fs.factors.a) idx = idx * static_cast<std::size_t>(fs.spec.n_actions) + static_cast<std::size_t>(a);
  if (fs.factors.d) idx = idx * static_cast<std::size_t>(fs.spec.decisions()) + static_cast<std::size_t>(d);
  return idx;
}

}  // namespace confound
