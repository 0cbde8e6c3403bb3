#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "features.hpp"
#include "log.hpp"

namespace confound {

enum class Target { Click, SaleGivenClick };

inline const char* to_string(Target t) { return t == Target::Click ? "click" : "sale_given_click"; }

struct DayRange {
  int first = 0;
  int last = 0;
  friend bool operator==(const DayRange&, const DayRange&) = default;
};

/// Logistic model P(y=1 | features) = sigmoid(beta[encode(...)]).
struct FittedModel {
  FeatureSpec features;
  std::vector<double> beta;
  Target target = Target::Click;
  DayRange trained_on;
  std::size_t n_train = 0;

  /// Probability from the hot coordinate; indices are validated by encode.
  double predict(int x1, int x2, int a, int d = 0) const { return sigmoid(beta[encode(features, x1, x2, a, d)]); }
};

/// A model with beta = 0 everywhere (predicts 0.5).
inline FittedModel zero_model(const FeatureSpec& fs, Target target = Target::Click) {
  fs.validate();
  return {fs, std::vector<double>(dim(fs), 0.0), target, {}, 0};
}

/// Per-coordinate trials and successes; sufficient statistics of a one-hot design.
struct CellCounts {
  std::vector<std::uint64_t> trials;
  std::vector<std::uint64_t> successes;
};

namespace detail {

inline bool usable(const Interaction& r, Target target) { return target == Target::Click || r.click; }

inline bool outcome(const Interaction& r, Target target) {
  if (target == Target::Click) return r.click;
  if (!r.sale) throw std::invalid_argument("sale-given-click target on a record without a logged sale outcome");
  return *r.sale;
}

inline void check_spec(const FeatureSpec& fs, const LogView& log) {
  fs.validate();
  if (!(fs.spec == log.spec)) throw std::invalid_argument("feature spec is inconsistent with the log's categorical spec");
}

}  // namespace detail

inline CellCounts tally(const LogView& log, const FeatureSpec& fs, Target target) {
  detail::check_spec(fs, log);
  CellCounts counts{std::vector<std::uint64_t>(dim(fs), 0), std::vector<std::uint64_t>(dim(fs), 0)};
  for (const auto& r : log.records) {
    if (!detail::usable(r, target)) continue;
    const std::size_t i = encode(fs, r.x1, r.x2, r.a, r.d);
    ++counts.trials[i];
    if (detail::outcome(r, target)) ++counts.successes[i];
  }
  return counts;
}

struct FitOptions {
  double pseudo_count = 0.0;  ///< added to both clicks and non-clicks of every cell
};

/// Maximum-likelihood logistic fit of a saturated one-hot design.
///
/// The likelihood separates per coordinate, so beta[cell] is the empirical
/// log-odds of the cell. Cells whose rate is 0 or 1 are clipped to the logit
/// cap; unvisited cells get 0.
inline FittedModel fit(const LogView& log, const FeatureSpec& fs, Target target, const FitOptions& opts = {}) {
  if (log.empty()) throw std::invalid_argument("fit: empty log slice");
  const CellCounts counts = tally(log, fs, target);
  FittedModel m{fs, std::vector<double>(dim(fs), 0.0), target, {log.records.front().day, log.records.back().day}, 0};
  for (std::size_t i = 0; i < m.beta.size(); ++i) {
    const double n = static_cast<double>(counts.trials[i]);
    const double s = static_cast<double>(counts.successes[i]);
    m.n_train += counts.trials[i];
    const double alpha = opts.pseudo_count;
    if (n + 2.0 * alpha <= 0.0) continue;
    const double yes = s + alpha;
    const double no = n - s + alpha;
    if (yes <= 0.0) {
      m.beta[i] = -kLogitCap;
    } else if (no <= 0.0) {
      m.beta[i] = kLogitCap;
    } else {
      m.beta[i] = clamp_logit(std::log(yes) - std::log(no));
    }
  }
  return m;
}

namespace detail {

/// log sigma(z) and log(1 - sigma(z)) without cancellation.
inline double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

}  // namespace detail

/// Bernoulli log-likelihood of the records used by the model's target.
inline double log_likelihood(const FittedModel& m, const LogView& log) {
  detail::check_spec(m.features, log);
  double ll = 0.0;
  for (const auto& r : log.records) {
    if (!detail::usable(r, m.target)) continue;
    const double z = clamp_logit(m.beta[encode(m.features, r.x1, r.x2, r.a, r.d)]);
    ll += detail::outcome(r, m.target) ? detail::log_sigmoid(z) : detail::log_sigmoid(-z);
  }
  return ll;
}

/// d loglik / d beta_j = sum_i (y_i - p_i) [hot(i) == j].
inline std::vector<double> gradient(const FittedModel& m, const LogView& log) {
  detail::check_spec(m.features, log);
  std::vector<double> g(m.beta.size(), 0.0);
  for (const auto& r : log.records) {
    if (!detail::usable(r, m.target)) continue;
    const std::size_t j = encode(m.features, r.x1, r.x2, r.a, r.d);
    g[j] += (detail::outcome(r, m.target) ? 1.0 : 0.0) - sigmoid(m.beta[j]);
  }
  return g;
}

}  // namespace confound
