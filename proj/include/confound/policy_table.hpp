#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "categorical.hpp"

namespace confound {

/// Row-stochastic action table over contexts (x1, x2).
///
/// Rows range over joint actions (a, d) flattened as a * n_decisions + d.
/// When `visibility` excludes a covariate the rows are constant across it,
/// i.e. the policy has no edge from that covariate into the action.
struct Policy {
  CategoricalSpec spec;
  std::vector<double> probs;
  CovariateSet visibility;
  std::optional<double> epsilon;
  std::string source;

  std::size_t row_offset(int x1, int x2) const {
    return (static_cast<std::size_t>(x1) * static_cast<std::size_t>(spec.k2) + static_cast<std::size_t>(x2)) *
           static_cast<std::size_t>(spec.joint_actions());
  }
  std::span<const double> row(int x1, int x2) const {
    return {probs.data() + row_offset(x1, x2), static_cast<std::size_t>(spec.joint_actions())};
  }
  std::span<double> row(int x1, int x2) {
    return {probs.data() + row_offset(x1, x2), static_cast<std::size_t>(spec.joint_actions())};
  }
  double prob(int x1, int x2, int joint_action) const { return probs[row_offset(x1, x2) + static_cast<std::size_t>(joint_action)]; }

  void validate() const {
    const int J = spec.joint_actions();
    if (probs.size() != spec.contexts() * static_cast<std::size_t>(J))
      throw std::invalid_argument("Policy: probability table has wrong size");
    for (int x1 = 0; x1 < spec.k1; ++x1) {
      for (int x2 = 0; x2 < spec.k2; ++x2) {
        double total = 0.0;
        for (double p : row(x1, x2)) {
          if (!(p >= 0.0)) throw std::invalid_argument("Policy: negative or NaN probability");
          total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("Policy: row does not sum to 1");
        const int ref1 = visibility.x1 ? x1 : 0;
        const int ref2 = visibility.x2 ? x2 : 0;
        auto ref = row(ref1, ref2);
        auto cur = row(x1, x2);
        for (int j = 0; j < J; ++j)
          if (ref[static_cast<std::size_t>(j)] != cur[static_cast<std::size_t>(j)])
            throw std::invalid_argument("Policy: rows vary across a covariate outside its visibility");
      }
    }
  }
};

}  // namespace confound
