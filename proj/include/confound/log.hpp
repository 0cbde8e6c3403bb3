#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "categorical.hpp"

namespace confound {

/// One logged impression.
struct Interaction {
  int day = 0;
  int x1 = 0;
  int x2 = 0;
  int a = 0;
  int d = 0;  ///< display decision; 0 outside two-decision mode
  double propensity = 1.0;
  bool click = false;
  std::optional<bool> sale;  ///< only recorded when click is true and sales are simulated
  char arm = 0;              ///< 'A' / 'B' during an A/B split, 0 otherwise

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Read-only window over interactions sharing a CategoricalSpec.
struct LogView {
  CategoricalSpec spec;
  std::span<const Interaction> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
};

/// Day-ordered interaction log.
class Log {
 public:
  explicit Log(CategoricalSpec spec) : spec_(spec) {}

  const CategoricalSpec& spec() const { return spec_; }
  const std::vector<Interaction>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  void append(std::span<const Interaction> batch) {
    for (const auto& r : batch)
      if (!records_.empty() && r.day < records_.back().day) throw std::invalid_argument("Log: days must be nondecreasing");
    records_.insert(records_.end(), batch.begin(), batch.end());
  }

  LogView view() const { return {spec_, records_}; }

  /// Records with first_day <= day <= last_day.
  LogView days(int first_day, int last_day) const {
    auto lo = std::lower_bound(records_.begin(), records_.end(), first_day,
                               [](const Interaction& r, int d) { return r.day < d; });
    auto hi = std::upper_bound(records_.begin(), records_.end(), last_day,
                               [](int d, const Interaction& r) { return d < r.day; });
    if (hi < lo) hi = lo;
    return {spec_, std::span<const Interaction>(records_.data() + (lo - records_.begin()), static_cast<std::size_t>(hi - lo))};
  }

  LogView day(int d) const { return days(d, d); }

 private:
  CategoricalSpec spec_;
  std::vector<Interaction> records_;
};

}  // namespace confound
