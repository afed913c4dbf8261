#pragma once

#include <string>
#include <vector>

namespace pwlsi {

struct Interval {
  double lower;
  double upper;

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Sorted union of disjoint, non-empty closed intervals; bounds may be infinite.
class TruncationSet {
 public:
  TruncationSet() = default;
  /// Sorts and merges overlapping or touching intervals; drops empty ones.
  explicit TruncationSet(std::vector<Interval> intervals);
  static TruncationSet real_line();

  /// Adds an interval and restores the invariants.
  void add(Interval iv);

  const std::vector<Interval>& intervals() const { return intervals_; }
  std::size_t size() const { return intervals_.size(); }
  bool empty() const { return intervals_.empty(); }
  bool contains(double t, double tol = 0.0) const;
  /// Total finite length inside [lo, hi].
  double length_within(double lo, double hi) const;
  std::string to_string() const;

 private:
  std::vector<Interval> intervals_;
};

/// log P(N(0,1) >= x), accurate far into both tails.
double log_normal_sf(double x);
/// log P(lower <= N(0,1) <= upper); -inf for an empty interval.
double log_normal_mass(double lower, double upper);
/// log(exp(a) + exp(b)).
double log_add(double a, double b);

/// P(|X - mean| >= |t - mean| | X in set) for X ~ N(mean, variance) restricted
/// to `set`. `t` must lie in the set. When the set carries no representable
/// mass, returns 1 and sets *degenerate.
double tn_two_sided_p(double t, double variance, const TruncationSet& set, double mean = 0.0,
                      bool* degenerate = nullptr);

/// 2 * P(N(0,1) >= |t| / sigma)
double p_naive(double t, double variance);

/// min(1, p * 2^n), exact in binary floating point.
double p_bonferroni(double p_naive_value, int n);

}  // namespace pwlsi
