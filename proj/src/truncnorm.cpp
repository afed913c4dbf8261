#include "pwlsi/truncnorm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pwlsi/errors.hpp"

namespace pwlsi {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Mills ratio sf(x)/pdf(x) by backward continued fraction; used for x >= 20.
double mills_ratio(double x) {
  double t = x;
  for (int k = 60; k >= 1; --k) t = x + k / t;
  return 1.0 / t;
}

}  // namespace

TruncationSet::TruncationSet(std::vector<Interval> intervals) {
  for (const auto& iv : intervals) add(iv);
}

TruncationSet TruncationSet::real_line() {
  const double inf = std::numeric_limits<double>::infinity();
  return TruncationSet({{-inf, inf}});
}

void TruncationSet::add(Interval iv) {
  if (std::isnan(iv.lower) || std::isnan(iv.upper)) throw DomainError("truncation interval has NaN bound");
  if (!(iv.lower < iv.upper)) return;
  auto it = std::lower_bound(intervals_.begin(), intervals_.end(), iv,
                             [](const Interval& a, const Interval& b) { return a.lower < b.lower; });
  it = intervals_.insert(it, iv);
  // Merge with the predecessor, then absorb successors.
  if (it != intervals_.begin() && std::prev(it)->upper >= it->lower) {
    auto prev = std::prev(it);
    prev->upper = std::max(prev->upper, it->upper);
    it = intervals_.erase(it);
    it = std::prev(it);
  }
  auto next = std::next(it);
  while (next != intervals_.end() && next->lower <= it->upper) {
    it->upper = std::max(it->upper, next->upper);
    next = intervals_.erase(next);
  }
}

bool TruncationSet::contains(double t, double tol) const {
  return std::any_of(intervals_.begin(), intervals_.end(),
                     [&](const Interval& iv) { return t >= iv.lower - tol && t <= iv.upper + tol; });
}

double TruncationSet::length_within(double lo, double hi) const {
  double total = 0.0;
  for (const auto& iv : intervals_) total += std::max(0.0, std::min(hi, iv.upper) - std::max(lo, iv.lower));
  return total;
}

std::string TruncationSet::to_string() const {
  std::string out;
  for (const auto& iv : intervals_) {
    if (!out.empty()) out += " U ";
    out += "[" + std::to_string(iv.lower) + ", " + std::to_string(iv.upper) + "]";
  }
  return out.empty() ? "{}" : out;
}

double log_normal_sf(double x) {
  if (std::isnan(x)) return x;
  if (x == std::numeric_limits<double>::infinity()) return kNegInf;
  if (x < -1.0) return std::log1p(-0.5 * std::erfc(-x / std::numbers::sqrt2));
  if (x < 20.0) return std::log(0.5 * std::erfc(x / std::numbers::sqrt2));
  const double log_pdf = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
  return log_pdf + std::log(mills_ratio(x));
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double log_normal_mass(double lower, double upper) {
  if (!(lower < upper)) return kNegInf;
  if (lower >= 1.0) {
    const double la = log_normal_sf(lower), lb = log_normal_sf(upper);
    if (la == kNegInf) return kNegInf;
    return la + std::log1p(-std::exp(lb - la));
  }
  if (upper <= -1.0) return log_normal_mass(-upper, -lower);
  // Near the centre erf differences keep relative accuracy.
  return std::log(0.5 * (std::erf(upper / std::numbers::sqrt2) - std::erf(lower / std::numbers::sqrt2)));
}

double tn_two_sided_p(double t, double variance, const TruncationSet& set, double mean, bool* degenerate) {
  if (!(variance > 0.0)) throw DomainError("tn_two_sided_p: variance must be positive");
  if (degenerate) *degenerate = false;
  const double sigma = std::sqrt(variance);
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  if (!set.contains(t, tol)) throw DomainError("tn_two_sided_p: statistic lies outside the truncation set");
  const double cut = std::abs(t - mean) / sigma;
  double log_total = kNegInf, log_tail = kNegInf;
  for (const auto& iv : set.intervals()) {
    const double lo = (iv.lower - mean) / sigma, hi = (iv.upper - mean) / sigma;
    log_total = log_add(log_total, log_normal_mass(lo, hi));
    // {|u| >= cut} = (-inf, -cut] U [cut, inf)
    log_tail = log_add(log_tail, log_normal_mass(lo, std::min(hi, -cut)));
    log_tail = log_add(log_tail, log_normal_mass(std::max(lo, cut), hi));
  }
  if (log_total == kNegInf || !std::isfinite(log_total)) {
    if (degenerate) *degenerate = true;
    return 1.0;
  }
  if (cut == 0.0) return 1.0;
  return std::clamp(std::exp(log_tail - log_total), 0.0, 1.0);
}

double p_naive(double t, double variance) {
  if (!(variance > 0.0)) throw DomainError("p_naive: variance must be positive");
  return std::erfc(std::abs(t) / std::sqrt(2.0 * variance));
}

double p_bonferroni(double p_naive_value, int n) {
  if (n < 1) throw DomainError("p_bonferroni: n must be >= 1");
  if (!(p_naive_value >= 0.0 && p_naive_value <= 1.0)) throw DomainError("p_bonferroni: p must lie in [0, 1]");
  if (p_naive_value == 0.0) return 0.0;
  // Scaling by 2^n is exact; ldexp saturates to +inf instead of overflowing.
  return std::min(1.0, std::ldexp(p_naive_value, n));
}

}  // namespace pwlsi
