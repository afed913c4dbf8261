#pragma once

#include <cstdint>

#include "pwlsi/region.hpp"
#include "pwlsi/tensor.hpp"

namespace pwlsi {

/// eta_i = 1/|A| on A, -1/|A^c| elsewhere. Throws UndefinedHypothesis
/// unless 0 < |A| < n.
Vector build_eta(const AnomalyRegion& region, int n);

struct TestStatistic {
  double value = 0.0;     // eta^T x
  double variance = 0.0;  // eta^T Sigma eta
};

TestStatistic test_statistic(const Vector& eta, const Vector& x, const CovMatrix& sigma);

/// H0: eta^T s = offset for the mean-difference contrast of a region.
struct Hypothesis {
  AnomalyRegion region;
  Vector eta;
  double variance = 0.0;
  double observed = 0.0;
  double offset = 0.0;

  double stddev() const;
};

Hypothesis make_hypothesis(const AnomalyRegion& region, const Image& x, const CovMatrix& sigma,
                           double offset = 0.0);

struct SyntheticImage {
  Image image;
  AnomalyRegion truth;
};

/// s = delta on a randomly placed square patch of side `patch_side`
/// (no patch when delta == 0), x = s + eps with eps ~ N(0, Sigma).
SyntheticImage make_synthetic(int n, double delta, int patch_side, const CovMatrix& sigma, std::uint64_t seed);

/// Sample covariance of column-per-image data with diagonal loading
/// 1e-6 * trace / n (floored at 1e-10).
CovMatrix estimate_cov(const Matrix& held_out);

}  // namespace pwlsi
