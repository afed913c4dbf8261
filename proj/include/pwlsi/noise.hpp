#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "pwlsi/tensor.hpp"

namespace pwlsi {

enum class Family { SkewNormal, ExpNormal, GenNormalSteep, GenNormalFlat, StudentT };

inline constexpr std::array<Family, 5> kAllFamilies = {Family::SkewNormal, Family::ExpNormal, Family::GenNormalSteep,
                                                       Family::GenNormalFlat, Family::StudentT};

std::string to_string(Family f);
Family parse_family(const std::string& name);

/// A non-Gaussian law standardized to mean 0 and variance 1.
///
/// Shape parameters: skew normal alpha >= 0; exponentially modified normal
/// K = tau / sigma >= 0; generalized normal exponent beta (< 2 steep, > 2 flat);
/// Student t degrees of freedom nu > 2 (infinity is the normal limit).
class NoiseFamily {
 public:
  NoiseFamily(Family family, double shape);

  Family family() const { return family_; }
  double shape() const { return shape_; }
  /// Mean and standard deviation of the unstandardized law.
  double location() const { return location_; }
  double scale() const { return scale_; }

  /// CDF of the standardized law.
  double cdf(double x) const;
  /// 1 - cdf(x), computed directly so right tails keep full precision.
  double sf(double x) const;
  /// i.i.d. standardized draws.
  Vector sample(int n, std::uint64_t seed) const;

 private:
  double raw_cdf(double x) const;
  double raw_sf(double x) const;

  Family family_;
  double shape_;
  double location_ = 0.0;
  double scale_ = 1.0;
};

/// Shape value at which the family coincides with N(0, 1).
double gaussian_limit(Family f);

/// W1 = integral |F(x) - Phi(x)| dx (equal to the quantile form in 1-D),
/// adaptive Gauss-Kronrod, absolute error <= 1e-6.
double wasserstein1_to_std_normal(const NoiseFamily& fam);

/// Bisection on the shape parameter until |W1 - target| <= 1e-5.
/// target == 0 returns the Gaussian limit. Throws CalibrationError when the
/// target lies outside what the family can reach.
NoiseFamily calibrate(Family family, double target_w1);

}  // namespace pwlsi
