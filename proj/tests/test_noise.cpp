#include <doctest.h>

#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pwlsi/errors.hpp"
#include "pwlsi/noise.hpp"
#include "test_support.hpp"

using namespace pwlsi;

namespace {

double integrate(const std::function<double(double)>& f, double lo, double hi) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 15, 1e-12);
}

/// Mean and second moment from the CDF: E X = int (1 - F) - int F,
/// E X^2 = 2 int x (1 - F) over x > 0 + 2 int |x| F over x < 0.
std::pair<double, double> cdf_moments(const NoiseFamily& fam) {
  auto upper = [&](double x) { return 1.0 - fam.cdf(x); };
  auto lower = [&](double x) { return fam.cdf(x); };
  double mean = 0.0, second = 0.0;
  for (auto [a, b] : {std::pair{0.0, 2.0}, {2.0, 8.0}, {8.0, 1e300}}) {
    const double hi = b > 1e299 ? std::numeric_limits<double>::infinity() : b;
    mean += integrate(upper, a, hi) - integrate([&](double x) { return lower(-x); }, a, hi);
    second += 2.0 * integrate([&](double x) { return x * upper(x); }, a, hi) +
              2.0 * integrate([&](double x) { return x * lower(-x); }, a, hi);
  }
  return {mean, second};
}

double sample_skewness(const Vector& v) {
  const double m = v.mean();
  const double var = (v.array() - m).square().mean();
  return (v.array() - m).cube().mean() / std::pow(var, 1.5);
}

}  // namespace

TEST_CASE("family names round-trip") {
  for (Family f : kAllFamilies) CHECK(parse_family(to_string(f)) == f);
  CHECK(to_string(Family::StudentT) == "student_t");
  CHECK_THROWS_AS(parse_family("cauchy"), DomainError);
}

TEST_CASE("Gaussian limit has zero distance") {
  for (Family f : kAllFamilies) {
    const NoiseFamily fam(f, gaussian_limit(f));
    CHECK(wasserstein1_to_std_normal(fam) <= 1e-6);
    CHECK(calibrate(f, 0.0).shape() == gaussian_limit(f));
  }
  CHECK(calibrate(Family::SkewNormal, 0.0).shape() == 0.0);
  CHECK(calibrate(Family::StudentT, 0.0).shape() > 1e6);
}

TEST_CASE("calibration round trip for every family and distance") {
  for (Family f : kAllFamilies)
    for (double target : {0.01, 0.02, 0.03, 0.04}) {
      CAPTURE(to_string(f));
      CAPTURE(target);
      const NoiseFamily fam = calibrate(f, target);
      CHECK(std::abs(wasserstein1_to_std_normal(fam) - target) <= 1e-5);
      CHECK(std::abs(testing::trapezoid_w1(fam) - target) <= 1e-4);
      if (f == Family::GenNormalSteep) CHECK(fam.shape() < 2.0);
      if (f == Family::GenNormalFlat) CHECK(fam.shape() > 2.0);
    }
}

TEST_CASE("standardized laws have mean 0 and variance 1") {
  for (Family f : kAllFamilies)
    for (double target : {0.02, 0.04}) {
      CAPTURE(to_string(f));
      const auto [mean, second] = cdf_moments(calibrate(f, target));
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(std::abs(second - 1.0) <= 1e-6);
    }
}

TEST_CASE("shape grows with the target distance") {
  CHECK(calibrate(Family::ExpNormal, 0.01).shape() < calibrate(Family::ExpNormal, 0.04).shape());
  CHECK(calibrate(Family::SkewNormal, 0.01).shape() < calibrate(Family::SkewNormal, 0.04).shape());
  CHECK(calibrate(Family::StudentT, 0.01).shape() > calibrate(Family::StudentT, 0.04).shape());
  CHECK(calibrate(Family::GenNormalSteep, 0.01).shape() > calibrate(Family::GenNormalSteep, 0.04).shape());
  CHECK(calibrate(Family::GenNormalFlat, 0.01).shape() < calibrate(Family::GenNormalFlat, 0.04).shape());
}

TEST_CASE("calibration target range") {
  CHECK_THROWS_AS(calibrate(Family::SkewNormal, 0.5), DomainError);
  CHECK_THROWS_AS(calibrate(Family::SkewNormal, -0.01), DomainError);
  // the upper end of the accepted range is reachable by every family
  for (Family f : kAllFamilies) CHECK(std::abs(wasserstein1_to_std_normal(calibrate(f, 0.1)) - 0.1) <= 1e-5);
}

TEST_CASE("sampling moments, determinism and skew") {
  for (Family f : kAllFamilies) {
    CAPTURE(to_string(f));
    const NoiseFamily fam = calibrate(f, 0.04);
    const Vector v = fam.sample(1000000, 99);
    const double mean = v.mean();
    const double var = (v.array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.005);
    CHECK(std::abs(var - 1.0) < 0.01);
    CHECK(fam.sample(50, 3) == fam.sample(50, 3));
  }
  CHECK(sample_skewness(calibrate(Family::SkewNormal, 0.04).sample(200000, 5)) > 0.0);
  CHECK(sample_skewness(calibrate(Family::ExpNormal, 0.04).sample(200000, 5)) > 0.0);
}
