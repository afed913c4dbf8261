#include "pwlsi/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/distributions/skew_normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "pwlsi/errors.hpp"
#include "pwlsi/truncnorm.hpp"

namespace pwlsi {

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// P(|Y| <= |x|) for density proportional to exp(-|y|^beta).
double gennorm_core(double beta, double x) {
  const double log_z = beta * std::log(std::abs(x));
  // |x|^beta underflows for large beta near 0; gamma_p(a, z) ~ z^a / Gamma(a + 1) there.
  if (log_z < -500.0) return std::exp(log_z / beta - std::lgamma(1.0 + 1.0 / beta));
  return boost::math::gamma_p(1.0 / beta, std::exp(log_z));
}

/// P(|Y| > |x|), without cancellation in the tails.
double gennorm_outer(double beta, double x) {
  const double log_z = beta * std::log(std::abs(x));
  if (log_z < -500.0) return 1.0 - gennorm_core(beta, x);
  return boost::math::gamma_q(1.0 / beta, std::exp(log_z));
}

struct Bracket {
  double lo;
  double hi;
  bool increasing;  // W1 increases with the parameter
};

// Parameter searched by bisection; Student t is searched in 1/nu.
Bracket bracket_for(Family f) {
  switch (f) {
    case Family::SkewNormal: return {0.0, 50.0, true};
    case Family::ExpNormal: return {0.0, 5.0, true};
    case Family::GenNormalSteep: return {0.5, 2.0, false};
    case Family::GenNormalFlat: return {2.0, 100.0, true};
    case Family::StudentT: return {0.0, 0.4, true};
  }
  throw DomainError("unknown family");
}

double shape_from_search(Family f, double p) {
  if (f == Family::StudentT) return p == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / p;
  return p;
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::SkewNormal: return "skewnorm";
    case Family::ExpNormal: return "exponorm";
    case Family::GenNormalSteep: return "gennorm_steep";
    case Family::GenNormalFlat: return "gennorm_flat";
    case Family::StudentT: return "student_t";
  }
  return "unknown";
}

Family parse_family(const std::string& name) {
  for (Family f : kAllFamilies)
    if (to_string(f) == name) return f;
  throw DomainError("unknown noise family '" + name + "'");
}

double gaussian_limit(Family f) {
  switch (f) {
    case Family::SkewNormal:
    case Family::ExpNormal: return 0.0;
    case Family::GenNormalSteep:
    case Family::GenNormalFlat: return 2.0;
    case Family::StudentT: return std::numeric_limits<double>::infinity();
  }
  throw DomainError("unknown family");
}

NoiseFamily::NoiseFamily(Family family, double shape) : family_(family), shape_(shape) {
  switch (family) {
    case Family::SkewNormal: {
      if (!(shape >= 0.0) || !std::isfinite(shape)) throw DomainError("skewnorm shape must be finite and >= 0");
      const double delta = shape / std::sqrt(1.0 + shape * shape);
      location_ = delta * std::sqrt(2.0 / std::numbers::pi);
      scale_ = std::sqrt(1.0 - 2.0 * delta * delta / std::numbers::pi);
      break;
    }
    case Family::ExpNormal:
      if (!(shape >= 0.0) || !std::isfinite(shape)) throw DomainError("exponorm shape must be finite and >= 0");
      location_ = shape;
      scale_ = std::sqrt(1.0 + shape * shape);
      break;
    case Family::GenNormalSteep:
    case Family::GenNormalFlat:
      if (!(shape > 0.0) || !std::isfinite(shape)) throw DomainError("gennorm exponent must be positive");
      if (family == Family::GenNormalSteep && shape > 2.0) throw DomainError("gennorm_steep exponent must be <= 2");
      if (family == Family::GenNormalFlat && shape < 2.0) throw DomainError("gennorm_flat exponent must be >= 2");
      location_ = 0.0;
      scale_ = std::sqrt(std::tgamma(3.0 / shape) / std::tgamma(1.0 / shape));
      break;
    case Family::StudentT:
      if (!(shape > 2.0)) throw DomainError("student_t needs more than 2 degrees of freedom");
      location_ = 0.0;
      scale_ = std::isinf(shape) ? 1.0 : std::sqrt(shape / (shape - 2.0));
      break;
  }
}

double NoiseFamily::raw_cdf(double x) const {
  switch (family_) {
    case Family::SkewNormal:
      if (shape_ == 0.0) return std_normal_cdf(x);
      return boost::math::cdf(boost::math::skew_normal_distribution<double>(0.0, 1.0, shape_), x);
    case Family::ExpNormal: {
      if (shape_ == 0.0) return std_normal_cdf(x);
      // Phi(x) - exp(-x/K + 1/(2K^2)) Phi(x - 1/K), exponent taken in log space.
      const double inv = 1.0 / shape_;
      const double log_term = -x * inv + 0.5 * inv * inv + log_normal_sf(inv - x);
      return std::clamp(std_normal_cdf(x) - std::exp(log_term), 0.0, 1.0);
    }
    case Family::GenNormalSteep:
    case Family::GenNormalFlat: {
      if (x == 0.0) return 0.5;
      const double half = 0.5 * gennorm_core(shape_, x);
      return x > 0.0 ? 0.5 + half : 0.5 - half;
    }
    case Family::StudentT:
      if (std::isinf(shape_)) return std_normal_cdf(x);
      return boost::math::cdf(boost::math::students_t_distribution<double>(shape_), x);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double NoiseFamily::raw_sf(double x) const {
  switch (family_) {
    case Family::SkewNormal:
      if (shape_ == 0.0) return std_normal_cdf(-x);
      return boost::math::cdf(complement(boost::math::skew_normal_distribution<double>(0.0, 1.0, shape_), x));
    case Family::ExpNormal: {
      if (shape_ == 0.0) return std_normal_cdf(-x);
      const double inv = 1.0 / shape_;
      const double log_term = -x * inv + 0.5 * inv * inv + log_normal_sf(inv - x);
      return std::clamp(std_normal_cdf(-x) + std::exp(log_term), 0.0, 1.0);
    }
    case Family::GenNormalSteep:
    case Family::GenNormalFlat: {
      if (x == 0.0) return 0.5;
      const double half = 0.5 * gennorm_outer(shape_, x);
      return x > 0.0 ? half : 1.0 - half;
    }
    case Family::StudentT:
      if (std::isinf(shape_)) return std_normal_cdf(-x);
      return boost::math::cdf(complement(boost::math::students_t_distribution<double>(shape_), x));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double NoiseFamily::cdf(double x) const {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return raw_cdf(location_ + scale_ * x);
}

double NoiseFamily::sf(double x) const {
  if (std::isinf(x)) return x > 0 ? 0.0 : 1.0;
  return raw_sf(location_ + scale_ * x);
}

Vector NoiseFamily::sample(int n, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  switch (family_) {
    case Family::SkewNormal: {
      const double delta = shape_ / std::sqrt(1.0 + shape_ * shape_);
      const double rest = std::sqrt(1.0 - delta * delta);
      for (int i = 0; i < n; ++i) {
        const double u0 = normal(rng), u1 = normal(rng);
        out[i] = delta * std::abs(u0) + rest * u1;
      }
      break;
    }
    case Family::ExpNormal: {
      std::exponential_distribution<double> expo(1.0);
      for (int i = 0; i < n; ++i) {
        const double u = normal(rng);
        out[i] = u + shape_ * expo(rng);
      }
      break;
    }
    case Family::GenNormalSteep:
    case Family::GenNormalFlat: {
      std::gamma_distribution<double> gamma(1.0 / shape_, 1.0);
      std::bernoulli_distribution sign(0.5);
      for (int i = 0; i < n; ++i) {
        const double mag = std::pow(gamma(rng), 1.0 / shape_);
        out[i] = sign(rng) ? mag : -mag;
      }
      break;
    }
    case Family::StudentT: {
      if (std::isinf(shape_)) {
        for (int i = 0; i < n; ++i) out[i] = normal(rng);
        break;
      }
      std::gamma_distribution<double> chi2(shape_ / 2.0, 2.0);
      for (int i = 0; i < n; ++i) {
        const double u = normal(rng);
        out[i] = u / std::sqrt(chi2(rng) / shape_);
      }
      break;
    }
  }
  return ((out.array() - location_) / scale_).matrix();
}

double wasserstein1_to_std_normal(const NoiseFamily& fam) {
  using boost::math::quadrature::gauss_kronrod;
  // Right of zero both laws are compared through their survival functions,
  // which keeps the tails free of cancellation.
  auto diff = [&](double x) { return x > 0.0 ? std_normal_cdf(-x) - fam.sf(x) : fam.cdf(x) - std_normal_cdf(x); };
  auto gap = [&](double x) { return std::abs(diff(x)); };
  constexpr double inf = std::numeric_limits<double>::infinity();

  // |F - Phi| has a kink wherever F crosses Phi; split there so every piece is smooth.
  std::vector<double> cuts = {-inf, -8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0, inf};
  const double step = 0.02;
  double prev_x = -8.0, prev = diff(prev_x);
  for (double x = -8.0 + step; x <= 8.0 + 1e-12; x += step) {
    const double cur = diff(x);
    if ((prev < 0.0 && cur > 0.0) || (prev > 0.0 && cur < 0.0)) {
      const boost::math::tools::eps_tolerance<double> tol(40);
      std::uintmax_t iters = 100;
      const auto root = boost::math::tools::toms748_solve(diff, prev_x, x, prev, cur, tol, iters);
      cuts.push_back(0.5 * (root.first + root.second));
    }
    prev_x = x;
    prev = cur;
  }
  if (fam.family() == Family::GenNormalFlat || fam.family() == Family::GenNormalSteep) {
    // shoulder of exp(-|y|^beta) at |y| = 1
    cuts.push_back(1.0 / fam.scale());
    cuts.push_back(-1.0 / fam.scale());
  }
  std::sort(cuts.begin(), cuts.end());

  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (!(cuts[k] < cuts[k + 1])) continue;
    // Absolute target of 1e-10 per piece: far-tail pieces carry almost no
    // mass and need no refinement.
    double err = 0.0, l1 = 0.0;
    gauss_kronrod<double, 31>::integrate(gap, cuts[k], cuts[k + 1], 0, 0.0, &err, &l1);
    const double rel = std::clamp(1e-10 / std::max(l1, 1e-300), 1e-11, 1.0);
    total += gauss_kronrod<double, 31>::integrate(gap, cuts[k], cuts[k + 1], 12, rel, &err);
    if (!(err <= 1e-7)) throw NumericalError("W1 quadrature did not converge for " + to_string(fam.family()));
  }
  return total;
}

NoiseFamily calibrate(Family family, double target_w1) {
  if (target_w1 == 0.0) return NoiseFamily(family, gaussian_limit(family));
  if (!(target_w1 > 0.0 && target_w1 <= 0.1)) throw DomainError("calibrate: target must lie in (0, 0.1]");
  const Bracket br = bracket_for(family);
  auto w1_at = [&](double p) { return wasserstein1_to_std_normal(NoiseFamily(family, shape_from_search(family, p))); };
  // Orient so that "low" has W1 below the target.
  double low = br.increasing ? br.lo : br.hi;
  double high = br.increasing ? br.hi : br.lo;
  if (w1_at(high) < target_w1)
    throw CalibrationError(to_string(family) + " cannot reach W1 = " + std::to_string(target_w1));
  double mid = 0.5 * (low + high);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (low + high);
    const double w = w1_at(mid);
    if (std::abs(w - target_w1) <= 1e-8) break;
    (w < target_w1 ? low : high) = mid;
  }
  NoiseFamily fam(family, shape_from_search(family, mid));
  if (std::abs(wasserstein1_to_std_normal(fam) - target_w1) > 1e-5)
    throw CalibrationError(to_string(family) + " calibration stalled short of W1 = " + std::to_string(target_w1));
  return fam;
}

}  // namespace pwlsi
