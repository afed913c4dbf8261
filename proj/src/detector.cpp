#include "pwlsi/detector.hpp"

#include <cmath>
#include <random>

#include "pwlsi/errors.hpp"

namespace pwlsi {

Vector build_eta(const AnomalyRegion& region, int n) {
  if (region.n() != n) throw DomainError("build_eta: region belongs to a different image size");
  if (!region.testable()) throw UndefinedHypothesis();
  Vector eta = Vector::Constant(n, -1.0 / region.complement_size());
  const double inside = 1.0 / region.size();
  for (int i : region.indices()) eta[i] = inside;
  return eta;
}

TestStatistic test_statistic(const Vector& eta, const Vector& x, const CovMatrix& sigma) {
  if (eta.size() != x.size() || eta.size() != sigma.size()) throw DomainError("test_statistic: dimension mismatch");
  const double variance = sigma.quad_form(eta);
  if (!(variance > 0.0)) throw DomainError("test_statistic: zero variance");
  return {eta.dot(x), variance};
}

double Hypothesis::stddev() const { return std::sqrt(variance); }

Hypothesis make_hypothesis(const AnomalyRegion& region, const Image& x, const CovMatrix& sigma, double offset) {
  Hypothesis h;
  h.region = region;
  h.eta = build_eta(region, x.size());
  const TestStatistic t = test_statistic(h.eta, x.pixels(), sigma);
  h.observed = t.value;
  h.variance = t.variance;
  h.offset = offset;
  return h;
}

SyntheticImage make_synthetic(int n, double delta, int patch_side, const CovMatrix& sigma, std::uint64_t seed) {
  if (!(delta >= 0.0)) throw DomainError("make_synthetic: delta must be >= 0");
  if (sigma.size() != n) throw DomainError("make_synthetic: covariance size does not match n");
  const auto [height, width] = default_shape(n);
  if (patch_side < 1 || static_cast<long>(patch_side) * patch_side > n || patch_side > height || patch_side > width)
    throw DomainError("make_synthetic: patch of side " + std::to_string(patch_side) + " does not fit a " +
                      std::to_string(height) + "x" + std::to_string(width) + " image");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> row(0, height - patch_side), col(0, width - patch_side);
  const int r0 = row(rng), c0 = col(rng);
  const std::uint64_t noise_seed = rng();

  Vector signal = Vector::Zero(n);
  std::vector<int> truth;
  if (delta > 0.0) {
    for (int r = r0; r < r0 + patch_side; ++r)
      for (int c = c0; c < c0 + patch_side; ++c) {
        signal[r * width + c] = delta;
        truth.push_back(r * width + c);
      }
  }
  Image noisy = sample_gaussian(signal, sigma, noise_seed);
  return {Image(noisy.pixels(), height, width), AnomalyRegion(std::move(truth), n)};
}

CovMatrix estimate_cov(const Matrix& held_out) {
  if (held_out.cols() < 2) throw DomainError("estimate_cov: need at least two images");
  const Vector mean = held_out.rowwise().mean();
  const Matrix centered = held_out.colwise() - mean;
  Matrix cov = centered * centered.transpose() / static_cast<double>(held_out.cols() - 1);
  cov = 0.5 * (cov + cov.transpose());
  const double loading = std::max(1e-6 * cov.trace() / static_cast<double>(cov.rows()), 1e-10);
  cov.diagonal().array() += loading;
  return CovMatrix(std::move(cov));
}

}  // namespace pwlsi
