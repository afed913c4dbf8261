#include "pwlsi/tensor.hpp"

#include <cmath>
#include <random>
#include <string>

#include "pwlsi/errors.hpp"

namespace pwlsi {

Image::Image(Vector pixels, int height, int width)
    : pixels_(std::move(pixels)), height_(height), width_(width) {
  if (pixels_.size() < 1) throw DomainError("image must have at least one pixel");
  if (static_cast<long>(height) * width != pixels_.size())
    throw DomainError("image shape " + std::to_string(height) + "x" + std::to_string(width) +
                      " does not match " + std::to_string(pixels_.size()) + " pixels");
  if (!pixels_.allFinite()) throw DomainError("image contains non-finite pixels");
}

Image Image::from_flat(Vector pixels) {
  auto [h, w] = default_shape(static_cast<int>(pixels.size()));
  return Image(std::move(pixels), h, w);
}

std::pair<int, int> default_shape(int n) {
  int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (side * side == n) return {side, side};
  return {1, n};
}

CovMatrix::CovMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() == 0)
    throw DomainError("covariance must be a non-empty square matrix");
  const double scale = entries_.cwiseAbs().maxCoeff();
  if ((entries_ - entries_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300))
    throw DomainError("covariance is not symmetric");
  llt_.compute(entries_);
  if (llt_.info() != Eigen::Success) {
    // One jittered retry covers estimated covariances on the PD boundary.
    Matrix jittered = entries_;
    jittered.diagonal().array() += 1e-10;
    llt_.compute(jittered);
    if (llt_.info() != Eigen::Success || !(scale > 0))
      throw FactorizationError("covariance is not positive definite");
  }
  lower_ = llt_.matrixL();
  identity_ = entries_.isIdentity(0.0);
}

CovMatrix CovMatrix::identity(int n) {
  return CovMatrix(Matrix::Identity(n, n));
}

Vector CovMatrix::solve(const Vector& v) const {
  if (v.size() != size()) throw DomainError("cholesky_solve: dimension mismatch");
  if (identity_) return v;
  return llt_.solve(v);
}

Vector CovMatrix::multiply(const Vector& v) const {
  if (v.size() != size()) throw DomainError("covariance multiply: dimension mismatch");
  if (identity_) return v;
  return entries_ * v;
}

double CovMatrix::quad_form(const Vector& v) const {
  return v.dot(multiply(v));
}

Vector cholesky_solve(const CovMatrix& m, const Vector& v) { return m.solve(v); }

CovMatrix ar1_kron_cov(int side, double rho) {
  if (side < 1) throw DomainError("ar1_kron_cov: side must be >= 1");
  if (!(std::abs(rho) < 1.0)) throw DomainError("ar1_kron_cov: |rho| must be < 1");
  Matrix ar(side, side);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) ar(i, j) = std::pow(rho, std::abs(i - j));
  const int n = side * side;
  Matrix k(n, n);
  for (int i1 = 0; i1 < side; ++i1)
    for (int i2 = 0; i2 < side; ++i2)
      for (int j1 = 0; j1 < side; ++j1)
        for (int j2 = 0; j2 < side; ++j2) k(i1 * side + i2, j1 * side + j2) = ar(i1, j1) * ar(i2, j2);
  return CovMatrix(std::move(k));
}

Vector standard_normal(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector xi(n);
  for (int i = 0; i < n; ++i) xi[i] = normal(rng);
  return xi;
}

Image sample_gaussian(const Vector& mean, const CovMatrix& cov, std::uint64_t seed) {
  if (mean.size() != cov.size()) throw DomainError("sample_gaussian: dimension mismatch");
  Vector xi = standard_normal(cov.size(), seed);
  Vector x = cov.is_identity() ? Vector(mean + xi) : Vector(mean + cov.cholesky_factor() * xi);
  return Image::from_flat(std::move(x));
}

}  // namespace pwlsi
