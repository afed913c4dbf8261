#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace pwlsi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Row-major pixel grid. `pixels[r * width + c]`.
class Image {
 public:
  Image() = default;
  Image(Vector pixels, int height, int width);
  /// Square image when n is a perfect square, otherwise a single row.
  static Image from_flat(Vector pixels);

  const Vector& pixels() const { return pixels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int size() const { return static_cast<int>(pixels_.size()); }
  double operator[](int i) const { return pixels_[i]; }

 private:
  Vector pixels_;
  int height_ = 0;
  int width_ = 0;
};

/// Height/width for an n-pixel image: square when possible, else 1 x n.
std::pair<int, int> default_shape(int n);

/// Symmetric positive definite covariance with a cached lower Cholesky factor.
class CovMatrix {
 public:
  CovMatrix() = default;
  /// Throws FactorizationError if the matrix is not PD even after one
  /// jittered retry, DomainError if it is not symmetric.
  explicit CovMatrix(Matrix entries);
  static CovMatrix identity(int n);

  const Matrix& entries() const { return entries_; }
  const Matrix& cholesky_factor() const { return lower_; }
  int size() const { return static_cast<int>(entries_.rows()); }
  bool is_identity() const { return identity_; }

  Vector solve(const Vector& v) const;
  Vector multiply(const Vector& v) const;
  /// v^T M v
  double quad_form(const Vector& v) const;

 private:
  Matrix entries_;
  Matrix lower_;
  Eigen::LLT<Matrix> llt_;
  bool identity_ = false;
};

/// Solves M w = v using the cached Cholesky factor.
Vector cholesky_solve(const CovMatrix& m, const Vector& v);

/// AR(1) (x) AR(1) with AR(1)_{ij} = rho^{|i-j|}; size side^2.
CovMatrix ar1_kron_cov(int side, double rho);

/// mean + L xi with xi ~ N(0, I); deterministic in `seed`.
Image sample_gaussian(const Vector& mean, const CovMatrix& cov, std::uint64_t seed);

/// Standard-normal vector from a 64-bit seed.
Vector standard_normal(int n, std::uint64_t seed);

}  // namespace pwlsi
