#pragma once

#include <limits>

#include "pwlsi/graph.hpp"
#include "pwlsi/region.hpp"
#include "pwlsi/tensor.hpp"

namespace pwlsi {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// The set { a + b z : z in [lower, upper] }. Column 0 of `ab` is a, column 1 is b.
struct AffineLine {
  Matrix ab;
  double lower = -kInf;
  double upper = kInf;

  AffineLine() = default;
  AffineLine(const Vector& a, const Vector& b, double lower = -kInf, double upper = kInf);
  AffineLine(Matrix ab, double lower, double upper) : ab(std::move(ab)), lower(lower), upper(upper) {}

  auto a() const { return ab.col(0); }
  auto b() const { return ab.col(1); }
  int dim() const { return static_cast<int>(ab.rows()); }
  Vector at(double z) const { return ab.col(0) + ab.col(1) * z; }
};

/// Interval of the line parameter containing the query and the region
/// assigned on it.
struct PieceResult {
  double lower = -kInf;
  double upper = kInf;
  AnomalyRegion region;
  /// Width below 1e-12; kept as-is.
  bool degenerate = false;
};

/// X(z) = a + b z with a = x - b (eta^T x), b = Sigma eta / (eta^T Sigma eta).
AffineLine init_line(const Image& x, const Vector& eta, const CovMatrix& sigma);
AffineLine init_line(const Vector& x, const Vector& eta, const CovMatrix& sigma);

/// One piecewise-linear node: picks the piece containing the line at z and
/// intersects the running interval with that piece's z-range.
AffineLine propagate_linear(const PwlNode& n, const Shape& in_shape, const AffineLine& in, double z);

AffineLine propagate_concat(const AffineLine& left, const AffineLine& right);

/// Runs the update rules from the input node to the threshold at z.
PieceResult piece_at(const PwlGraph& g, const AffineLine& line, double z);

}  // namespace pwlsi
