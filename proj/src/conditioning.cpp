#include "pwlsi/conditioning.hpp"

#include <algorithm>
#include <cmath>

#include "pwlsi/errors.hpp"

namespace pwlsi {

namespace {

// Tightens [lower, upper] with the constraint c + d z >= 0.
inline void restrict(double c, double d, double& lower, double& upper) {
  if (d > 0.0) {
    lower = std::max(lower, -c / d);
  } else if (d < 0.0) {
    upper = std::min(upper, -c / d);
  }
}

// Rounding in -c/d can push a bound just past z; anything larger is a bug.
void settle(double z, double& lower, double& upper) {
  const double tol = 1e-6 * (1.0 + std::abs(z));
  if (lower > z + tol || upper < z - tol)
    throw InconsistencyError("piece interval [" + std::to_string(lower) + ", " + std::to_string(upper) +
                             "] excludes z = " + std::to_string(z));
  lower = std::min(lower, z);
  upper = std::max(upper, z);
}

}  // namespace

AffineLine::AffineLine(const Vector& a, const Vector& b, double lower, double upper)
    : ab(a.size(), 2), lower(lower), upper(upper) {
  if (a.size() != b.size()) throw DomainError("affine line: a and b differ in length");
  ab.col(0) = a;
  ab.col(1) = b;
}

AffineLine init_line(const Vector& x, const Vector& eta, const CovMatrix& sigma) {
  if (x.size() != eta.size() || x.size() != sigma.size()) throw DomainError("init_line: dimension mismatch");
  if (eta.cwiseAbs().maxCoeff() == 0.0) throw DomainError("init_line: contrast vector is zero");
  const Vector sigma_eta = sigma.multiply(eta);
  const double variance = eta.dot(sigma_eta);
  if (!(variance > 0.0)) throw DomainError("init_line: eta^T Sigma eta must be positive");
  Vector b = sigma_eta / variance;
  Vector a = x - b * eta.dot(x);
  return AffineLine(a, b);
}

AffineLine init_line(const Image& x, const Vector& eta, const CovMatrix& sigma) {
  return init_line(x.pixels(), eta, sigma);
}

AffineLine propagate_linear(const PwlNode& n, const Shape& in_shape, const AffineLine& in, double z) {
  if (in.dim() != in_shape.size()) throw GraphError("propagate: line dimension does not match node input");
  if (n.is_linear()) {
    AffineLine out(apply_linear(n, in_shape, in.ab), in.lower, in.upper);
    add_bias(n, out.ab, 0);
    return out;
  }
  double lower = in.lower, upper = in.upper;
  const auto a = in.a();
  const auto b = in.b();
  Matrix ab;

  if (std::holds_alternative<node::ReLU>(n.op) || std::holds_alternative<node::Abs>(n.op)) {
    const bool is_relu = std::holds_alternative<node::ReLU>(n.op);
    ab = in.ab;
    for (int i = 0; i < in.dim(); ++i) {
      const double u = a[i] + b[i] * z;
      if (u >= 0.0) {
        restrict(a[i], b[i], lower, upper);
      } else {
        restrict(-a[i], -b[i], lower, upper);
        if (is_relu)
          ab.row(i).setZero();
        else
          ab.row(i) = -ab.row(i);
      }
    }
  } else if (const auto* pool = std::get_if<node::MaxPool>(&n.op)) {
    const Shape out_shape = pool_out_shape(in_shape, pool->window);
    ab.resize(out_shape.size(), 2);
    for (int o = 0; o < out_shape.size(); ++o) {
      const auto idx = pool_window_indices(in_shape, pool->window, o);
      int best = idx[0];
      double best_u = a[best] + b[best] * z;
      for (std::size_t t = 1; t < idx.size(); ++t) {
        const double u = a[idx[t]] + b[idx[t]] * z;
        if (u > best_u) {
          best = idx[t];
          best_u = u;
        }
      }
      for (int j : idx)
        if (j != best) restrict(a[best] - a[j], b[best] - b[j], lower, upper);
      ab.row(o) = in.ab.row(best);
    }
  } else {
    throw GraphError("propagate_linear: unsupported node " + node_name(n.op));
  }
  settle(z, lower, upper);
  return AffineLine(std::move(ab), lower, upper);
}

AffineLine propagate_concat(const AffineLine& left, const AffineLine& right) {
  const double lower = std::max(left.lower, right.lower);
  const double upper = std::min(left.upper, right.upper);
  if (lower > upper) throw InconsistencyError("concat: input intervals are disjoint");
  Matrix ab(left.dim() + right.dim(), 2);
  ab << left.ab, right.ab;
  return AffineLine(std::move(ab), lower, upper);
}

PieceResult piece_at(const PwlGraph& g, const AffineLine& line, double z) {
  if (line.dim() != g.input_dim()) throw GraphError("piece_at: line dimension does not match graph input");
  if (!(z >= line.lower && z <= line.upper)) throw DomainError("piece_at: z outside the line's interval");
  std::vector<AffineLine> state(static_cast<std::size_t>(g.size()));
  state[0] = line;
  PieceResult result;
  for (int i = 1; i < g.size(); ++i) {
    const PwlNode& n = g.node(i);
    const AffineLine& in = state[static_cast<std::size_t>(n.inputs[0])];
    if (std::holds_alternative<node::Concat>(n.op)) {
      state[static_cast<std::size_t>(i)] = propagate_concat(in, state[static_cast<std::size_t>(n.inputs[1])]);
    } else if (const auto* th = std::get_if<node::Threshold>(&n.op)) {
      double lower = in.lower, upper = in.upper;
      std::vector<int> idx;
      const auto a = in.a();
      const auto b = in.b();
      for (int k = 0; k < in.dim(); ++k) {
        const double c = a[k] - th->lambda;
        if (c + b[k] * z >= 0.0) {
          idx.push_back(k);
          restrict(c, b[k], lower, upper);
        } else {
          restrict(-c, -b[k], lower, upper);
        }
      }
      settle(z, lower, upper);
      result.lower = lower;
      result.upper = upper;
      result.region = AnomalyRegion(std::move(idx), in.dim());
      result.degenerate = upper - lower < 1e-12;
    } else {
      state[static_cast<std::size_t>(i)] = propagate_linear(n, g.node(n.inputs[0]).shape, in, z);
    }
  }
  return result;
}

}  // namespace pwlsi
