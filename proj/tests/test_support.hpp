#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pwlsi/graph.hpp"
#include "pwlsi/noise.hpp"
#include "pwlsi/tensor.hpp"
#include "pwlsi/truncnorm.hpp"
#include "pwlsi/vae.hpp"

namespace pwlsi::testing {

inline Vector random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline Matrix random_spd(int n, std::mt19937_64& rng) {
  Matrix a(n, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
  Matrix spd = a * a.transpose() / n + Matrix::Identity(n, n);
  return 0.5 * (spd + spd.transpose());
}

inline SparseMatrix difference_operator(int n) {
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 1.0);
    t.emplace_back(i, n + i, -1.0);
  }
  SparseMatrix m(n, 2 * n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/// Error graph with reconstruction x_hat = x (errors identically zero).
inline PwlGraph identity_reconstruction_graph(Shape shape, double lambda) {
  PwlGraph::Builder b(shape);
  const int joined = b.concat(b.input(), b.input());
  b.threshold(b.abs(b.matmul_left(joined, difference_operator(shape.size()), shape)), lambda);
  return std::move(b).build();
}

/// Error graph with reconstruction x_hat = 0, so E_i = |x_i|.
inline PwlGraph zero_reconstruction_graph(Shape shape, double lambda, int filter_window = 1) {
  PwlGraph::Builder b(shape);
  const int n = shape.size();
  const int zero = b.affine(b.input(), Matrix::Zero(n, n), Vector::Zero(n), shape);
  const int joined = b.concat(zero, b.input());
  int err = b.abs(b.matmul_left(joined, difference_operator(n), shape));
  if (filter_window > 1) err = b.mean_filter(err, filter_window);
  b.threshold(err, lambda);
  return std::move(b).build();
}

/// Random VAE with non-zero biases, so every bias path is exercised.
inline VaeModel random_vae(Shape image, Architecture arch, std::uint64_t seed, int latent = 10) {
  ArchitectureConfig cfg;
  cfg.kind = arch;
  cfg.latent = latent;
  VaeModel m = make_vae(image, cfg, seed);
  std::mt19937_64 rng(seed + 1);
  for (Layer* l : parameter_layers(m)) l->bias = random_vector(static_cast<int>(l->bias.size()), rng, 0.3);
  return m;
}

/// Scalar-loop evaluation of one layer, written without the library kernels.
inline std::vector<double> naive_layer(const Layer& l, const std::vector<double>& in) {
  const Shape is = l.in, os = l.out;
  std::vector<double> out(static_cast<std::size_t>(os.size()), 0.0);
  auto at = [](const Shape& s, int c, int r, int col) { return (c * s.height + r) * s.width + col; };
  switch (l.kind) {
    case LayerKind::Dense:
      for (int i = 0; i < os.size(); ++i) {
        double acc = l.bias[i];
        for (int j = 0; j < is.size(); ++j) acc += l.weight(i, j) * in[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = acc;
      }
      break;
    case LayerKind::Conv2d: {
      const int k = l.kernel, p = l.padding;
      const int ph = is.height + 2 * p, pw = is.width + 2 * p;
      std::vector<double> padded(static_cast<std::size_t>(is.channels * ph * pw), 0.0);
      for (int c = 0; c < is.channels; ++c)
        for (int r = 0; r < is.height; ++r)
          for (int col = 0; col < is.width; ++col)
            padded[static_cast<std::size_t>((c * ph + r + p) * pw + col + p)] =
                in[static_cast<std::size_t>(at(is, c, r, col))];
      for (int oc = 0; oc < os.channels; ++oc)
        for (int r = 0; r < os.height; ++r)
          for (int col = 0; col < os.width; ++col) {
            double acc = l.bias[oc];
            int w = 0;
            for (int ic = 0; ic < is.channels; ++ic)
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx, ++w)
                  acc += l.weight(oc, w) *
                         padded[static_cast<std::size_t>((ic * ph + r * l.stride + dy) * pw + col * l.stride + dx)];
            out[static_cast<std::size_t>(at(os, oc, r, col))] = acc;
          }
      break;
    }
    case LayerKind::ReLU:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case LayerKind::MaxPool:
      for (int c = 0; c < os.channels; ++c)
        for (int r = 0; r < os.height; ++r)
          for (int col = 0; col < os.width; ++col) {
            double best = -std::numeric_limits<double>::infinity();
            for (int dy = 0; dy < l.window; ++dy)
              for (int dx = 0; dx < l.window; ++dx)
                best = std::max(best, in[static_cast<std::size_t>(at(is, c, r * l.window + dy, col * l.window + dx))]);
            out[static_cast<std::size_t>(at(os, c, r, col))] = best;
          }
      break;
    case LayerKind::Upsample:
      for (int c = 0; c < os.channels; ++c)
        for (int r = 0; r < os.height; ++r)
          for (int col = 0; col < os.width; ++col)
            out[static_cast<std::size_t>(at(os, c, r, col))] =
                in[static_cast<std::size_t>(at(is, c, r / l.factor, col / l.factor))];
      break;
  }
  return out;
}

inline std::vector<double> naive_reconstruct(const VaeModel& m, const Vector& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  for (const auto& l : m.encoder) v = naive_layer(l, v);
  v = naive_layer(m.mu_head, v);
  for (const auto& l : m.decoder) v = naive_layer(l, v);
  return v;
}

/// In-bounds box average of a single-channel h x w field.
inline std::vector<double> naive_box_filter(const std::vector<double>& e, int h, int w, int window) {
  const int r = window / 2;
  std::vector<double> out(e.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          sum += e[static_cast<std::size_t>(yy * w + xx)];
          ++count;
        }
      out[static_cast<std::size_t>(y * w + x)] = sum / count;
    }
  return out;
}

/// Filtered reconstruction error and region, recomputed pixel by pixel.
inline std::pair<std::vector<double>, std::vector<int>> naive_detect(const VaeModel& m, const Vector& x,
                                                                     double lambda, int window) {
  const auto rec = naive_reconstruct(m, x);
  std::vector<double> err(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) err[i] = std::abs(rec[i] - x[static_cast<Eigen::Index>(i)]);
  if (window > 1) err = naive_box_filter(err, m.image.height, m.image.width, window);
  std::vector<int> region;
  for (std::size_t i = 0; i < err.size(); ++i)
    if (err[i] >= lambda) region.push_back(static_cast<int>(i));
  return {err, region};
}

/// Trained detector VAE on N(0, I) images, cached per (n, arch).
inline const VaeModel& trained_vae(int n, Architecture arch = Architecture::Mlp, int epochs = 200) {
  struct Entry {
    int n;
    Architecture arch;
    int epochs;
    VaeModel model;
  };
  static std::deque<Entry> cache;  // stable references
  for (const auto& e : cache)
    if (e.n == n && e.arch == arch && e.epochs == epochs) return e.model;
  const auto [h, w] = default_shape(n);
  ArchitectureConfig cfg;
  cfg.kind = arch;
  VaeModel model = make_vae({1, h, w}, cfg, 3);
  Matrix data(n, 1000);
  for (int j = 0; j < 1000; ++j) data.col(j) = standard_normal(n, 900000 + j);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.seed = 4;
  cache.push_back({n, arch, epochs, train(std::move(model), data, tc).model});
  return cache.back().model;
}

/// Unnormalized Gaussian mass exp(-(t^2 - s^2) / 2) integrated over [lo, hi]
/// by adaptive Gauss-Kronrod, with s chosen by the caller to avoid underflow.
inline double shifted_mass(double lo, double hi, double shift) {
  if (!(lo < hi)) return 0.0;
  auto f = [shift](double t) { return std::exp(-0.5 * (t * t - shift * shift)); };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13, &err);
}

/// Two-sided truncated-normal p-value by direct quadrature (sigma = 1 scale
/// applied by the caller).
inline double quadrature_tn_p(double t, double sigma, const std::vector<Interval>& set) {
  double shift = std::numeric_limits<double>::infinity();
  for (const auto& iv : set) {
    const double lo = iv.lower / sigma, hi = iv.upper / sigma;
    const double nearest = (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::abs(lo), std::abs(hi));
    shift = std::min(shift, nearest);
  }
  const double cut = std::abs(t) / sigma;
  double total = 0.0, tail = 0.0;
  for (const auto& iv : set) {
    const double lo = iv.lower / sigma, hi = iv.upper / sigma;
    total += shifted_mass(lo, hi, shift);
    tail += shifted_mass(lo, std::min(hi, -cut), shift) + shifted_mass(std::max(lo, cut), hi, shift);
  }
  return tail / total;
}

/// Small VAE (n = 16, m = 3) with random biases for gradient checks.
inline VaeModel small_model(Architecture arch, std::uint64_t seed) {
  ArchitectureConfig cfg;
  cfg.kind = arch;
  cfg.latent = 3;
  cfg.hidden1 = 8;
  cfg.hidden2 = 6;
  cfg.conv_channels = 2;
  VaeModel m = make_vae({1, 4, 4}, cfg, seed);
  std::mt19937_64 rng(seed + 100);
  for (Layer* l : parameter_layers(m)) l->bias = random_vector(static_cast<int>(l->bias.size()), rng, 0.2);
  return m;
}

/// Worst per-layer relative gap between backprop and central differences.
inline double gradient_gap(VaeModel model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int batch = 5;
  Matrix x(model.n, batch), noise(model.m, batch);
  for (int j = 0; j < batch; ++j) {
    x.col(j) = random_vector(model.n, rng);
    noise.col(j) = random_vector(model.m, rng);
  }
  const ElboResult base = elbo_loss(model, x, noise);
  const auto layers = parameter_layers(model);
  if (base.gradients.weight.size() != layers.size()) throw std::logic_error("gradient layout mismatch");
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t p = 0; p < layers.size(); ++p) {
    auto finite_diff = [&](double& slot) {
      const double keep = slot;
      slot = keep + h;
      const double up = elbo_loss(model, x, noise).loss;
      slot = keep - h;
      const double down = elbo_loss(model, x, noise).loss;
      slot = keep;
      return (up - down) / (2.0 * h);
    };
    Matrix fw(layers[p]->weight.rows(), layers[p]->weight.cols());
    for (Eigen::Index i = 0; i < fw.size(); ++i) fw.data()[i] = finite_diff(layers[p]->weight.data()[i]);
    Vector fb(layers[p]->bias.size());
    for (Eigen::Index i = 0; i < fb.size(); ++i) fb[i] = finite_diff(layers[p]->bias[i]);
    const double gw = (fw - base.gradients.weight[p]).norm() /
                      std::max({fw.norm(), base.gradients.weight[p].norm(), 1e-8});
    const double gb =
        (fb - base.gradients.bias[p]).norm() / std::max({fb.norm(), base.gradients.bias[p].norm(), 1e-8});
    worst = std::max({worst, gw, gb});
  }
  return worst;
}

/// W1 by trapezoid rule on a fine grid, independent of the library quadrature.
inline double trapezoid_w1(const NoiseFamily& fam) {
  const boost::math::normal std_normal;
  const double h = 5e-4;
  double total = 0.0;
  double prev = std::abs(fam.cdf(-40.0) - boost::math::cdf(std_normal, -40.0));
  for (double x = -40.0 + h; x <= 40.0; x += h) {
    const double cur = std::abs(fam.cdf(x) - boost::math::cdf(std_normal, x));
    total += 0.5 * h * (prev + cur);
    prev = cur;
  }
  return total;
}

}  // namespace pwlsi::testing
