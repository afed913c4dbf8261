#include "pwlsi/kernels.hpp"

#include "pwlsi/errors.hpp"

namespace pwlsi {

std::string Shape::to_string() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Shape ConvGeometry::out() const {
  if (stride < 1 || kernel < 1 || padding < 0) throw GraphError("invalid convolution geometry");
  const int oh = (in.height + 2 * padding - kernel) / stride + 1;
  const int ow = (in.width + 2 * padding - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw GraphError("convolution kernel larger than padded input " + in.to_string());
  return {out_channels, oh, ow};
}

namespace {

void check_rows(const Matrix& m, int rows, const char* what) {
  if (m.rows() != rows)
    throw GraphError(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " +
                     std::to_string(m.rows()));
}

}  // namespace

Matrix conv2d_forward(const Matrix& in, const ConvGeometry& geo, const Matrix& weight) {
  const Shape is = geo.in;
  const Shape os = geo.out();
  check_rows(in, is.size(), "conv2d input");
  const int k = geo.kernel;
  Matrix out = Matrix::Zero(os.size(), in.cols());
  for (int oc = 0; oc < os.channels; ++oc)
    for (int oy = 0; oy < os.height; ++oy)
      for (int ox = 0; ox < os.width; ++ox) {
        const int o = (oc * os.height + oy) * os.width + ox;
        for (int ic = 0; ic < is.channels; ++ic)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * geo.stride + ky - geo.padding;
            if (iy < 0 || iy >= is.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * geo.stride + kx - geo.padding;
              if (ix < 0 || ix >= is.width) continue;
              const double w = weight(oc, (ic * k + ky) * k + kx);
              out.row(o) += w * in.row((ic * is.height + iy) * is.width + ix);
            }
          }
      }
  return out;
}

Matrix conv2d_backward_input(const Matrix& grad_out, const ConvGeometry& geo, const Matrix& weight) {
  const Shape is = geo.in;
  const Shape os = geo.out();
  check_rows(grad_out, os.size(), "conv2d grad");
  const int k = geo.kernel;
  Matrix grad_in = Matrix::Zero(is.size(), grad_out.cols());
  for (int oc = 0; oc < os.channels; ++oc)
    for (int oy = 0; oy < os.height; ++oy)
      for (int ox = 0; ox < os.width; ++ox) {
        const int o = (oc * os.height + oy) * os.width + ox;
        for (int ic = 0; ic < is.channels; ++ic)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * geo.stride + ky - geo.padding;
            if (iy < 0 || iy >= is.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * geo.stride + kx - geo.padding;
              if (ix < 0 || ix >= is.width) continue;
              grad_in.row((ic * is.height + iy) * is.width + ix) +=
                  weight(oc, (ic * k + ky) * k + kx) * grad_out.row(o);
            }
          }
      }
  return grad_in;
}

Matrix conv2d_backward_weight(const Matrix& in, const Matrix& grad_out, const ConvGeometry& geo) {
  const Shape is = geo.in;
  const Shape os = geo.out();
  const int k = geo.kernel;
  Matrix grad_w = Matrix::Zero(os.channels, is.channels * k * k);
  for (int oc = 0; oc < os.channels; ++oc)
    for (int oy = 0; oy < os.height; ++oy)
      for (int ox = 0; ox < os.width; ++ox) {
        const int o = (oc * os.height + oy) * os.width + ox;
        for (int ic = 0; ic < is.channels; ++ic)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * geo.stride + ky - geo.padding;
            if (iy < 0 || iy >= is.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * geo.stride + kx - geo.padding;
              if (ix < 0 || ix >= is.width) continue;
              grad_w(oc, (ic * k + ky) * k + kx) +=
                  grad_out.row(o).dot(in.row((ic * is.height + iy) * is.width + ix));
            }
          }
      }
  return grad_w;
}

Shape pool_out_shape(const Shape& in, int window) {
  if (window < 1 || in.height % window != 0 || in.width % window != 0)
    throw GraphError("pool window " + std::to_string(window) + " does not divide " + in.to_string());
  return {in.channels, in.height / window, in.width / window};
}

std::vector<int> pool_window_indices(const Shape& shape, int window, int o) {
  const Shape os = pool_out_shape(shape, window);
  const int c = o / (os.height * os.width);
  const int oy = (o / os.width) % os.height;
  const int ox = o % os.width;
  std::vector<int> idx;
  idx.reserve(window * window);
  for (int dy = 0; dy < window; ++dy)
    for (int dx = 0; dx < window; ++dx)
      idx.push_back((c * shape.height + oy * window + dy) * shape.width + ox * window + dx);
  return idx;
}

Matrix maxpool_forward(const Matrix& in, const Shape& shape, int window, std::vector<int>* argmax) {
  check_rows(in, shape.size(), "maxpool input");
  const Shape os = pool_out_shape(shape, window);
  Matrix out(os.size(), in.cols());
  if (argmax) argmax->assign(static_cast<std::size_t>(os.size()) * in.cols(), 0);
  for (int o = 0; o < os.size(); ++o) {
    const auto idx = pool_window_indices(shape, window, o);
    for (int col = 0; col < in.cols(); ++col) {
      int best = idx[0];
      for (std::size_t t = 1; t < idx.size(); ++t)
        if (in(idx[t], col) > in(best, col)) best = idx[t];
      out(o, col) = in(best, col);
      if (argmax) (*argmax)[static_cast<std::size_t>(col) * os.size() + o] = best;
    }
  }
  return out;
}

Matrix maxpool_backward(const Matrix& grad_out, const Shape& shape, int window,
                        const std::vector<int>& argmax) {
  const Shape os = pool_out_shape(shape, window);
  Matrix grad_in = Matrix::Zero(shape.size(), grad_out.cols());
  for (int col = 0; col < grad_out.cols(); ++col)
    for (int o = 0; o < os.size(); ++o)
      grad_in(argmax[static_cast<std::size_t>(col) * os.size() + o], col) += grad_out(o, col);
  return grad_in;
}

Matrix meanpool_forward(const Matrix& in, const Shape& shape, int window) {
  check_rows(in, shape.size(), "meanpool input");
  const Shape os = pool_out_shape(shape, window);
  Matrix out = Matrix::Zero(os.size(), in.cols());
  const double scale = 1.0 / (window * window);
  for (int o = 0; o < os.size(); ++o)
    for (int i : pool_window_indices(shape, window, o)) out.row(o) += scale * in.row(i);
  return out;
}

Shape upsample_out_shape(const Shape& in, int factor) {
  if (factor < 1) throw GraphError("upsample factor must be >= 1");
  return {in.channels, in.height * factor, in.width * factor};
}

Matrix upsample_forward(const Matrix& in, const Shape& shape, int factor) {
  check_rows(in, shape.size(), "upsample input");
  const Shape os = upsample_out_shape(shape, factor);
  Matrix out(os.size(), in.cols());
  for (int c = 0; c < os.channels; ++c)
    for (int y = 0; y < os.height; ++y)
      for (int x = 0; x < os.width; ++x)
        out.row((c * os.height + y) * os.width + x) =
            in.row((c * shape.height + y / factor) * shape.width + x / factor);
  return out;
}

Matrix upsample_backward(const Matrix& grad_out, const Shape& shape, int factor) {
  const Shape os = upsample_out_shape(shape, factor);
  Matrix grad_in = Matrix::Zero(shape.size(), grad_out.cols());
  for (int c = 0; c < os.channels; ++c)
    for (int y = 0; y < os.height; ++y)
      for (int x = 0; x < os.width; ++x)
        grad_in.row((c * shape.height + y / factor) * shape.width + x / factor) +=
            grad_out.row((c * os.height + y) * os.width + x);
  return grad_in;
}

SparseMatrix mean_filter_operator(const Shape& shape, int window) {
  if (window < 1 || window % 2 == 0) throw GraphError("mean filter window must be odd and >= 1");
  const int r = window / 2;
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(shape.size()) * window * window);
  for (int c = 0; c < shape.channels; ++c)
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x) {
        const int y0 = std::max(0, y - r), y1 = std::min(shape.height - 1, y + r);
        const int x0 = std::max(0, x - r), x1 = std::min(shape.width - 1, x + r);
        const double w = 1.0 / ((y1 - y0 + 1) * (x1 - x0 + 1));
        const int row = (c * shape.height + y) * shape.width + x;
        for (int yy = y0; yy <= y1; ++yy)
          for (int xx = x0; xx <= x1; ++xx)
            entries.emplace_back(row, (c * shape.height + yy) * shape.width + xx, w);
      }
  SparseMatrix op(shape.size(), shape.size());
  op.setFromTriplets(entries.begin(), entries.end());
  return op;
}

}  // namespace pwlsi
