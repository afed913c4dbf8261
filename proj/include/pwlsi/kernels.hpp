#pragma once

#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "pwlsi/tensor.hpp"

namespace pwlsi {

/// Channel-major feature-map shape; flat index is (c * height + r) * width + col.
struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  int size() const { return channels * height * width; }
  std::string to_string() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline Shape flat_shape(int n) { return {1, 1, n}; }

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Column-batched kernels: every column of the input is one feature map.

struct ConvGeometry {
  Shape in;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  Shape out() const;
};

/// weight is out_channels x (in.channels * kernel * kernel), no bias.
Matrix conv2d_forward(const Matrix& in, const ConvGeometry& geo, const Matrix& weight);
Matrix conv2d_backward_input(const Matrix& grad_out, const ConvGeometry& geo, const Matrix& weight);
Matrix conv2d_backward_weight(const Matrix& in, const Matrix& grad_out, const ConvGeometry& geo);

Shape pool_out_shape(const Shape& in, int window);
/// Non-overlapping max pooling. `argmax` receives, per output entry and
/// column, the flat input index chosen; ties go to the first index in
/// row-major window order.
Matrix maxpool_forward(const Matrix& in, const Shape& shape, int window,
                       std::vector<int>* argmax = nullptr);
Matrix maxpool_backward(const Matrix& grad_out, const Shape& shape, int window,
                        const std::vector<int>& argmax);
/// Flat input indices of output entry `o`'s pooling window, row-major.
std::vector<int> pool_window_indices(const Shape& shape, int window, int o);

Matrix meanpool_forward(const Matrix& in, const Shape& shape, int window);

Shape upsample_out_shape(const Shape& in, int factor);
/// Nearest-neighbour upsampling.
Matrix upsample_forward(const Matrix& in, const Shape& shape, int factor);
Matrix upsample_backward(const Matrix& grad_out, const Shape& shape, int factor);

/// Per-channel box filter averaging over in-bounds neighbours only.
SparseMatrix mean_filter_operator(const Shape& shape, int window);

}  // namespace pwlsi
