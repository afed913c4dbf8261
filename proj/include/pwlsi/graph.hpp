#pragma once

#include <string>
#include <variant>
#include <vector>

#include "pwlsi/kernels.hpp"
#include "pwlsi/region.hpp"
#include "pwlsi/tensor.hpp"

namespace pwlsi {

struct VaeModel;

namespace node {

struct Input {};
/// weight * u + bias
struct Affine {
  Matrix weight;
  Vector bias;
};
struct Conv2d {
  ConvGeometry geometry;
  Matrix weight;  // out_channels x (in_channels * k * k)
  Vector bias;    // per output channel
};
struct ReLU {};
struct Abs {};
struct MaxPool {
  int window = 2;
};
struct MeanPool {
  int window = 2;
};
struct Upsample {
  int factor = 2;
};
struct MeanFilter {
  int window = 3;
  SparseMatrix op;
};
/// Fixed matrix applied from the left, no bias.
struct MatMulLeft {
  SparseMatrix matrix;
};
struct Concat {};
/// Terminal piecewise-assignment node: region = { i : u_i >= lambda }.
struct Threshold {
  double lambda = 1.2;
};

}  // namespace node

using NodeOp = std::variant<node::Input, node::Affine, node::Conv2d, node::ReLU, node::Abs, node::MaxPool,
                            node::MeanPool, node::Upsample, node::MeanFilter, node::MatMulLeft, node::Concat,
                            node::Threshold>;

std::string node_name(const NodeOp& op);

struct PwlNode {
  NodeOp op;
  std::vector<int> inputs;  // indices of earlier nodes; 2 for Concat, 0 for Input
  Shape shape;              // output shape

  bool is_linear() const;
};

/// Topologically ordered DAG from a single Input node to a single Threshold sink.
class PwlGraph {
 public:
  class Builder;

  const std::vector<PwlNode>& nodes() const { return nodes_; }
  const PwlNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int input_dim() const { return nodes_.front().shape.size(); }
  const Shape& input_shape() const { return nodes_.front().shape; }
  double lambda() const;
  /// Index of the node feeding the threshold.
  int score_node() const { return nodes_.back().inputs.front(); }
  /// Number of later nodes reading each node's output.
  const std::vector<int>& consumer_counts() const { return consumers_; }

 private:
  std::vector<PwlNode> nodes_;
  std::vector<int> consumers_;
};

class PwlGraph::Builder {
 public:
  explicit Builder(Shape input);

  int input() const { return 0; }
  int affine(int from, Matrix weight, Vector bias, Shape out);
  int affine(int from, Matrix weight, Vector bias);
  int conv2d(int from, Matrix weight, Vector bias, int kernel, int stride, int padding);
  int relu(int from);
  int abs(int from);
  int maxpool(int from, int window);
  int meanpool(int from, int window);
  int upsample(int from, int factor);
  int mean_filter(int from, int window);
  int matmul_left(int from, SparseMatrix matrix, Shape out);
  int concat(int left, int right);
  int threshold(int from, double lambda);

  /// Validates and returns the graph; the last node must be the threshold.
  PwlGraph build() &&;

 private:
  int push(NodeOp op, std::vector<int> inputs, Shape shape);
  const Shape& shape_of(int i) const;

  std::vector<PwlNode> nodes_;
};

struct ForwardResult {
  Vector score;  // pre-threshold output (reconstruction error after filtering)
  AnomalyRegion region;
};

/// Evaluates every node directly on x.
ForwardResult forward(const PwlGraph& g, const Image& x);
ForwardResult forward(const PwlGraph& g, const Vector& x);

/// Linear part of a single-piece node applied column-wise (no bias).
Matrix apply_linear(const PwlNode& n, const Shape& in_shape, const Matrix& in);
/// Adds a linear node's bias to column `col` of `out`.
void add_bias(const PwlNode& n, Matrix& out, int col);

struct DetectorConfig {
  double lambda = 1.2;
  int filter_window = 3;
};

/// Builds |mu_theta(mu_phi(X)) - X| -> mean filter -> threshold as a graph.
/// filter_window == 1 omits the filter node.
PwlGraph assemble_detector(const VaeModel& vae, const DetectorConfig& cfg);

/// Node list summary (kind, inputs, output shape) as a JSON array string.
std::string graph_summary_json(const PwlGraph& g);

}  // namespace pwlsi
