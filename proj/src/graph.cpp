#include "pwlsi/graph.hpp"

#include <json.hpp>

#include "pwlsi/errors.hpp"
#include "pwlsi/vae.hpp"

namespace pwlsi {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string node_name(const NodeOp& op) {
  return std::visit(overloaded{
                        [](const node::Input&) { return "input"; },
                        [](const node::Affine&) { return "affine"; },
                        [](const node::Conv2d&) { return "conv2d"; },
                        [](const node::ReLU&) { return "relu"; },
                        [](const node::Abs&) { return "abs"; },
                        [](const node::MaxPool&) { return "maxpool"; },
                        [](const node::MeanPool&) { return "meanpool"; },
                        [](const node::Upsample&) { return "upsample"; },
                        [](const node::MeanFilter&) { return "mean_filter"; },
                        [](const node::MatMulLeft&) { return "matmul_left"; },
                        [](const node::Concat&) { return "concat"; },
                        [](const node::Threshold&) { return "threshold"; },
                    },
                    op);
}

bool PwlNode::is_linear() const {
  return std::holds_alternative<node::Affine>(op) || std::holds_alternative<node::Conv2d>(op) ||
         std::holds_alternative<node::MeanPool>(op) || std::holds_alternative<node::Upsample>(op) ||
         std::holds_alternative<node::MeanFilter>(op) || std::holds_alternative<node::MatMulLeft>(op);
}

double PwlGraph::lambda() const { return std::get<node::Threshold>(nodes_.back().op).lambda; }

PwlGraph::Builder::Builder(Shape input) {
  if (input.size() < 1) throw GraphError("graph input must have at least one element");
  nodes_.push_back({node::Input{}, {}, input});
}

const Shape& PwlGraph::Builder::shape_of(int i) const {
  if (i < 0 || i >= static_cast<int>(nodes_.size())) throw GraphError("node index " + std::to_string(i) + " out of range");
  if (std::holds_alternative<node::Threshold>(nodes_[static_cast<std::size_t>(i)].op))
    throw GraphError("threshold node cannot feed other nodes");
  return nodes_[static_cast<std::size_t>(i)].shape;
}

int PwlGraph::Builder::push(NodeOp op, std::vector<int> inputs, Shape shape) {
  nodes_.push_back({std::move(op), std::move(inputs), shape});
  return static_cast<int>(nodes_.size()) - 1;
}

int PwlGraph::Builder::affine(int from, Matrix weight, Vector bias, Shape out) {
  const Shape in = shape_of(from);
  if (weight.cols() != in.size() || weight.rows() != out.size() || bias.size() != out.size())
    throw GraphError("affine node: weight " + std::to_string(weight.rows()) + "x" + std::to_string(weight.cols()) +
                     " incompatible with input " + in.to_string() + " / output " + out.to_string());
  return push(node::Affine{std::move(weight), std::move(bias)}, {from}, out);
}

int PwlGraph::Builder::affine(int from, Matrix weight, Vector bias) {
  const Shape out = flat_shape(static_cast<int>(weight.rows()));
  return affine(from, std::move(weight), std::move(bias), out);
}

int PwlGraph::Builder::conv2d(int from, Matrix weight, Vector bias, int kernel, int stride, int padding) {
  const Shape in = shape_of(from);
  ConvGeometry geo{in, static_cast<int>(weight.rows()), kernel, stride, padding};
  if (weight.cols() != in.channels * kernel * kernel || bias.size() != weight.rows())
    throw GraphError("conv2d node: weight/bias do not match " + in.to_string() + " input");
  const Shape out = geo.out();
  return push(node::Conv2d{geo, std::move(weight), std::move(bias)}, {from}, out);
}

int PwlGraph::Builder::relu(int from) { return push(node::ReLU{}, {from}, shape_of(from)); }
int PwlGraph::Builder::abs(int from) { return push(node::Abs{}, {from}, shape_of(from)); }

int PwlGraph::Builder::maxpool(int from, int window) {
  return push(node::MaxPool{window}, {from}, pool_out_shape(shape_of(from), window));
}

int PwlGraph::Builder::meanpool(int from, int window) {
  return push(node::MeanPool{window}, {from}, pool_out_shape(shape_of(from), window));
}

int PwlGraph::Builder::upsample(int from, int factor) {
  return push(node::Upsample{factor}, {from}, upsample_out_shape(shape_of(from), factor));
}

int PwlGraph::Builder::mean_filter(int from, int window) {
  const Shape s = shape_of(from);
  return push(node::MeanFilter{window, mean_filter_operator(s, window)}, {from}, s);
}

int PwlGraph::Builder::matmul_left(int from, SparseMatrix matrix, Shape out) {
  const Shape in = shape_of(from);
  if (matrix.cols() != in.size() || matrix.rows() != out.size())
    throw GraphError("matmul_left node: matrix does not match input " + in.to_string());
  return push(node::MatMulLeft{std::move(matrix)}, {from}, out);
}

int PwlGraph::Builder::concat(int left, int right) {
  const Shape l = shape_of(left), r = shape_of(right);
  Shape out = (l.height == r.height && l.width == r.width) ? Shape{l.channels + r.channels, l.height, l.width}
                                                          : flat_shape(l.size() + r.size());
  return push(node::Concat{}, {left, right}, out);
}

int PwlGraph::Builder::threshold(int from, double lambda) {
  if (!(lambda > 0.0)) throw GraphError("threshold lambda must be positive");
  return push(node::Threshold{lambda}, {from}, shape_of(from));
}

PwlGraph PwlGraph::Builder::build() && {
  if (nodes_.size() < 2 || !std::holds_alternative<node::Threshold>(nodes_.back().op))
    throw GraphError("graph must end in a threshold node");
  PwlGraph g;
  g.consumers_.assign(nodes_.size(), 0);
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (std::holds_alternative<node::Input>(n.op)) throw GraphError("graph must have a single input node");
    for (int in : n.inputs) {
      if (in < 0 || static_cast<std::size_t>(in) >= i) throw GraphError("graph is not topologically ordered");
      ++g.consumers_[static_cast<std::size_t>(in)];
    }
  }
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i)
    if (g.consumers_[i] == 0)
      throw GraphError("node " + std::to_string(i) + " (" + node_name(nodes_[i].op) + ") has no consumer");
  g.nodes_ = std::move(nodes_);
  return g;
}

Matrix apply_linear(const PwlNode& n, const Shape& in_shape, const Matrix& in) {
  return std::visit(
      overloaded{
          [&](const node::Affine& op) -> Matrix { return op.weight * in; },
          [&](const node::Conv2d& op) -> Matrix { return conv2d_forward(in, op.geometry, op.weight); },
          [&](const node::MeanPool& op) -> Matrix { return meanpool_forward(in, in_shape, op.window); },
          [&](const node::Upsample& op) -> Matrix { return upsample_forward(in, in_shape, op.factor); },
          [&](const node::MeanFilter& op) -> Matrix { return op.op * in; },
          [&](const node::MatMulLeft& op) -> Matrix { return op.matrix * in; },
          [&](const auto&) -> Matrix { throw GraphError(node_name(n.op) + " is not a linear node"); },
      },
      n.op);
}

void add_bias(const PwlNode& n, Matrix& out, int col) {
  if (const auto* a = std::get_if<node::Affine>(&n.op)) {
    out.col(col) += a->bias;
  } else if (const auto* c = std::get_if<node::Conv2d>(&n.op)) {
    const int plane = n.shape.height * n.shape.width;
    for (int ch = 0; ch < n.shape.channels; ++ch) out.col(col).segment(ch * plane, plane).array() += c->bias[ch];
  }
}

ForwardResult forward(const PwlGraph& g, const Vector& x) {
  if (x.size() != g.input_dim())
    throw GraphError("forward: input has " + std::to_string(x.size()) + " entries, graph expects " +
                     std::to_string(g.input_dim()));
  std::vector<Vector> values(static_cast<std::size_t>(g.size()));
  values[0] = x;
  ForwardResult result;
  for (int i = 1; i < g.size(); ++i) {
    const PwlNode& n = g.node(i);
    const Vector& in = values[static_cast<std::size_t>(n.inputs[0])];
    const Shape& in_shape = g.node(n.inputs[0]).shape;
    Vector out;
    if (n.is_linear()) {
      Matrix m = apply_linear(n, in_shape, in);
      add_bias(n, m, 0);
      out = m.col(0);
    } else {
      std::visit(overloaded{
                     [&](const node::ReLU&) { out = in.cwiseMax(0.0); },
                     [&](const node::Abs&) { out = in.cwiseAbs(); },
                     [&](const node::MaxPool& op) { out = maxpool_forward(in, in_shape, op.window).col(0); },
                     [&](const node::Concat&) {
                       const Vector& right = values[static_cast<std::size_t>(n.inputs[1])];
                       out.resize(in.size() + right.size());
                       out << in, right;
                     },
                     [&](const node::Threshold& op) {
                       std::vector<int> idx;
                       for (Eigen::Index k = 0; k < in.size(); ++k)
                         if (in[k] >= op.lambda) idx.push_back(static_cast<int>(k));
                       result.score = in;
                       result.region = AnomalyRegion(std::move(idx), static_cast<int>(in.size()));
                     },
                     [&](const auto&) { throw GraphError("unexpected node " + node_name(n.op)); },
                 },
                 n.op);
    }
    values[static_cast<std::size_t>(i)] = std::move(out);
  }
  return result;
}

ForwardResult forward(const PwlGraph& g, const Image& x) { return forward(g, x.pixels()); }

PwlGraph assemble_detector(const VaeModel& vae, const DetectorConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw GraphError("detector lambda must be positive");
  if (cfg.filter_window < 1 || cfg.filter_window % 2 == 0) throw GraphError("filter window must be odd and >= 1");
  if (vae.image.size() != vae.n) throw GraphError("VAE image shape does not match n");

  PwlGraph::Builder b(vae.image);
  int cur = b.input();
  auto add_layer = [&](const Layer& l) {
    switch (l.kind) {
      case LayerKind::Dense:
        cur = b.affine(cur, l.weight, l.bias, l.out);
        break;
      case LayerKind::Conv2d:
        cur = b.conv2d(cur, l.weight, l.bias, l.kernel, l.stride, l.padding);
        break;
      case LayerKind::ReLU:
        cur = b.relu(cur);
        break;
      case LayerKind::MaxPool:
        cur = b.maxpool(cur, l.window);
        break;
      case LayerKind::Upsample:
        cur = b.upsample(cur, l.factor);
        break;
    }
  };
  for (const auto& l : vae.encoder) add_layer(l);
  add_layer(vae.mu_head);
  for (const auto& l : vae.decoder) add_layer(l);

  // [x_hat; x] -> x_hat - x -> |.| -> filter -> threshold
  const int n = vae.n;
  const int joined = b.concat(cur, b.input());
  std::vector<Eigen::Triplet<double>> diff;
  diff.reserve(2 * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    diff.emplace_back(i, i, 1.0);
    diff.emplace_back(i, n + i, -1.0);
  }
  SparseMatrix sub(n, 2 * n);
  sub.setFromTriplets(diff.begin(), diff.end());
  int err = b.abs(b.matmul_left(joined, std::move(sub), vae.image));
  if (cfg.filter_window > 1) err = b.mean_filter(err, cfg.filter_window);
  b.threshold(err, cfg.lambda);
  return std::move(b).build();
}

std::string graph_summary_json(const PwlGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes()) {
    nlohmann::json j;
    j["kind"] = node_name(n.op);
    j["inputs"] = n.inputs;
    j["shape"] = {n.shape.channels, n.shape.height, n.shape.width};
    if (const auto* t = std::get_if<node::Threshold>(&n.op)) j["lambda"] = t->lambda;
    if (const auto* f = std::get_if<node::MeanFilter>(&n.op)) j["window"] = f->window;
    nodes.push_back(std::move(j));
  }
  return nodes.dump();
}

}  // namespace pwlsi
