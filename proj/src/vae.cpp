#include "pwlsi/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pwlsi/errors.hpp"

namespace pwlsi {

namespace {

constexpr double kLogvarMin = -10.0;
constexpr double kLogvarMax = 10.0;

struct LayerCache {
  Matrix input;
  std::vector<int> argmax;
};

Matrix forward_layer(const Layer& layer, const Matrix& in, LayerCache* cache) {
  if (in.rows() != layer.in.size())
    throw GraphError(to_string(layer.kind) + " layer expects " + std::to_string(layer.in.size()) +
                     " inputs, got " + std::to_string(in.rows()));
  if (cache) cache->input = in;
  switch (layer.kind) {
    case LayerKind::Dense: {
      Matrix out = layer.weight * in;
      out.colwise() += layer.bias;
      return out;
    }
    case LayerKind::Conv2d: {
      Matrix out = conv2d_forward(in, layer.conv_geometry(), layer.weight);
      const int plane = layer.out.height * layer.out.width;
      for (int c = 0; c < layer.out.channels; ++c) out.middleRows(c * plane, plane).array() += layer.bias[c];
      return out;
    }
    case LayerKind::ReLU:
      return in.cwiseMax(0.0);
    case LayerKind::MaxPool:
      return maxpool_forward(in, layer.in, layer.window, cache ? &cache->argmax : nullptr);
    case LayerKind::Upsample:
      return upsample_forward(in, layer.in, layer.factor);
  }
  throw GraphError("unknown layer kind");
}

Matrix backward_layer(const Layer& layer, const Matrix& grad_out, const LayerCache& cache, Matrix* grad_w,
                      Vector* grad_b) {
  switch (layer.kind) {
    case LayerKind::Dense:
      *grad_w += grad_out * cache.input.transpose();
      *grad_b += grad_out.rowwise().sum();
      return layer.weight.transpose() * grad_out;
    case LayerKind::Conv2d: {
      *grad_w += conv2d_backward_weight(cache.input, grad_out, layer.conv_geometry());
      const int plane = layer.out.height * layer.out.width;
      for (int c = 0; c < layer.out.channels; ++c) (*grad_b)[c] += grad_out.middleRows(c * plane, plane).sum();
      return conv2d_backward_input(grad_out, layer.conv_geometry(), layer.weight);
    }
    case LayerKind::ReLU:
      return (cache.input.array() > 0.0).select(grad_out, 0.0);
    case LayerKind::MaxPool:
      return maxpool_backward(grad_out, layer.in, layer.window, cache.argmax);
    case LayerKind::Upsample:
      return upsample_backward(grad_out, layer.in, layer.factor);
  }
  throw GraphError("unknown layer kind");
}

Matrix run_stack(const std::vector<Layer>& layers, Matrix x, std::vector<LayerCache>* caches) {
  if (caches) caches->resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) x = forward_layer(layers[i], x, caches ? &(*caches)[i] : nullptr);
  return x;
}

void fill_gaussian(Matrix& w, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Upsample: return "upsample";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& name) {
  if (name == "dense") return LayerKind::Dense;
  if (name == "conv2d") return LayerKind::Conv2d;
  if (name == "relu") return LayerKind::ReLU;
  if (name == "maxpool") return LayerKind::MaxPool;
  if (name == "upsample") return LayerKind::Upsample;
  if (name == "sigmoid" || name == "tanh" || name == "softplus" || name == "elu" || name == "gelu")
    throw GraphError("activation '" + name + "' is not piecewise-linear");
  throw ParseError("unknown layer kind '" + name + "'");
}

Layer Layer::dense(Shape in, Shape out) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.in = in;
  l.out = out;
  l.weight = Matrix::Zero(out.size(), in.size());
  l.bias = Vector::Zero(out.size());
  return l;
}

Layer Layer::conv2d(Shape in, int out_channels, int kernel, int padding) {
  Layer l;
  l.kind = LayerKind::Conv2d;
  l.in = in;
  l.kernel = kernel;
  l.padding = padding;
  l.stride = 1;
  l.out = ConvGeometry{in, out_channels, kernel, 1, padding}.out();
  l.weight = Matrix::Zero(out_channels, in.channels * kernel * kernel);
  l.bias = Vector::Zero(out_channels);
  return l;
}

Layer Layer::relu(Shape shape) {
  Layer l;
  l.kind = LayerKind::ReLU;
  l.in = l.out = shape;
  return l;
}

Layer Layer::maxpool(Shape in, int window) {
  Layer l;
  l.kind = LayerKind::MaxPool;
  l.in = in;
  l.window = window;
  l.out = pool_out_shape(in, window);
  return l;
}

Layer Layer::upsample(Shape in, int factor) {
  Layer l;
  l.kind = LayerKind::Upsample;
  l.in = in;
  l.factor = factor;
  l.out = upsample_out_shape(in, factor);
  return l;
}

std::size_t VaeModel::parameter_count() const {
  std::size_t count = 0;
  for (const Layer* l : parameter_layers(*this)) count += l->weight.size() + l->bias.size();
  return count;
}

bool VaeModel::all_finite() const {
  for (const Layer* l : parameter_layers(*this))
    if (!l->weight.allFinite() || !l->bias.allFinite()) return false;
  return true;
}

std::vector<Layer*> parameter_layers(VaeModel& model) {
  std::vector<Layer*> out;
  for (auto& l : model.encoder)
    if (l.has_params()) out.push_back(&l);
  out.push_back(&model.mu_head);
  out.push_back(&model.logvar_head);
  for (auto& l : model.decoder)
    if (l.has_params()) out.push_back(&l);
  return out;
}

std::vector<const Layer*> parameter_layers(const VaeModel& model) {
  auto mut = parameter_layers(const_cast<VaeModel&>(model));
  return {mut.begin(), mut.end()};
}

VaeModel make_vae(Shape image, const ArchitectureConfig& arch, std::uint64_t seed) {
  if (image.channels != 1) throw GraphError("VAE input must be single-channel");
  if (arch.latent < 1) throw DomainError("latent dimension must be >= 1");
  VaeModel model;
  model.n = image.size();
  model.m = arch.latent;
  model.image = image;
  const Shape latent = flat_shape(arch.latent);

  auto push_dense_relu = [](std::vector<Layer>& stack, Shape in, Shape out) {
    stack.push_back(Layer::dense(in, out));
    stack.push_back(Layer::relu(out));
  };

  if (arch.kind == Architecture::Mlp) {
    push_dense_relu(model.encoder, flat_shape(model.n), flat_shape(arch.hidden1));
    push_dense_relu(model.encoder, flat_shape(arch.hidden1), flat_shape(arch.hidden2));
    model.mu_head = Layer::dense(flat_shape(arch.hidden2), latent);
    model.logvar_head = Layer::dense(flat_shape(arch.hidden2), latent);
    push_dense_relu(model.decoder, latent, flat_shape(arch.hidden2));
    push_dense_relu(model.decoder, flat_shape(arch.hidden2), flat_shape(arch.hidden1));
    model.decoder.push_back(Layer::dense(flat_shape(arch.hidden1), flat_shape(model.n)));
  } else {
    if (image.height % 2 != 0 || image.width % 2 != 0)
      throw GraphError("conv architecture needs even image sides, got " + image.to_string());
    const int c = arch.conv_channels;
    Layer conv_in = Layer::conv2d(image, c, 3, 1);
    const Shape feat = conv_in.out;
    model.encoder.push_back(conv_in);
    model.encoder.push_back(Layer::relu(feat));
    model.encoder.push_back(Layer::maxpool(feat, 2));
    const Shape pooled = model.encoder.back().out;
    push_dense_relu(model.encoder, pooled, flat_shape(arch.hidden2));
    model.mu_head = Layer::dense(flat_shape(arch.hidden2), latent);
    model.logvar_head = Layer::dense(flat_shape(arch.hidden2), latent);
    push_dense_relu(model.decoder, latent, flat_shape(arch.hidden2));
    push_dense_relu(model.decoder, flat_shape(arch.hidden2), pooled);
    model.decoder.push_back(Layer::upsample(pooled, 2));
    model.decoder.push_back(Layer::conv2d(model.decoder.back().out, 1, 3, 1));
  }

  std::mt19937_64 rng(seed);
  for (Layer* l : parameter_layers(model)) {
    const double fan_in = static_cast<double>(l->weight.cols());
    fill_gaussian(l->weight, std::sqrt(2.0 / fan_in), rng);
  }
  model.logvar_head.weight *= 0.1;
  return model;
}

Matrix encode_mean(const VaeModel& model, const Matrix& x) {
  return forward_layer(model.mu_head, run_stack(model.encoder, x, nullptr), nullptr);
}

Matrix decode(const VaeModel& model, const Matrix& z) { return run_stack(model.decoder, z, nullptr); }

Image reconstruct(const VaeModel& model, const Image& x) {
  if (x.size() != model.n) throw GraphError("reconstruct: image has " + std::to_string(x.size()) +
                                            " pixels, model expects " + std::to_string(model.n));
  Matrix out = decode(model, encode_mean(model, x.pixels()));
  return Image(out.col(0), x.height(), x.width());
}

ElboResult elbo_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise) {
  const Eigen::Index count = batch.cols();
  if (count == 0) throw DomainError("elbo_loss: empty batch");
  if (batch.rows() != model.n) throw GraphError("elbo_loss: batch rows do not match model input");
  if (noise.rows() != model.m || noise.cols() != count) throw DomainError("elbo_loss: noise shape mismatch");
  const double inv = 1.0 / static_cast<double>(count);

  std::vector<LayerCache> enc_cache, dec_cache;
  LayerCache mu_cache, lv_cache;
  const Matrix hidden = run_stack(model.encoder, batch, &enc_cache);
  const Matrix mu = forward_layer(model.mu_head, hidden, &mu_cache);
  const Matrix lv_raw = forward_layer(model.logvar_head, hidden, &lv_cache);
  const Matrix logvar = lv_raw.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
  const Matrix stddev = (0.5 * logvar.array()).exp().matrix();
  const Matrix z = mu + stddev.cwiseProduct(noise);
  const Matrix recon = run_stack(model.decoder, z, &dec_cache);

  ElboResult result;
  const Matrix diff = recon - batch;
  result.reconstruction = 0.5 * diff.squaredNorm() * inv;
  result.kl = 0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array()).sum() * inv;
  result.loss = result.reconstruction + result.kl;

  std::vector<const Layer*> params = parameter_layers(model);
  result.gradients.weight.reserve(params.size());
  result.gradients.bias.reserve(params.size());
  for (const Layer* l : params) {
    result.gradients.weight.push_back(Matrix::Zero(l->weight.rows(), l->weight.cols()));
    result.gradients.bias.push_back(Vector::Zero(l->bias.size()));
  }
  std::size_t slot = params.size();

  // Decoder, last layer first; parameter slots are consumed from the back.
  Matrix grad = diff * inv;
  for (std::size_t i = model.decoder.size(); i-- > 0;) {
    const Layer& l = model.decoder[i];
    Matrix* gw = nullptr;
    Vector* gb = nullptr;
    if (l.has_params()) {
      --slot;
      gw = &result.gradients.weight[slot];
      gb = &result.gradients.bias[slot];
    }
    grad = backward_layer(l, grad, dec_cache[i], gw, gb);
  }
  const Matrix grad_mu = grad + mu * inv;
  const Matrix clamp_mask = ((lv_raw.array() >= kLogvarMin) && (lv_raw.array() <= kLogvarMax)).cast<double>();
  const Matrix grad_lv =
      ((grad.array() * noise.array() * stddev.array() * 0.5 + 0.5 * (logvar.array().exp() - 1.0) * inv) *
       clamp_mask.array())
          .matrix();
  --slot;
  Matrix grad_hidden = backward_layer(model.logvar_head, grad_lv, lv_cache, &result.gradients.weight[slot],
                                      &result.gradients.bias[slot]);
  --slot;
  grad_hidden += backward_layer(model.mu_head, grad_mu, mu_cache, &result.gradients.weight[slot],
                                &result.gradients.bias[slot]);
  grad = std::move(grad_hidden);
  for (std::size_t i = model.encoder.size(); i-- > 0;) {
    const Layer& l = model.encoder[i];
    Matrix* gw = nullptr;
    Vector* gb = nullptr;
    if (l.has_params()) {
      --slot;
      gw = &result.gradients.weight[slot];
      gb = &result.gradients.bias[slot];
    }
    grad = backward_layer(l, grad, enc_cache[i], gw, gb);
  }
  return result;
}

TrainResult train(VaeModel model, const Matrix& data, const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.learning_rate < 0.0)
    throw DomainError("invalid training configuration");
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0 && cfg.epsilon > 0.0))
    throw DomainError("Adam betas must lie in (0, 1) and epsilon must be positive");
  if (data.rows() != model.n) throw GraphError("training data rows do not match model input");
  if (data.cols() < 1) throw DomainError("training data is empty");

  std::vector<Layer*> params = parameter_layers(model);
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
  for (Layer* l : params) {
    m_w.push_back(Matrix::Zero(l->weight.rows(), l->weight.cols()));
    v_w.push_back(m_w.back());
    m_b.push_back(Vector::Zero(l->bias.size()));
    v_b.push_back(m_b.back());
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<int> order(static_cast<std::size_t>(data.cols()));
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int count = static_cast<int>(stop - start);
      Matrix batch(model.n, count);
      for (int j = 0; j < count; ++j) batch.col(j) = data.col(order[start + j]);
      Matrix noise(model.m, count);
      for (int j = 0; j < count; ++j)
        for (int i = 0; i < model.m; ++i) noise(i, j) = normal(rng);

      ElboResult elbo = elbo_loss(model, batch, noise);
      if (!std::isfinite(elbo.loss) || elbo.loss > 1e6)
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(start / cfg.batch_size) + " (loss " + std::to_string(elbo.loss) + ")");
      total += elbo.loss * count;

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto adam = [&](auto& param, const auto& g, auto& m1, auto& m2) {
        m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
        m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        param.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.epsilon);
      };
      for (std::size_t p = 0; p < params.size(); ++p) {
        adam(params[p]->weight, elbo.gradients.weight[p], m_w[p], v_w[p]);
        adam(params[p]->bias, elbo.gradients.bias[p], m_b[p], v_b[p]);
      }
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace pwlsi
