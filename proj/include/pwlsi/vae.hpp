#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pwlsi/kernels.hpp"
#include "pwlsi/tensor.hpp"

namespace pwlsi {

enum class LayerKind { Dense, Conv2d, ReLU, MaxPool, Upsample };

std::string to_string(LayerKind kind);
/// Throws GraphError for non-piecewise-linear activations (sigmoid, tanh, ...)
/// and ParseError for unknown names.
LayerKind parse_layer_kind(const std::string& name);

/// One network layer. Dense weight is out x in; Conv2d weight is
/// out_channels x (in_channels * kernel * kernel).
struct Layer {
  LayerKind kind = LayerKind::ReLU;
  Shape in;
  Shape out;
  Matrix weight;
  Vector bias;
  int kernel = 0;    // Conv2d
  int padding = 0;   // Conv2d
  int stride = 1;    // Conv2d
  int window = 0;    // MaxPool
  int factor = 0;    // Upsample

  static Layer dense(Shape in, Shape out);
  static Layer conv2d(Shape in, int out_channels, int kernel, int padding);
  static Layer relu(Shape shape);
  static Layer maxpool(Shape in, int window);
  static Layer upsample(Shape in, int factor);

  bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
  ConvGeometry conv_geometry() const { return {in, out.channels, kernel, stride, padding}; }
};

enum class Architecture { Mlp, Conv };

struct VaeModel {
  int n = 0;
  int m = 0;
  Shape image;                  // 1 x H x W
  std::vector<Layer> encoder;   // trunk, ends in a hidden feature vector
  Layer mu_head;                // Dense -> m
  Layer logvar_head;            // Dense -> m, clamped to [-10, 10] when used
  std::vector<Layer> decoder;   // m -> n, identity output

  /// Parameter count across all layers.
  std::size_t parameter_count() const;
  bool all_finite() const;
};

struct ArchitectureConfig {
  Architecture kind = Architecture::Mlp;
  int latent = 10;
  int hidden1 = 64;
  int hidden2 = 32;
  int conv_channels = 4;
};

/// Builds a model with He-scaled Gaussian weights and zero biases.
VaeModel make_vae(Shape image, const ArchitectureConfig& arch, std::uint64_t seed);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

/// Same layout as VaeModel, holding dL/dparams.
struct VaeGradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

struct ElboResult {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  VaeGradients gradients;
};

/// Mean over the batch of 0.5 * ||x - mu_theta(z)||^2 + KL(q(z|x) || N(0, I)),
/// z = mu + exp(logvar / 2) * noise. Batch and noise are column-per-sample.
ElboResult elbo_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise);

/// Visits every parameter-bearing layer in a fixed order
/// (encoder, mu head, logvar head, decoder).
std::vector<Layer*> parameter_layers(VaeModel& model);
std::vector<const Layer*> parameter_layers(const VaeModel& model);

struct TrainResult {
  VaeModel model;
  std::vector<double> epoch_loss;
};

/// Adam on the ELBO. Data is column-per-image. Aborts with TrainingError if
/// the loss becomes non-finite or exceeds 1e6.
TrainResult train(VaeModel model, const Matrix& data, const TrainConfig& cfg);

/// Encoder mean head on a batch of inputs.
Matrix encode_mean(const VaeModel& model, const Matrix& x);
Matrix decode(const VaeModel& model, const Matrix& z);
/// mu_theta(mu_phi(x)); deterministic.
Image reconstruct(const VaeModel& model, const Image& x);

/// pwl-vae-v1 JSON weight file.
void save_weights(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_weights(const std::filesystem::path& path);
std::string weights_to_json(const VaeModel& model);
VaeModel weights_from_json(const std::string& text);

}  // namespace pwlsi
