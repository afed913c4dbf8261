// Command-line front end: train a detector VAE, test one image, or run a
// Monte-Carlo experiment and write the rejection-rate CSV.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pwlsi/detector.hpp"
#include "pwlsi/errors.hpp"
#include "pwlsi/experiment.hpp"
#include "pwlsi/graph.hpp"
#include "pwlsi/inference.hpp"
#include "pwlsi/vae.hpp"

namespace {

using namespace pwlsi;

enum ExitCode { kOk = 0, kUsage = 1, kUndefined = 2, kNumerical = 3, kIo = 4 };

struct TrainArgs {
  int n = 64;
  int epochs = 200;
  int batch = 64;
  double lr = 1e-3;
  int latent = 10;
  int train_size = 1000;
  std::string arch = "mlp";
  std::uint64_t seed = 0;
  double lambda = 1.2;
  int filter_window = 3;
  std::string out = "weights.json";
  bool large = false;
};

void check_size(int n, bool large) {
  if (n > 256 && !large) throw DomainError("n = " + std::to_string(n) + " requires --large");
}

Matrix normal_training_set(int n, int count, std::uint64_t seed) {
  Matrix data(n, count);
  for (int j = 0; j < count; ++j) data.col(j) = standard_normal(n, seed + static_cast<std::uint64_t>(j));
  return data;
}

std::string weights_document(const VaeModel& model, const DetectorConfig& det) {
  auto doc = nlohmann::json::parse(weights_to_json(model));
  doc["detector"] = {{"lambda", det.lambda}, {"filter_window", det.filter_window}};
  doc["graph"] = nlohmann::json::parse(graph_summary_json(assemble_detector(model, det)));
  return doc.dump();
}

DetectorConfig detector_from_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  DetectorConfig det;
  try {
    const auto doc = nlohmann::json::parse(buf.str());
    if (doc.contains("detector")) {
      det.lambda = doc["detector"].value("lambda", det.lambda);
      det.filter_window = doc["detector"].value("filter_window", det.filter_window);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return det;
}

TrainResult train_detector_vae(const TrainArgs& a) {
  check_size(a.n, a.large);
  const auto [h, w] = default_shape(a.n);
  ArchitectureConfig arch;
  arch.latent = a.latent;
  arch.kind = a.arch == "conv" ? Architecture::Conv : Architecture::Mlp;
  if (a.arch != "mlp" && a.arch != "conv") throw DomainError("--arch must be mlp or conv");
  VaeModel model = make_vae({1, h, w}, arch, a.seed);
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed + 1;
  // Training images come from a seed stream disjoint from experiment trials.
  return train(std::move(model), normal_training_set(a.n, a.train_size, (a.seed + 7) << 32), cfg);
}

int cmd_train(const TrainArgs& a) {
  TrainResult result = train_detector_vae(a);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    std::printf("epoch %zu loss %.6f\n", e + 1, result.epoch_loss[e]);
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw ParseError("cannot write " + a.out);
  out << weights_document(result.model, {a.lambda, a.filter_window}) << '\n';
  if (!out) throw ParseError("failed writing " + a.out);
  std::printf("wrote %s (%zu parameters)\n", a.out.c_str(), result.model.parameter_count());
  return kOk;
}

Image read_image_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open image " + path);
  std::vector<double> values;
  int rows = 0, cols = -1;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    int count = 0;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      if (cell.find_first_not_of(" \t\r", used) != std::string::npos)
        throw ParseError(path + ":" + std::to_string(lineno) + ": trailing characters in '" + cell + "'");
      values.push_back(v);
      ++count;
    }
    if (cols >= 0 && count != cols) throw ParseError(path + ":" + std::to_string(lineno) + ": ragged row");
    cols = count;
    ++rows;
  }
  if (rows == 0 || cols <= 0) throw ParseError(path + ": empty image");
  Vector px = Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  try {
    return Image(px, rows, cols);
  } catch (const DomainError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

CovMatrix make_cov(const std::string& kind, int n, double rho) {
  if (parse_cov_kind(kind) == CovKind::Independence) return CovMatrix::identity(n);
  const auto [h, w] = default_shape(n);
  if (h != w) throw DomainError("ar covariance needs a square image");
  return ar1_kron_cov(h, rho);
}

struct TestArgs {
  std::string weights;
  std::string image;
  std::string cov = "indep";
  double rho = 0.25;
  double lambda = 0.0;
  int filter_window = 0;
};

int cmd_test(const TestArgs& a) {
  const VaeModel model = load_weights(a.weights);
  DetectorConfig det = detector_from_file(a.weights);
  if (a.lambda > 0.0) det.lambda = a.lambda;
  if (a.filter_window > 0) det.filter_window = a.filter_window;
  const PwlGraph g = assemble_detector(model, det);
  const Image x = read_image_csv(a.image);
  if (x.size() != model.n)
    throw GraphError("image has " + std::to_string(x.size()) + " pixels, weights expect " + std::to_string(model.n));
  const Image shaped(x.pixels(), model.image.height, model.image.width);
  const TestOutcome outcome = run_test(g, shaped, make_cov(a.cov, model.n, a.rho));
  std::cout << outcome_to_json(outcome) << '\n';
  if (!outcome.defined()) {
    std::cerr << "no testable region\n";
    return kUndefined;
  }
  return kOk;
}

struct ExperimentArgs {
  std::string kind = "type1";
  std::vector<double> deltas;
  std::vector<double> alphas;
  std::string cov = "indep";
  std::vector<std::string> families;
  std::vector<double> w1;
  std::string weights;
  std::string out;
  bool serial = false;
  TrainArgs train;
};

int cmd_experiment(ExperimentArgs a, const ExperimentSpec& defaults) {
  ExperimentSpec spec = defaults;
  spec.kind = parse_experiment_kind(a.kind);
  spec.cov = parse_cov_kind(a.cov);
  spec.n = a.train.n;
  spec.lambda = a.train.lambda;
  spec.filter_window = a.train.filter_window;
  if (!a.deltas.empty()) spec.deltas = a.deltas;
  if (spec.kind == ExperimentKind::Type1) spec.deltas = {0.0};
  if (!a.alphas.empty()) spec.alphas = a.alphas;
  else if (spec.kind == ExperimentKind::Robustness) spec.alphas = {0.05, 0.10};
  if (!a.families.empty()) {
    spec.families.clear();
    for (const auto& f : a.families) spec.families.push_back(parse_family(f));
  }
  if (!a.w1.empty()) spec.w1_targets = a.w1;
  spec.validate();
  check_size(spec.n, a.train.large);

  VaeModel model;
  if (!a.weights.empty()) {
    model = load_weights(a.weights);
  } else {
    std::cerr << "no --weights given; training a VAE for n = " << spec.n << '\n';
    model = train_detector_vae(a.train).model;
  }
  const PwlGraph g = assemble_detector(model, {spec.lambda, spec.filter_window});
  const auto rows = run_experiment(spec, g, a.serial ? Execution::Serial : Execution::Parallel);
  const std::string csv = to_csv(rows);
  if (a.out.empty() || a.out == "-") {
    std::cout << csv;
  } else {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw ParseError("cannot write " + a.out);
    out << csv;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective inference for anomaly regions from piecewise-linear VAE detectors"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto add_common = [](CLI::App* sub, TrainArgs& t) {
    sub->add_option("--n", t.n, "Pixels per image (square)");
    sub->add_option("--lambda", t.lambda, "Anomaly threshold on the filtered reconstruction error");
    sub->add_option("--filter-window", t.filter_window, "Odd mean-filter window (1 disables)");
    sub->add_option("--seed", t.seed, "Base seed");
    sub->add_flag("--large", t.large, "Allow n = 1024 / 4096");
  };
  auto add_training = [](CLI::App* sub, TrainArgs& t) {
    sub->add_option("--epochs", t.epochs, "Training epochs");
    sub->add_option("--batch", t.batch, "Minibatch size");
    sub->add_option("--lr", t.lr, "Adam learning rate");
    sub->add_option("--latent", t.latent, "Latent dimension");
    sub->add_option("--train-size", t.train_size, "Number of N(0, I) training images");
    sub->add_option("--arch", t.arch, "mlp or conv");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "Train a VAE on N(0, I) images and write pwl-vae-v1 JSON");
  add_common(train_cmd, train_args);
  add_training(train_cmd, train_args);
  train_cmd->add_option("--out", train_args.out, "Weight file to write");

  TestArgs test_args;
  CLI::App* test_cmd = app.add_subcommand("test", "Detect and test the anomaly region of one CSV image");
  test_cmd->add_option("--weights", test_args.weights, "pwl-vae-v1 weight file")->required();
  test_cmd->add_option("image,--image", test_args.image, "CSV grid of pixel values")->required();
  test_cmd->add_option("--cov", test_args.cov, "indep or ar");
  test_cmd->add_option("--rho", test_args.rho, "AR(1) coefficient for --cov ar");
  test_cmd->add_option("--lambda", test_args.lambda, "Override the stored threshold");
  test_cmd->add_option("--filter-window", test_args.filter_window, "Override the stored filter window");

  ExperimentArgs exp_args;
  ExperimentSpec spec_defaults;
  CLI::App* exp_cmd = app.add_subcommand("experiment", "Monte-Carlo rejection rates as CSV");
  add_common(exp_cmd, exp_args.train);
  add_training(exp_cmd, exp_args.train);
  exp_cmd->add_option("--kind", exp_args.kind, "type1, power, robustness or single");
  exp_cmd->add_option("--trials", spec_defaults.trials, "Trials per setting");
  exp_cmd->add_option("--delta", exp_args.deltas, "Signal strengths")->delimiter(',');
  exp_cmd->add_option("--cov", exp_args.cov, "indep or ar");
  exp_cmd->add_option("--rho", spec_defaults.rho, "AR(1) coefficient");
  exp_cmd->add_option("--alpha", exp_args.alphas, "Significance levels")->delimiter(',');
  exp_cmd->add_option("--patch", spec_defaults.patch_side, "Side of the planted square patch");
  exp_cmd->add_option("--family", exp_args.families, "Noise families for robustness")->delimiter(',');
  exp_cmd->add_option("--w1", exp_args.w1, "Wasserstein-1 targets for robustness")->delimiter(',');
  exp_cmd->add_option("--weights", exp_args.weights, "Trained weights (trains on the fly when omitted)");
  exp_cmd->add_option("--out", exp_args.out, "CSV output path (stdout when omitted)");
  exp_cmd->add_flag("--serial", exp_args.serial, "Run trials on the serial reference path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    spec_defaults.seed = exp_args.train.seed;
    if (*train_cmd) return cmd_train(train_args);
    if (*test_cmd) return cmd_test(test_args);
    if (*exp_cmd) return cmd_experiment(exp_args, spec_defaults);
  } catch (const UndefinedHypothesis& e) {
    std::cerr << "no testable region\n";
    return kUndefined;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
