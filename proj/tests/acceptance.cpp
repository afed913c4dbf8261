// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "pwlsi/detector.hpp"
#include "pwlsi/errors.hpp"
#include "pwlsi/experiment.hpp"
#include "pwlsi/inference.hpp"
#include "pwlsi/noise.hpp"
#include "test_support.hpp"

using namespace pwlsi;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and Monte-Carlo settings.
constexpr int kGridPoints = 100000;
constexpr double kGridAgreement = 0.999;
constexpr double kEndpointSlack = 1e-3;  // in units of sigma
constexpr double kGridSeconds = 120.0;
constexpr int kAffineIntervals = 100;
constexpr double kCollinearity = 1e-8;
constexpr int kTnUnions = 100;
constexpr double kTnTolerance = 1e-8;
constexpr int kTrials = 1000;
constexpr double kAlpha = 0.05;
constexpr double kTypeOneUpper = 0.064;
constexpr double kTypeOneLower = 0.037;
constexpr double kNaiveFloor = 0.10;
constexpr double kTypeOneMinutes = 30.0;
constexpr double kKsLimit = 0.06;
constexpr double kPowerMargin = 0.05;
constexpr double kPowerDip = 0.03;
constexpr double kRobustW1 = 0.04;
constexpr double kRobustLow = 0.02;
constexpr double kRobustHigh = 0.09;
constexpr double kCalibrationTolerance = 1e-4;
constexpr double kGradientTolerance = 1e-4;
constexpr std::uint64_t kTrialSeed = 1;

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s  (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void guarded(int id, const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("threw: ") + e.what());
  }
}

const ResultRow& row_for(const std::vector<ResultRow>& rows, const std::string& method, double delta = 0.0) {
  for (const auto& r : rows)
    if (r.method == method && r.delta == delta && r.alpha == kAlpha) return r;
  throw std::runtime_error("missing row " + method);
}

int run_cli(const std::string& args, std::string* err_text = nullptr) {
  const fs::path err = fs::path(PWLSI_TEST_WORKDIR) / "acceptance_stderr.txt";
  const std::string cmd = std::string(PWLSI_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  if (err_text) {
    std::ifstream in(err);
    std::ostringstream buf;
    buf << in.rdbuf();
    *err_text = buf.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void piece_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  const PwlGraph g = assemble_detector(testing::trained_vae(64), {});
  const CovMatrix sigma = CovMatrix::identity(64);
  std::uint64_t seed = kTrialSeed;
  Image x = Image::from_flat(standard_normal(64, seed));
  while (!forward(g, x).region.testable()) x = Image::from_flat(standard_normal(64, ++seed));
  const AnomalyRegion observed = forward(g, x).region;
  const Vector eta = build_eta(observed, 64);
  const AffineLine line = init_line(x, eta, sigma);
  const TestStatistic stat = test_statistic(eta, x.pixels(), sigma);
  const SweepResult r = sweep(g, line, observed, stat.value, stat.variance);

  std::vector<double> grid(kGridPoints);
  for (int i = 0; i < kGridPoints; ++i)
    grid[static_cast<std::size_t>(i)] = r.z_min + (r.z_max - r.z_min) * i / (kGridPoints - 1.0);
  const auto inside = grid_scan(g, line, observed, grid, Execution::Parallel);
  const double slack = kEndpointSlack * std::sqrt(stat.variance);
  int agree = 0, stray = 0;
  for (int i = 0; i < kGridPoints; ++i) {
    const double z = grid[static_cast<std::size_t>(i)];
    if ((inside[static_cast<std::size_t>(i)] != 0) == r.set.contains(z)) {
      ++agree;
      continue;
    }
    bool near_end = false;
    for (const auto& iv : r.set.intervals())
      near_end = near_end || std::abs(z - iv.lower) <= slack || std::abs(z - iv.upper) <= slack;
    if (!near_end) ++stray;
  }
  const double frac = static_cast<double>(agree) / kGridPoints;
  const double secs = seconds_since(t0);
  report(1, "piece soundness vs dense grid", frac >= kGridAgreement && stray == 0 && secs <= kGridSeconds,
         fmt("agreement %.5f, %d disagreements away from endpoints, %zu intervals, %ld pieces, %.1f s", frac, stray,
             r.set.size(), r.steps, secs));
}

void affine_exactness() {
  const PwlGraph g = assemble_detector(testing::trained_vae(64), {});
  const CovMatrix sigma = ar1_kron_cov(8, 0.25);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double worst = 0.0;
  int tested = 0;
  std::uint64_t seed = 100;
  while (tested < kAffineIntervals) {
    const Vector x = sample_gaussian(Vector::Zero(64), sigma, seed++).pixels();
    const AffineLine line = init_line(x, build_eta(AnomalyRegion({0, 9, 18, 27}, 64), 64), sigma);
    for (int k = 0; k < 10 && tested < kAffineIntervals; ++k) {
      const PieceResult p = piece_at(g, line, -4.0 + 8.0 * u01(rng));
      if (p.degenerate) continue;
      const double lo = std::max(p.lower, -50.0), hi = std::min(p.upper, 50.0);
      std::array<double, 3> zs{};
      for (double& t : zs) t = lo + (hi - lo) * (0.02 + 0.96 * u01(rng));
      std::sort(zs.begin(), zs.end());
      if (zs[2] - zs[0] <= 0.0) continue;
      const Vector s0 = forward(g, line.at(zs[0])).score, s1 = forward(g, line.at(zs[1])).score,
                   s2 = forward(g, line.at(zs[2])).score;
      const Vector interp = s0 + (s2 - s0) * ((zs[1] - zs[0]) / (zs[2] - zs[0]));
      worst = std::max(worst, (s1 - interp).norm() / (1.0 + s1.norm()));
      ++tested;
    }
  }
  report(2, "affine exactness within pieces", worst <= kCollinearity,
         fmt("%d intervals, worst relative collinearity gap %.2e", tested, worst));
}

void tn_numerics() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int far = 0;
  for (int rep = 0; rep < kTnUnions; ++rep) {
    const int count = 1 + static_cast<int>(rng() % 5);
    const bool beyond = rep % 3 == 0;
    double cur = beyond ? 8.0 + 20.0 * u(rng) : -5.0 + 7.0 * u(rng);
    std::vector<Interval> ivs;
    for (int k = 0; k < count; ++k) {
      const double lo = cur + 0.05 + u(rng), hi = lo + 0.01 + 1.5 * u(rng);
      ivs.push_back({lo, hi});
      cur = hi;
    }
    if (beyond && rep % 2 == 0)
      for (auto& iv : ivs) iv = {-iv.upper, -iv.lower};
    const double sigma = 0.3 + 2.0 * u(rng);
    for (auto& iv : ivs) iv = {iv.lower * sigma, iv.upper * sigma};
    const TruncationSet z(ivs);
    if (beyond) ++far;
    const Interval pick = z.intervals()[rng() % z.size()];
    const double t = pick.lower + (pick.upper - pick.lower) * u(rng);
    const double got = tn_two_sided_p(t, sigma * sigma, z);
    worst = std::max(worst, std::abs(got - testing::quadrature_tn_p(t, sigma, z.intervals())));
  }
  report(3, "truncated-normal p-value vs quadrature", worst <= kTnTolerance,
         fmt("%d unions (%d beyond 8 sigma), worst abs error %.2e", kTnUnions, far, worst));
}

void type_one_and_uniformity() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  std::vector<double> null_p;
  for (int n : {64, 256}) {
    const PwlGraph g = assemble_detector(testing::trained_vae(n), {});
    for (CovKind cov : {CovKind::Independence, CovKind::Correlation}) {
      const CovMatrix sigma = cov == CovKind::Independence ? CovMatrix::identity(n) : ar1_kron_cov(default_shape(n).first, 0.25);
      const auto recs = run_trials(
          g, sigma, kTrials, kTrialSeed,
          [&](std::uint64_t s) { return make_synthetic(n, 0.0, 4, sigma, s).image; }, Execution::Parallel);
      const auto rows = summarize(recs, "type1", n, 0.0, to_string(cov), {kAlpha});
      const double sel = row_for(rows, "selective").rate, oc = row_for(rows, "oc").rate,
                   bonf = row_for(rows, "bonf").rate, naive = row_for(rows, "naive").rate;
      const bool ok = sel <= kTypeOneUpper && sel >= kTypeOneLower && oc <= kTypeOneUpper && bonf <= kTypeOneUpper &&
                      naive > kNaiveFloor;
      pass = pass && ok;
      detail += fmt("n=%d %s: sel %.3f oc %.3f bonf %.3f naive %.3f (tested %d); ", n, to_string(cov).c_str(), sel, oc,
                    bonf, naive, kTrials - row_for(rows, "selective").undefined - row_for(rows, "selective").failed);
      if (n == 64 && cov == CovKind::Independence)
        for (const auto& r : recs)
          if (r.defined && !r.failed) null_p.push_back(r.p_selective);
    }
  }
  const double minutes = seconds_since(t0) / 60.0;
  detail += fmt("%.1f min", minutes);
  report(4, "type-I error control", pass && minutes <= kTypeOneMinutes, detail);

  const double ks = ks_uniform(null_p);
  report(5, "null uniformity of selective p-values", ks < kKsLimit,
         fmt("KS distance %.4f over %zu defined null trials (n=64, indep)", ks, null_p.size()));
}

void power_ordering() {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::Power;
  spec.n = 256;
  spec.trials = kTrials;
  spec.seed = kTrialSeed;
  spec.alphas = {kAlpha};
  const auto rows = run_experiment(spec, assemble_detector(testing::trained_vae(256), {}));
  const double sel = row_for(rows, "selective", 4.0).rate, oc = row_for(rows, "oc", 4.0).rate,
               bonf = row_for(rows, "bonf", 4.0).rate;
  bool monotone = true;
  std::string curve;
  double prev = 0.0;
  for (double d : spec.deltas) {
    const double p = row_for(rows, "selective", d).rate;
    monotone = monotone && p >= prev - kPowerDip;
    prev = p;
    curve += fmt("%.3f ", p);
  }
  report(6, "power ordering", sel > oc + kPowerMargin && sel > bonf + kPowerMargin && monotone,
         fmt("delta=4: sel %.3f oc %.3f bonf %.3f; selective by delta: %s", sel, oc, bonf, curve.c_str()));
}

void robustness() {
  const int n = 64;
  const PwlGraph g = assemble_detector(testing::trained_vae(n), {});
  bool pass = true;
  std::string detail;
  for (Family f : kAllFamilies) {
    const NoiseFamily fam = calibrate(f, kRobustW1);
    const double roundtrip = std::abs(testing::trapezoid_w1(fam) - kRobustW1);
    const auto recs = run_trials(
        g, CovMatrix::identity(n), kTrials, kTrialSeed,
        [&](std::uint64_t s) { return Image::from_flat(fam.sample(n, s)); }, Execution::Parallel);
    const double rate = row_for(summarize(recs, "robustness", n, 0.0, "indep", {kAlpha}), "selective").rate;
    const bool ok = rate >= kRobustLow && rate <= kRobustHigh && roundtrip <= kCalibrationTolerance;
    pass = pass && ok;
    detail += fmt("%s: rate %.3f, W1 err %.1e; ", to_string(f).c_str(), rate, roundtrip);
  }
  report(7, "robustness to non-Gaussian noise", pass, detail);
}

void gradients() {
  double worst = 0.0;
  for (Architecture arch : {Architecture::Mlp, Architecture::Conv})
    for (std::uint64_t seed : {1u, 2u, 3u}) worst = std::max(worst, testing::gradient_gap(testing::small_model(arch, seed), seed));
  report(8, "gradient correctness", worst <= kGradientTolerance,
         fmt("worst per-layer relative gap %.2e over MLP and conv (n=16, m=3)", worst));
}

void degenerate_handling() {
  const fs::path dir = fs::path(PWLSI_TEST_WORKDIR) / "acceptance_work";
  fs::create_directories(dir);
  VaeModel zero = make_vae({1, 4, 4}, {}, 1);
  for (Layer* l : parameter_layers(zero)) {
    l->weight.setZero();
    l->bias.setZero();
  }
  const fs::path w = dir / "zero.json";
  save_weights(zero, w);
  bool pass = true;
  std::string detail;
  for (auto [label, value] : {std::pair{"empty", 0.0}, {"full", 5.0}}) {
    const fs::path img = dir / (std::string(label) + ".csv");
    {
      std::ofstream out(img);
      for (int r = 0; r < 4; ++r) out << value << ',' << value << ',' << value << ',' << value << '\n';
    }
    std::string err;
    const int code = run_cli("test --weights " + w.string() + " " + img.string(), &err);
    const TestOutcome o = run_test(assemble_detector(zero, {}), Image::from_flat(Vector::Constant(16, value)),
                                   CovMatrix::identity(16));
    const bool ok = code == 2 && err.find("no testable region") != std::string::npos && !o.defined() &&
                    outcome_to_json(o).find("p_selective") == std::string::npos;
    pass = pass && ok;
    detail += fmt("%s region: exit %d, |A| = %d; ", label, code, o.region.size());
  }
  report(9, "degenerate regions are undefined", pass, detail);
}

void determinism() {
  const fs::path dir = fs::path(PWLSI_TEST_WORKDIR) / "acceptance_work";
  fs::create_directories(dir);
  const fs::path a = dir / "run1.csv", b = dir / "run2.csv";
  fs::remove(a);
  fs::remove(b);
  const std::string args = "experiment --kind power --n 64 --trials 1000 --seed 11 --out ";
  const int c1 = run_cli(args + a.string()), c2 = run_cli(args + b.string());
  const std::string s1 = slurp(a), s2 = slurp(b);
  report(10, "byte-identical CSV across runs", c1 == 0 && c2 == 0 && !s1.empty() && s1 == s2,
         fmt("exit codes %d/%d, %zu bytes, %s", c1, c2, s1.size(), s1 == s2 ? "identical" : "different"));
}

}  // namespace

int main() {
  std::printf("acceptance run, %d worker threads\n", worker_count());
  guarded(1, "piece soundness vs dense grid", piece_soundness);
  guarded(2, "affine exactness within pieces", affine_exactness);
  guarded(3, "truncated-normal p-value vs quadrature", tn_numerics);
  guarded(4, "type-I error control", type_one_and_uniformity);
  guarded(6, "power ordering", power_ordering);
  guarded(7, "robustness to non-Gaussian noise", robustness);
  guarded(8, "gradient correctness", gradients);
  guarded(9, "degenerate regions are undefined", degenerate_handling);
  guarded(10, "byte-identical CSV across runs", determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
