#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pwlsi/graph.hpp"
#include "pwlsi/inference.hpp"
#include "pwlsi/noise.hpp"
#include "pwlsi/parallel.hpp"

namespace pwlsi {

enum class ExperimentKind { Type1, Power, Robustness, Single };
enum class CovKind { Independence, Correlation };

std::string to_string(ExperimentKind k);
std::string to_string(CovKind k);
ExperimentKind parse_experiment_kind(const std::string& s);
CovKind parse_cov_kind(const std::string& s);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Type1;
  int n = 64;
  int trials = 1000;
  std::vector<double> deltas = {1.0, 2.0, 3.0, 4.0};  // Power only
  CovKind cov = CovKind::Independence;
  double rho = 0.25;
  std::vector<double> alphas = {0.05};
  double lambda = 1.2;
  int filter_window = 3;
  int patch_side = 4;
  std::uint64_t seed = 1;
  std::vector<Family> families = {kAllFamilies.begin(), kAllFamilies.end()};  // Robustness only
  std::vector<double> w1_targets = {0.01, 0.02, 0.03, 0.04};                  // Robustness only

  /// Throws DomainError when a field is out of range.
  void validate() const;
};

/// Raw per-trial p-values; `defined` false for empty/full regions.
struct TrialRecord {
  bool defined = false;
  bool failed = false;
  std::string error;
  double p_selective = 1.0;
  double p_naive = 1.0;
  double p_bonferroni = 1.0;
  double p_oc = 1.0;
  long intervals = 0;
};

struct ResultRow {
  std::string method;   // selective, naive, bonf, oc
  std::string setting;  // type1, power, robustness:<family>:<w1>, single
  int n = 0;
  double delta = 0.0;
  std::string cov;
  double alpha = 0.05;
  int trials = 0;
  int undefined = 0;
  int failed = 0;
  int rejections = 0;
  double rate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 1.0;
};

/// Clopper-Pearson 95% interval for k successes in n trials.
std::pair<double, double> binomial_ci(int successes, int trials);

/// One batch of trials. Image for trial i uses seed base + i.
/// `make_image(seed)` produces the test image.
template <class MakeImage>
std::vector<TrialRecord> run_trials(const PwlGraph& g, const CovMatrix& sigma, int trials, std::uint64_t base_seed,
                                    MakeImage&& make_image, Execution ex);

/// Runs every setting in the spec against the detector graph.
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const PwlGraph& g,
                                      Execution ex = Execution::Parallel);

/// Aggregates trial records into four rows (one per method) per alpha.
std::vector<ResultRow> summarize(const std::vector<TrialRecord>& records, const std::string& setting, int n,
                                 double delta, const std::string& cov, const std::vector<double>& alphas);

std::string csv_header();
std::string to_csv(const std::vector<ResultRow>& rows);

/// Kolmogorov-Smirnov distance of samples from U[0, 1].
double ks_uniform(std::vector<double> samples);

/// run_test reduced to the four p-values.
TrialRecord run_single_trial(const PwlGraph& g, const Image& x, const CovMatrix& sigma);

template <class MakeImage>
std::vector<TrialRecord> run_trials(const PwlGraph& g, const CovMatrix& sigma, int trials, std::uint64_t base_seed,
                                    MakeImage&& make_image, Execution ex) {
  std::vector<TrialRecord> records(static_cast<std::size_t>(trials));
  for_each_index(trials, ex, [&](int i) {
    try {
      const Image x = make_image(base_seed + static_cast<std::uint64_t>(i));
      records[static_cast<std::size_t>(i)] = run_single_trial(g, x, sigma);
    } catch (const std::exception& e) {
      records[static_cast<std::size_t>(i)].failed = true;
      records[static_cast<std::size_t>(i)].error = e.what();
    }
  });
  return records;
}

}  // namespace pwlsi
