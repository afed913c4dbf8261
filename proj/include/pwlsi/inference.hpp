#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pwlsi/conditioning.hpp"
#include "pwlsi/graph.hpp"
#include "pwlsi/parallel.hpp"
#include "pwlsi/truncnorm.hpp"

namespace pwlsi {

struct SweepOptions {
  /// Step past each piece's upper end, in units of sigma; floored at 1e-12.
  double delta_sigmas = 1e-4;
  /// Half-width of the search range beyond |T|, in units of sigma.
  double range_sigmas = 10.0;
  long max_steps = 1'000'000;
};

struct SweepResult {
  TruncationSet set;
  double z_min = 0.0;
  double z_max = 0.0;
  double delta = 0.0;
  long steps = 0;            // piece_at calls
  long matching_pieces = 0;  // pieces whose region equals the observed one
  long degenerate_pieces = 0;
};

/// Collects every line interval on which the detector returns `observed`,
/// scanning z from -|T| - 10 sigma to |T| + 10 sigma.
SweepResult sweep(const PwlGraph& g, const AffineLine& line, const AnomalyRegion& observed, double t,
                  double variance, const SweepOptions& opts = {});
/// Convenience overload: builds the line from x, eta and Sigma.
SweepResult sweep(const PwlGraph& g, const Image& x, const CovMatrix& sigma, const Vector& eta,
                  const SweepOptions& opts = {});

/// Truncated-normal p-value over the single piece containing T.
double p_over_conditioning(const PwlGraph& g, const AffineLine& line, double t, double variance,
                           double offset = 0.0);
double p_over_conditioning(const PwlGraph& g, const Image& x, const CovMatrix& sigma, const Vector& eta);

enum class TestStatus { Ok, UndefinedHypothesis };

struct TestOutcome {
  TestStatus status = TestStatus::UndefinedHypothesis;
  AnomalyRegion region;
  double observed = 0.0;
  double variance = 0.0;
  TruncationSet truncation;
  Interval oc_interval{0.0, 0.0};
  double p_selective = 1.0;
  double p_naive = 1.0;
  double p_bonferroni = 1.0;
  double p_oc = 1.0;
  SweepResult sweep;
  /// Truncated-normal mass underflowed even in log space.
  bool degenerate_mass = false;

  bool defined() const { return status == TestStatus::Ok; }
};

struct TestOptions {
  SweepOptions sweep;
  /// c in H0: eta^T s = c.
  double offset = 0.0;
};

/// Detect, build the mean-difference hypothesis, and compute all four p-values.
/// An empty or full region yields status UndefinedHypothesis and no p-values.
TestOutcome run_test(const PwlGraph& g, const Image& x, const CovMatrix& sigma, const TestOptions& opts = {});

/// JSON object describing an outcome (region, statistic, p-values, diagnostics).
std::string outcome_to_json(const TestOutcome& outcome);

/// For each z on the grid, whether forward(g, a + b z) returns `target`.
/// Independent of auto-conditioning; used as an oracle and in benchmarks.
std::vector<char> grid_scan(const PwlGraph& g, const AffineLine& line, const AnomalyRegion& target,
                            const std::vector<double>& grid, Execution ex = Execution::Serial);

}  // namespace pwlsi
