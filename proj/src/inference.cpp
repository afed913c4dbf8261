#include "pwlsi/inference.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "pwlsi/detector.hpp"
#include "pwlsi/errors.hpp"

namespace pwlsi {

SweepResult sweep(const PwlGraph& g, const AffineLine& line, const AnomalyRegion& observed, double t,
                  double variance, const SweepOptions& opts) {
  if (!observed.testable()) throw UndefinedHypothesis();
  if (!(variance > 0.0)) throw DomainError("sweep: variance must be positive");
  const double sigma = std::sqrt(variance);
  SweepResult r;
  r.z_min = -std::abs(t) - opts.range_sigmas * sigma;
  r.z_max = std::abs(t) + opts.range_sigmas * sigma;
  r.delta = std::max(opts.delta_sigmas * sigma, 1e-12);

  double z = r.z_min;
  while (z <= r.z_max) {
    if (++r.steps > opts.max_steps)
      throw SweepBudgetError("sweep exceeded " + std::to_string(opts.max_steps) + " steps at z = " +
                             std::to_string(z) + " of [" + std::to_string(r.z_min) + ", " +
                             std::to_string(r.z_max) + "]");
    const PieceResult piece = piece_at(g, line, z);
    if (piece.degenerate) ++r.degenerate_pieces;
    if (piece.region == observed) {
      ++r.matching_pieces;
      r.set.add({piece.lower, piece.upper});
    }
    z = std::max(piece.upper, z) + r.delta;
  }
  if (!r.set.contains(t)) {
    // The observed piece fell inside a delta gap.
    const PieceResult piece = piece_at(g, line, t);
    ++r.steps;
    if (piece.region == observed) {
      ++r.matching_pieces;
      r.set.add({piece.lower, piece.upper});
    } else {
      throw InconsistencyError("piece at the observed statistic does not reproduce the observed region");
    }
  }
  return r;
}

SweepResult sweep(const PwlGraph& g, const Image& x, const CovMatrix& sigma, const Vector& eta,
                  const SweepOptions& opts) {
  const AffineLine line = init_line(x, eta, sigma);
  const TestStatistic stat = test_statistic(eta, x.pixels(), sigma);
  const AnomalyRegion observed = forward(g, x).region;
  return sweep(g, line, observed, stat.value, stat.variance, opts);
}

double p_over_conditioning(const PwlGraph& g, const AffineLine& line, double t, double variance, double offset) {
  const PieceResult piece = piece_at(g, line, t);
  return tn_two_sided_p(t, variance, TruncationSet({{piece.lower, piece.upper}}), offset);
}

double p_over_conditioning(const PwlGraph& g, const Image& x, const CovMatrix& sigma, const Vector& eta) {
  const TestStatistic stat = test_statistic(eta, x.pixels(), sigma);
  return p_over_conditioning(g, init_line(x, eta, sigma), stat.value, stat.variance);
}

TestOutcome run_test(const PwlGraph& g, const Image& x, const CovMatrix& sigma, const TestOptions& opts) {
  if (x.size() != g.input_dim() || sigma.size() != g.input_dim())
    throw GraphError("run_test: image/covariance size does not match the detector");
  TestOutcome out;
  out.region = forward(g, x).region;
  if (!out.region.testable()) {
    out.status = TestStatus::UndefinedHypothesis;
    return out;
  }
  out.status = TestStatus::Ok;
  const Hypothesis h = make_hypothesis(out.region, x, sigma, opts.offset);
  out.observed = h.observed;
  out.variance = h.variance;
  const AffineLine line = init_line(x, h.eta, sigma);

  out.sweep = sweep(g, line, out.region, h.observed, h.variance, opts.sweep);
  out.truncation = out.sweep.set;

  bool degenerate = false;
  out.p_selective = tn_two_sided_p(h.observed, h.variance, out.truncation, h.offset, &degenerate);
  out.degenerate_mass = degenerate;

  const PieceResult piece = piece_at(g, line, h.observed);
  out.oc_interval = {piece.lower, piece.upper};
  out.p_oc = tn_two_sided_p(h.observed, h.variance, TruncationSet({out.oc_interval}), h.offset, &degenerate);
  out.degenerate_mass = out.degenerate_mass || degenerate;

  out.p_naive = p_naive(h.observed - h.offset, h.variance);
  out.p_bonferroni = p_bonferroni(out.p_naive, x.size());
  return out;
}

std::string outcome_to_json(const TestOutcome& o) {
  nlohmann::json j;
  j["status"] = o.defined() ? "ok" : "undefined_hypothesis";
  j["region"] = o.region.indices();
  j["region_size"] = o.region.size();
  if (o.defined()) {
    j["statistic"] = o.observed;
    j["variance"] = o.variance;
    j["p_selective"] = o.p_selective;
    j["p_naive"] = o.p_naive;
    j["p_bonferroni"] = o.p_bonferroni;
    j["p_oc"] = o.p_oc;
    nlohmann::json intervals = nlohmann::json::array();
    for (const auto& iv : o.truncation.intervals()) {
      // JSON has no infinity; unbounded ends are written as null.
      nlohmann::json lo = std::isfinite(iv.lower) ? nlohmann::json(iv.lower) : nlohmann::json(nullptr);
      nlohmann::json hi = std::isfinite(iv.upper) ? nlohmann::json(iv.upper) : nlohmann::json(nullptr);
      intervals.push_back({lo, hi});
    }
    j["truncation"] = intervals;
    j["interval_count"] = o.truncation.size();
    j["z_min"] = o.sweep.z_min;
    j["z_max"] = o.sweep.z_max;
    j["sweep_steps"] = o.sweep.steps;
    j["degenerate_mass"] = o.degenerate_mass;
  }
  return j.dump(2);
}

std::vector<char> grid_scan(const PwlGraph& g, const AffineLine& line, const AnomalyRegion& target,
                            const std::vector<double>& grid, Execution ex) {
  if (line.dim() != g.input_dim()) throw GraphError("grid_scan: line dimension does not match graph input");
  std::vector<char> inside(grid.size(), 0);
  for_each_index(static_cast<int>(grid.size()), ex, [&](int i) {
    const Vector x = line.at(grid[static_cast<std::size_t>(i)]);
    inside[static_cast<std::size_t>(i)] = forward(g, x).region == target ? 1 : 0;
  });
  return inside;
}

}  // namespace pwlsi
