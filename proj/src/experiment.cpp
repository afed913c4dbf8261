#include "pwlsi/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>

#include <boost/math/special_functions/beta.hpp>

#include "pwlsi/detector.hpp"
#include "pwlsi/errors.hpp"

namespace pwlsi {

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Type1: return "type1";
    case ExperimentKind::Power: return "power";
    case ExperimentKind::Robustness: return "robustness";
    case ExperimentKind::Single: return "single";
  }
  return "unknown";
}

std::string to_string(CovKind k) { return k == CovKind::Independence ? "indep" : "ar"; }

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::Type1, ExperimentKind::Power, ExperimentKind::Robustness, ExperimentKind::Single})
    if (to_string(k) == s) return k;
  if (s == "single-test") return ExperimentKind::Single;
  throw DomainError("unknown experiment kind '" + s + "'");
}

CovKind parse_cov_kind(const std::string& s) {
  if (s == "indep" || s == "independence") return CovKind::Independence;
  if (s == "ar" || s == "correlation") return CovKind::Correlation;
  throw DomainError("unknown covariance kind '" + s + "'");
}

void ExperimentSpec::validate() const {
  if (trials < 1) throw DomainError("trials must be >= 1");
  if (n < 4) throw DomainError("n must be >= 4");
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (alphas.empty()) throw DomainError("at least one alpha is required");
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  for (double d : deltas)
    if (!(d >= 0.0)) throw DomainError("delta must be >= 0");
  if (kind == ExperimentKind::Power && deltas.empty()) throw DomainError("power experiment needs a delta grid");
}

std::pair<double, double> binomial_ci(int k, int trials) {
  if (trials <= 0) return {0.0, 1.0};
  const double lo = k == 0 ? 0.0 : boost::math::ibeta_inv(double(k), double(trials - k + 1), 0.025);
  const double hi = k == trials ? 1.0 : boost::math::ibeta_inv(double(k + 1), double(trials - k), 0.975);
  return {lo, hi};
}

TrialRecord run_single_trial(const PwlGraph& g, const Image& x, const CovMatrix& sigma) {
  TrialRecord r;
  const TestOutcome o = run_test(g, x, sigma);
  r.defined = o.defined();
  if (r.defined) {
    r.p_selective = o.p_selective;
    r.p_naive = o.p_naive;
    r.p_bonferroni = o.p_bonferroni;
    r.p_oc = o.p_oc;
    r.intervals = static_cast<long>(o.truncation.size());
  }
  return r;
}

std::vector<ResultRow> summarize(const std::vector<TrialRecord>& records, const std::string& setting, int n,
                                 double delta, const std::string& cov, const std::vector<double>& alphas) {
  int undefined = 0, failed = 0;
  for (const auto& r : records) {
    if (r.failed)
      ++failed;
    else if (!r.defined)
      ++undefined;
  }
  const int tested = static_cast<int>(records.size()) - undefined - failed;
  std::vector<ResultRow> rows;
  struct Method {
    const char* name;
    double TrialRecord::*p;
  };
  const Method methods[] = {{"selective", &TrialRecord::p_selective},
                            {"naive", &TrialRecord::p_naive},
                            {"bonf", &TrialRecord::p_bonferroni},
                            {"oc", &TrialRecord::p_oc}};
  for (double alpha : alphas)
    for (const auto& m : methods) {
      ResultRow row;
      row.method = m.name;
      row.setting = setting;
      row.n = n;
      row.delta = delta;
      row.cov = cov;
      row.alpha = alpha;
      row.trials = static_cast<int>(records.size());
      row.undefined = undefined;
      row.failed = failed;
      row.rejections = static_cast<int>(std::count_if(records.begin(), records.end(), [&](const TrialRecord& r) {
        return r.defined && !r.failed && r.*(m.p) <= alpha;
      }));
      row.rate = tested > 0 ? static_cast<double>(row.rejections) / tested : 0.0;
      std::tie(row.ci_lo, row.ci_hi) = binomial_ci(row.rejections, tested);
      rows.push_back(std::move(row));
    }
  return rows;
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const PwlGraph& g, Execution ex) {
  spec.validate();
  if (g.input_dim() != spec.n) throw GraphError("experiment n does not match the detector input");
  const CovMatrix sigma = spec.cov == CovKind::Independence
                              ? CovMatrix::identity(spec.n)
                              : ar1_kron_cov(default_shape(spec.n).first, spec.rho);
  if (sigma.size() != spec.n) throw DomainError("correlation covariance needs a square image");
  const std::string cov = to_string(spec.cov);

  std::vector<ResultRow> rows;
  auto append = [&](std::vector<ResultRow> more) { rows.insert(rows.end(), more.begin(), more.end()); };
  auto synthetic = [&](double delta) {
    return [&, delta](std::uint64_t seed) { return make_synthetic(spec.n, delta, spec.patch_side, sigma, seed).image; };
  };
  auto report_failures = [](const std::vector<TrialRecord>& recs, const std::string& setting) {
    for (std::size_t i = 0; i < recs.size(); ++i)
      if (recs[i].failed) std::cerr << setting << " trial " << i << " failed: " << recs[i].error << '\n';
  };

  switch (spec.kind) {
    case ExperimentKind::Type1: {
      auto recs = run_trials(g, sigma, spec.trials, spec.seed, synthetic(0.0), ex);
      report_failures(recs, "type1");
      append(summarize(recs, "type1", spec.n, 0.0, cov, spec.alphas));
      break;
    }
    case ExperimentKind::Power:
    case ExperimentKind::Single: {
      const int trials = spec.kind == ExperimentKind::Single ? 1 : spec.trials;
      const std::string setting = to_string(spec.kind);
      for (double delta : spec.deltas) {
        auto recs = run_trials(g, sigma, trials, spec.seed, synthetic(delta), ex);
        report_failures(recs, setting);
        append(summarize(recs, setting, spec.n, delta, cov, spec.alphas));
      }
      break;
    }
    case ExperimentKind::Robustness: {
      const CovMatrix identity = CovMatrix::identity(spec.n);
      const auto [h, w] = default_shape(spec.n);
      for (Family fam : spec.families)
        for (double target : spec.w1_targets) {
          const NoiseFamily noise = calibrate(fam, target);
          char label[96];
          std::snprintf(label, sizeof label, "robustness:%s:%.2f", to_string(fam).c_str(), target);
          auto recs = run_trials(
              g, identity, spec.trials, spec.seed,
              [&](std::uint64_t seed) { return Image(noise.sample(spec.n, seed), h, w); }, ex);
          report_failures(recs, label);
          append(summarize(recs, label, spec.n, 0.0, "indep", spec.alphas));
        }
      break;
    }
  }
  return rows;
}

std::string csv_header() { return "method,setting,n,delta,cov,alpha,trials,undefined,rejections,rate,ci_lo,ci_hi\n"; }

std::string to_csv(const std::vector<ResultRow>& rows) {
  std::string out = csv_header();
  char line[512];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%s,%d,%g,%s,%g,%d,%d,%d,%.6f,%.6f,%.6f\n", r.method.c_str(),
                  r.setting.c_str(), r.n, r.delta, r.cov.c_str(), r.alpha, r.trials, r.undefined, r.rejections,
                  r.rate, r.ci_lo, r.ci_hi);
    out += line;
  }
  return out;
}

double ks_uniform(std::vector<double> samples) {
  if (samples.empty()) throw DomainError("ks_uniform: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double u = std::clamp(samples[i], 0.0, 1.0);
    d = std::max({d, (i + 1) / n - u, u - i / n});
  }
  return d;
}

}  // namespace pwlsi
