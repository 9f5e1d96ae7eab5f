#pragma once

// Agreement metrics between predicted and reference scores, percentile
// bootstrap intervals and a paired t-test.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ultra::metrics {

struct EvalPairs {
  std::vector<double> preds;
  std::vector<double> targets;

  std::size_t size() const noexcept { return preds.size(); }
  void validate() const;
};

double mse(const EvalPairs& pairs);

enum class IccForm {
  TwoWayRandomSingle,  // ICC(2,1), absolute agreement
  TwoWayMixedSingle,   // ICC(3,1), consistency
};

/// Two-way ANOVA mean squares with subjects as rows and {pred, target} as the
/// two raters.
struct MeanSquares {
  double rows = 0.0;     // between subjects
  double columns = 0.0;  // between raters
  double error = 0.0;    // residual
  std::size_t n = 0;
  std::size_t k = 2;
};

MeanSquares mean_squares(const EvalPairs& pairs);
double icc(const EvalPairs& pairs, IccForm form = IccForm::TwoWayRandomSingle);

enum class KappaWeighting { None, Linear, Quadratic };

struct KappaConfig {
  std::size_t n_bins = 10;
  KappaWeighting weighting = KappaWeighting::Quadratic;
};

/// Equal-width bin over [0, 1]; the last bin includes 1.
std::size_t score_bin(double score, std::size_t n_bins);

std::vector<std::vector<double>> confusion_matrix(const EvalPairs& pairs, std::size_t n_bins);
double cohen_kappa(const EvalPairs& pairs, const KappaConfig& cfg = {});

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t skipped = 0;  // resamples where the metric was undefined
};

using Metric = std::function<double(const EvalPairs&)>;

/// Linear-interpolation percentile (q in [0, 1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

/// Percentile bootstrap over pairs. Resample b draws from
/// Rng(seed ^ b); undefined resamples are skipped, more than 10% skipped is an error.
Interval bootstrap_ci(const Metric& metric, const EvalPairs& pairs, std::size_t resamples = 1000,
                      double level = 0.95, std::uint64_t seed = 0);

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  std::size_t dof = 0;
};

TTestResult paired_t_test(std::span<const double> errors_a, std::span<const double> errors_b);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
/// P(T <= t) for Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

struct MetricSummary {
  std::string name;
  double point = 0.0;
  Interval ci;
  bool contains_point() const noexcept { return ci.lo <= point && point <= ci.hi; }
};

struct EvalReport {
  std::size_t count = 0;
  MetricSummary icc;
  MetricSummary kappa;
  MetricSummary mse;
};

struct EvalOptions {
  IccForm icc_form = IccForm::TwoWayRandomSingle;
  KappaConfig kappa;
  std::size_t bootstrap_b = 1000;
  double level = 0.95;
  std::uint64_t bootstrap_seed = 0;
};

EvalReport evaluate(const EvalPairs& pairs, const EvalOptions& options);

}  // namespace ultra::metrics
