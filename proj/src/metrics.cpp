#include "ultra/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ultra/error.hpp"
#include "ultra/rng.hpp"

namespace ultra::metrics {

void EvalPairs::validate() const {
  if (preds.size() != targets.size()) throw std::invalid_argument("EvalPairs: length mismatch");
  if (preds.empty()) throw std::invalid_argument("EvalPairs: empty input");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!(preds[i] >= 0.0 && preds[i] <= 1.0 && targets[i] >= 0.0 && targets[i] <= 1.0)) {
      throw std::invalid_argument("EvalPairs: score outside [0, 1] at index " + std::to_string(i));
    }
  }
}

double mse(const EvalPairs& pairs) {
  pairs.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double d = pairs.preds[i] - pairs.targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pairs.size());
}

MeanSquares mean_squares(const EvalPairs& pairs) {
  pairs.validate();
  const std::size_t n = pairs.size();
  if (n < 3) throw std::invalid_argument("icc: need at least 3 subjects");
  const double k = 2.0;
  const auto nn = static_cast<double>(n);
  double grand = 0.0;
  double col_pred = 0.0;
  double col_target = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    col_pred += pairs.preds[i];
    col_target += pairs.targets[i];
  }
  grand = (col_pred + col_target) / (k * nn);
  col_pred /= nn;
  col_target /= nn;

  double ss_rows = 0.0;
  double ss_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double row_mean = 0.5 * (pairs.preds[i] + pairs.targets[i]);
    ss_rows += (row_mean - grand) * (row_mean - grand);
    ss_total += (pairs.preds[i] - grand) * (pairs.preds[i] - grand) +
                (pairs.targets[i] - grand) * (pairs.targets[i] - grand);
  }
  ss_rows *= k;
  const double ss_cols = nn * ((col_pred - grand) * (col_pred - grand) +
                               (col_target - grand) * (col_target - grand));
  const double ss_error = std::max(ss_total - ss_rows - ss_cols, 0.0);

  MeanSquares ms;
  ms.n = n;
  ms.rows = ss_rows / (nn - 1.0);
  ms.columns = ss_cols / (k - 1.0);
  ms.error = ss_error / ((nn - 1.0) * (k - 1.0));
  return ms;
}

double icc(const EvalPairs& pairs, IccForm form) {
  const MeanSquares ms = mean_squares(pairs);
  const double k = static_cast<double>(ms.k);
  const double n = static_cast<double>(ms.n);
  if (ms.rows == 0.0 && ms.error == 0.0) {
    throw DegenerateInput("between-subject and residual mean squares",
                          "icc: no variance between subjects and no residual variance");
  }
  double denom = ms.rows + (k - 1.0) * ms.error;
  if (form == IccForm::TwoWayRandomSingle) denom += k * (ms.columns - ms.error) / n;
  if (!(std::abs(denom) > 0.0)) {
    throw DegenerateInput("icc denominator", "icc: denominator is zero");
  }
  return (ms.rows - ms.error) / denom;
}

std::size_t score_bin(double score, std::size_t n_bins) {
  const auto b = static_cast<std::size_t>(std::floor(score * static_cast<double>(n_bins)));
  return std::min(b, n_bins - 1);
}

std::vector<std::vector<double>> confusion_matrix(const EvalPairs& pairs, std::size_t n_bins) {
  pairs.validate();
  if (n_bins < 2) throw std::invalid_argument("kappa: need at least 2 bins");
  std::vector<std::vector<double>> m(n_bins, std::vector<double>(n_bins, 0.0));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    m[score_bin(pairs.preds[i], n_bins)][score_bin(pairs.targets[i], n_bins)] += 1.0;
  }
  return m;
}

double cohen_kappa(const EvalPairs& pairs, const KappaConfig& cfg) {
  const auto m = confusion_matrix(pairs, cfg.n_bins);
  const std::size_t kb = cfg.n_bins;
  const double n = static_cast<double>(pairs.size());
  std::vector<double> rows(kb, 0.0);
  std::vector<double> cols(kb, 0.0);
  for (std::size_t i = 0; i < kb; ++i) {
    for (std::size_t j = 0; j < kb; ++j) {
      rows[i] += m[i][j] / n;
      cols[j] += m[i][j] / n;
    }
  }
  // agreement weights: 1 on the diagonal, decreasing with bin distance
  const auto agreement = [&](std::size_t i, std::size_t j) {
    const double d = std::abs(static_cast<double>(i) - static_cast<double>(j)) /
                     static_cast<double>(kb - 1);
    switch (cfg.weighting) {
      case KappaWeighting::None: return i == j ? 1.0 : 0.0;
      case KappaWeighting::Linear: return 1.0 - d;
      case KappaWeighting::Quadratic: return 1.0 - d * d;
    }
    return 0.0;
  };
  double p_o = 0.0;
  double p_e = 0.0;
  for (std::size_t i = 0; i < kb; ++i) {
    for (std::size_t j = 0; j < kb; ++j) {
      const double w = agreement(i, j);
      p_o += w * m[i][j] / n;
      p_e += w * rows[i] * cols[j];
    }
  }
  if (std::abs(1.0 - p_e) < 1e-15) {
    // all mass in one cell on both sides
    return std::abs(1.0 - p_o) < 1e-15 ? 1.0 : 0.0;
  }
  return (p_o - p_e) / (1.0 - p_e);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Interval bootstrap_ci(const Metric& metric, const EvalPairs& pairs, std::size_t resamples,
                      double level, std::uint64_t seed) {
  pairs.validate();
  if (resamples < 100) throw std::invalid_argument("bootstrap_ci: need at least 100 resamples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level not in (0,1)");
  const std::size_t n = pairs.size();
  std::vector<double> stats;
  stats.reserve(resamples);
  Interval out;
  EvalPairs draw;
  draw.preds.resize(n);
  draw.targets.resize(n);
  for (std::size_t b = 0; b < resamples; ++b) {
    Rng rng(seed ^ b);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = rng.below(n);
      draw.preds[i] = pairs.preds[j];
      draw.targets[i] = pairs.targets[j];
    }
    try {
      const double v = metric(draw);
      if (!std::isfinite(v)) {
        ++out.skipped;
        continue;
      }
      stats.push_back(v);
    } catch (const DegenerateInput&) {
      ++out.skipped;
    }
  }
  if (10 * out.skipped > resamples) {
    throw DegenerateInput("bootstrap", "bootstrap_ci: metric undefined on " +
                                           std::to_string(out.skipped) + " of " +
                                           std::to_string(resamples) + " resamples");
  }
  const double tail = (1.0 - level) / 2.0;
  out.lo = percentile(stats, tail);
  out.hi = percentile(stats, 1.0 - tail);
  return out;
}

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("incomplete_beta: a, b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("incomplete_beta: x outside [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("student_t_cdf: dof must be > 0");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> errors_a, std::span<const double> errors_b) {
  if (errors_a.size() != errors_b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
  const std::size_t n = errors_a.size();
  if (n < 3) throw std::invalid_argument("paired_t_test: need at least 3 pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += errors_a[i] - errors_b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = errors_a[i] - errors_b[i] - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0)) {
    throw DegenerateInput("difference variance", "paired_t_test: differences have zero variance");
  }
  TTestResult r;
  r.dof = n - 1;
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  // two-sided p = I_{v/(v+t^2)}(v/2, 1/2)
  const double v = static_cast<double>(r.dof);
  r.p_value = incomplete_beta(0.5 * v, 0.5, v / (v + r.t * r.t));
  return r;
}

EvalReport evaluate(const EvalPairs& pairs, const EvalOptions& options) {
  pairs.validate();
  EvalReport report;
  report.count = pairs.size();
  const Metric icc_fn = [form = options.icc_form](const EvalPairs& p) { return icc(p, form); };
  const Metric kappa_fn = [cfg = options.kappa](const EvalPairs& p) { return cohen_kappa(p, cfg); };
  const Metric mse_fn = [](const EvalPairs& p) { return mse(p); };
  const auto summarize = [&](const char* name, const Metric& fn) {
    MetricSummary s;
    s.name = name;
    s.point = fn(pairs);
    s.ci = bootstrap_ci(fn, pairs, options.bootstrap_b, options.level,
                        options.bootstrap_seed);
    return s;
  };
  report.icc = summarize("icc", icc_fn);
  report.kappa = summarize("kappa", kappa_fn);
  report.mse = summarize("mse", mse_fn);
  return report;
}

}  // namespace ultra::metrics
