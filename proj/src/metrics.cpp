#include "xlcw/metrics.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "xlcw/errors.hpp"

namespace xlcw {
namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEpsilon = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEpsilon) break;
  }
  return h;
}

}  // namespace

F1Score f1_positive(std::span<const int> predictions, std::span<const int> gold) {
  if (predictions.size() != gold.size()) {
    throw PreconditionError(fmt::format("f1_positive: {} predictions for {} gold labels",
                                        predictions.size(), gold.size()));
  }
  if (gold.empty()) throw PreconditionError("f1_positive: empty input");
  F1Score score;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool predicted = predictions[i] == 1;
    const bool actual = gold[i] == 1;
    if (predicted && actual) ++score.true_positives;
    else if (predicted) ++score.false_positives;
    else if (actual) ++score.false_negatives;
  }
  const std::size_t denominator =
      2 * score.true_positives + score.false_positives + score.false_negatives;
  if (denominator == 0) {
    score.degenerate = true;
    return score;
  }
  score.value = static_cast<double>(2 * score.true_positives) / static_cast<double>(denominator);
  return score;
}

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return regularized_incomplete_beta(x, df / 2.0, 0.5);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw PreconditionError(
        fmt::format("paired_t_test: samples of different length ({} vs {})", a.size(), b.size()));
  }
  const std::size_t n = a.size();
  if (n < 2) throw PreconditionError("paired_t_test: need at least two paired observations");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = (a[i] - b[i]) - mean;
    ss += dev * dev;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult result;
  result.degrees_of_freedom = n - 1;
  if (sd == 0.0) {
    result.degenerate = true;
    if (mean == 0.0) {
      result.p_value = 1.0;
      result.t_statistic = 0.0;
    } else {
      result.p_value = 0.0;
      result.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), mean);
    }
    return result;
  }
  result.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  result.p_value = student_t_two_sided_p(result.t_statistic, static_cast<double>(n - 1));
  return result;
}

double aggregate_seeds(std::span<const double> scores, bool allow_any_count) {
  if (scores.empty()) throw PreconditionError("aggregate_seeds: no scores");
  if (!allow_any_count && scores.size() != 5) {
    throw PreconditionError(
        fmt::format("aggregate_seeds: expected 5 per-seed scores, got {}", scores.size()));
  }
  double sum = 0.0;
  for (const double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

}  // namespace xlcw
