#pragma once

#include <cstddef>
#include <span>

namespace xlcw {

struct F1Score {
  double value = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  // No gold positives and no predicted positives; value is reported as 0.
  bool degenerate = false;

  bool operator==(const F1Score&) const = default;
};

// F1 of the positive class, 2TP / (2TP + FP + FN).
F1Score f1_positive(std::span<const int> predictions, std::span<const int> gold);

struct TTestResult {
  double p_value = 1.0;
  double t_statistic = 0.0;
  std::size_t degrees_of_freedom = 0;
  // Zero-variance differences: p is 1 for a zero mean and 0 otherwise.
  bool degenerate = false;
};

// Two-sided paired t-test on differences a[i] - b[i] with n - 1 degrees of freedom.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

inline constexpr double kSignificanceLevel = 0.05;
inline bool is_significant(double p_value) { return p_value < kSignificanceLevel; }

// Arithmetic mean of per-seed scores; expects five unless `allow_any_count`.
double aggregate_seeds(std::span<const double> scores, bool allow_any_count = false);

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double x, double a, double b);
// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

}  // namespace xlcw
