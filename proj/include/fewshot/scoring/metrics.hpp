#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fewshot/ndcore/tensor.hpp"

namespace fewshot::score {

// Row-wise argmax of a probability matrix; ties go to the lowest index.
std::vector<int> argmax_rows(const nd::Tensor& probs);

// Mean per-class recall. Every class 0..n-1 must occur in `truth`.
double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth, int n);

// (bac - 1/n) / (1 - 1/n); 0 for random guessing, 1 for perfect.
double normalized_accuracy(double bac, int n);

double student_t_cdf(double t, double df);
// Inverse of student_t_cdf for p in (0, 1).
double t_quantile(double p, double df);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
  double level = 0.95;
  std::size_t n = 0;
  std::size_t df = 0;
  double sigma = 0.0;  // sample standard deviation (n - 1 denominator)
  double t = 0.0;
};

// Two-sided Student-t interval of the mean. Requires n >= 2.
ConfidenceInterval confidence_interval(std::span<const double> scores, double level = 0.95);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace fewshot::score
