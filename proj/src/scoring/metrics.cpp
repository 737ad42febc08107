#include "fewshot/scoring/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "fewshot/error.hpp"

namespace fewshot::score {

std::vector<int> argmax_rows(const nd::Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("argmax_rows expects a matrix, got " + nd::shape_string(probs.shape()));
  const std::size_t rows = probs.dim(0), cols = probs.dim(1);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (probs[r * cols + c] > probs[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth, int n) {
  if (n < 2) throw ConfigError("balanced accuracy needs N >= 2");
  if (predicted.size() != truth.size()) {
    throw ShapeError("prediction count " + std::to_string(predicted.size()) + " != label count " +
                     std::to_string(truth.size()));
  }
  std::vector<std::size_t> hits(static_cast<std::size_t>(n)), totals(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n) throw ConfigError("true label " + std::to_string(truth[i]) + " outside 0..N-1");
    ++totals[static_cast<std::size_t>(truth[i])];
    if (predicted[i] == truth[i]) ++hits[static_cast<std::size_t>(truth[i])];
  }
  double sum = 0.0;
  for (int c = 0; c < n; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (totals[ci] == 0) throw ConfigError("class " + std::to_string(c) + " absent from true labels");
    sum += static_cast<double>(hits[ci]) / static_cast<double>(totals[ci]);
  }
  return sum / n;
}

double normalized_accuracy(double bac, int n) {
  if (n < 2) throw ConfigError("normalized accuracy needs N >= 2");
  const double chance = 1.0 / n;
  return (bac - chance) / (1.0 - chance);
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ConfigError("degrees of freedom must be positive");
  const double x = df / (df + t * t);
  const double tail = 0.5 * boost::math::ibeta(df / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("quantile probability must lie in (0, 1)");
  if (p < 0.5) return -t_quantile(1.0 - p, df);
  double lo = 0.0, hi = 1.0;
  while (student_t_cdf(hi, df) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw NumericError("t quantile bracket diverged");
  }
  // Bisection to the resolution of double.
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, df) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ConfidenceInterval confidence_interval(std::span<const double> scores, double level) {
  if (scores.size() < 2) throw ConfigError("confidence interval needs at least 2 scores");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  ConfidenceInterval ci;
  ci.level = level;
  ci.n = scores.size();
  ci.df = ci.n - 1;
  double sum = 0.0;
  for (double s : scores) sum += s;
  ci.mean = sum / static_cast<double>(ci.n);
  double ss = 0.0;
  for (double s : scores) ss += (s - ci.mean) * (s - ci.mean);
  ci.sigma = std::sqrt(ss / static_cast<double>(ci.df));
  ci.t = t_quantile(1.0 - (1.0 - level) / 2.0, static_cast<double>(ci.df));
  ci.half_width = ci.t * ci.sigma / std::sqrt(static_cast<double>(ci.n));
  return ci;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[idx[m]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman needs two equal-length series of size >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace fewshot::score
