#ifndef WISEDB_STATS_HPP
#define WISEDB_STATS_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "wisedb/common.hpp"

namespace wisedb {

// Regularized lower incomplete gamma P(a, x): series expansion for
// x < a + 1, continued fraction for the complement otherwise.
inline double gamma_p(double a, double x) {
  if (!(a > 0) || x < 0) throw ValidationError("gamma_p domain error");
  if (x == 0) return 0;
  const double lg = std::lgamma(a);
  if (x < a + 1) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // Lentz's continued fraction for Q(a, x).
  const double tiny = 1e-300;
  double b = x + 1 - a;
  double c = 1 / tiny;
  double d = 1 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -double(i) * (double(i) - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1) < 1e-15) break;
  }
  double q = std::exp(-x + a * std::log(x) - lg) * h;
  return 1 - q;
}

inline double chi2_cdf(double x, int dof) {
  if (dof < 1) throw ValidationError("chi-square needs dof >= 1");
  if (x <= 0) return 0;
  return gamma_p(double(dof) / 2, x / 2);
}

// Pearson statistic against the uniform null over the given counts.
inline double chi2_statistic(const std::vector<std::size_t>& counts) {
  if (counts.size() < 2) throw ValidationError("need >= 2 categories");
  double n = 0;
  for (std::size_t c : counts) n += double(c);
  if (n == 0) return 0;
  double expected = n / double(counts.size());
  double stat = 0;
  for (std::size_t c : counts) {
    double d = double(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

// Confidence with which uniformity is rejected: the chi-square CDF of the
// statistic at |categories| - 1 degrees of freedom.
inline double chi2_confidence(const std::vector<std::size_t>& counts) {
  return chi2_cdf(chi2_statistic(counts), int(counts.size()) - 1);
}

}  // namespace wisedb

#endif  // WISEDB_STATS_HPP
