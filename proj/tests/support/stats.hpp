#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <cstddef>
#include <span>
#include <vector>

namespace testsupport {

/// p-value of a Pearson chi-square goodness-of-fit statistic.
inline double chi_square_pvalue(double stat, double dof) {
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Pearson statistic for observed counts vs expected probabilities.
inline double chi_square_stat(std::span<const std::size_t> counts,
                              std::span<const double> probs,
                              std::size_t total) {
  double stat = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double expected = probs[c] * static_cast<double>(total);
    if (expected <= 0.0) continue;
    const double d = static_cast<double>(counts[c]) - expected;
    stat += d * d / expected;
  }
  return stat;
}

}  // namespace testsupport
