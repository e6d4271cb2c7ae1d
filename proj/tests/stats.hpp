#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace stats {

// Upper 1% point of chi-square with k degrees of freedom (Wilson-Hilferty).
inline double chi2_critical_01(std::size_t k) {
  const double z = 2.326347874;
  const double a = 2.0 / (9.0 * static_cast<double>(k));
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3);
}

// Pearson statistic of observed counts against expected probabilities.
// Cells with tiny expectation are merged into their neighbour.
inline double chi2_statistic(const std::vector<std::size_t>& counts,
                             const std::vector<double>& probs, std::size_t n,
                             std::size_t* dof) {
  double stat = 0.0;
  std::size_t cells = 0;
  double obs = 0.0, expct = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    obs += static_cast<double>(counts[i]);
    expct += probs[i] * static_cast<double>(n);
    if (expct >= 5.0 || i + 1 == counts.size()) {
      if (expct > 0) {
        stat += (obs - expct) * (obs - expct) / expct;
        ++cells;
      }
      obs = expct = 0.0;
    }
  }
  *dof = cells > 1 ? cells - 1 : 1;
  return stat;
}

}  // namespace stats
