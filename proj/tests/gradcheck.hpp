#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "charrnn/tensor.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

struct Worst {
  double rel = 0.0;
  std::string where;
  double analytic = 0.0, numeric = 0.0;
};

// Central differences of `loss` with respect to every entry of every tensor in
// `params`, compared against `analytic` (same order and dims).
inline Worst compare(const std::vector<charrnn::Tensor*>& params,
                     const std::vector<charrnn::Tensor>& analytic,
                     const std::function<double()>& loss,
                     const std::vector<std::string>& names = {}) {
  Worst worst;
  for (std::size_t p = 0; p < params.size(); ++p) {
    charrnn::Tensor& w = *params[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + kStep;
      const double up = loss();
      w[i] = saved - kStep;
      const double down = loss();
      w[i] = saved;
      const double numeric = (up - down) / (2 * kStep);
      const double e = rel_error(analytic[p][i], numeric);
      if (e > worst.rel) {
        worst.rel = e;
        worst.where = (p < names.size() ? names[p] : std::to_string(p)) + "[" +
                      std::to_string(i) + "]";
        worst.analytic = analytic[p][i];
        worst.numeric = numeric;
      }
    }
  }
  return worst;
}

// Fills with U(-scale, scale) so gates are away from saturation and zero.
inline void randomize(charrnn::Tensor& t, charrnn::Rng& rng, double scale = 0.5) {
  for (double& v : t.data()) v = rng.uniform(-scale, scale);
}

}  // namespace gradcheck
