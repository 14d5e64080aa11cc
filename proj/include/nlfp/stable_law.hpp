#pragma once

#include "nlfp/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace nlfp {

/// CDF of the standard symmetric alpha-stable law, E exp(i u S) = exp(-|u|^alpha).
/// Gil-Pelaez inversion on half-period panels; for large |x| the convergent
/// (alpha < 1) or asymptotic (alpha >= 1) tail series.
inline double symmetric_stable_cdf(double alpha, double x) {
  if (x == 0.0) return 0.5;
  if (alpha == 1.0) return 0.5 + std::atan(x) / kPi;
  const double ax = std::abs(x);
  const double cut = std::pow(42.0, 1.0 / alpha);
  double upper;
  if (ax * cut > 4000.0 * kPi) {
    // P(S > x) = (1/pi) sum_k (-1)^{k+1} Gamma(alpha k)/k! sin(k pi alpha/2) x^{-alpha k}
    double s = 0.0, fact = 1.0;
    for (int k = 1; k <= 6; ++k) {
      fact *= k;
      const double term = std::tgamma(alpha * k) / fact * std::sin(k * kPi * alpha / 2.0) * std::pow(ax, -alpha * k);
      s += (k % 2 ? 1.0 : -1.0) * term;
    }
    upper = s / kPi;
  } else {
    auto f = [&](double u) { return u == 0.0 ? ax : std::sin(ax * u) * std::exp(-std::pow(u, alpha)) / u; };
    // Half-periods of the sine, refined geometrically towards u = 0 where
    // exp(-u^alpha) is not smooth.
    std::vector<double> cuts{0.0};
    for (double u = 1e-8; u < std::min(1.0, cut); u *= 2.0) cuts.push_back(u);
    for (double u = kPi / ax; u < cut; u += kPi / ax) cuts.push_back(u);
    for (double u = 1.0; u < cut; u *= 1.5) cuts.push_back(u);
    cuts.push_back(cut);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
      if (cuts[i + 1] > cuts[i]) total += integrate_panels(f, cuts[i], cuts[i + 1], 1, 24);
    upper = 0.5 - total / kPi;
  }
  return x > 0.0 ? 1.0 - upper : upper;
}

}  // namespace nlfp
