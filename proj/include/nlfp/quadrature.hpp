#pragma once

#include "nlfp/core.hpp"

#include <array>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

namespace nlfp {

/// Gauss–Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {
inline GaussRule make_gauss_legendre(int n) {
  GaussRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  return r;
}
}  // namespace detail

inline const GaussRule& gauss_legendre(int n) {
  static std::mutex m;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::make_gauss_legendre(n)).first;
  return it->second;
}

/// Fixed Gauss–Legendre panel sum of f over [a, b] split into `panels` equal pieces.
template <class F>
double integrate_panels(F&& f, double a, double b, int panels, int order = 16) {
  const GaussRule& g = gauss_legendre(order);
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) sum += g.weights[i] * f(mid + 0.5 * h * g.nodes[i]);
  }
  return 0.5 * h * sum;
}

/// Unit directions with weights summing to the area of S^{D-1}.
template <int D>
struct AngularRule {
  std::vector<Vec<D>> directions;
  std::vector<double> weights;
};

/// Product rule on the sphere: D=1 uses {+1,-1}; D=2 equispaced angles;
/// D=3 Gauss–Legendre in cos(theta) times equispaced azimuth.
template <int D>
AngularRule<D> make_angular_rule(int resolution) {
  static_assert(D >= 1 && D <= 3, "dimensions 1..3 supported");
  AngularRule<D> r;
  if constexpr (D == 1) {
    r.directions = {Vec<1>(1.0), Vec<1>(-1.0)};
    r.weights = {1.0, 1.0};
  } else if constexpr (D == 2) {
    const int n = std::max(4, resolution);
    for (int k = 0; k < n; ++k) {
      const double th = 2.0 * kPi * (k + 0.5) / n;
      r.directions.emplace_back(std::cos(th), std::sin(th));
      r.weights.push_back(2.0 * kPi / n);
    }
  } else {
    const int n = std::max(4, resolution / 2);
    const GaussRule& g = gauss_legendre(n);
    const int m = 2 * n;
    for (int i = 0; i < n; ++i) {
      const double mu = g.nodes[i];
      const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
      for (int k = 0; k < m; ++k) {
        const double ph = 2.0 * kPi * (k + 0.5) / m;
        r.directions.emplace_back(s * std::cos(ph), s * std::sin(ph), mu);
        r.weights.push_back(g.weights[i] * 2.0 * kPi / m);
      }
    }
  }
  return r;
}

}  // namespace nlfp
