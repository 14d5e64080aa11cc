#pragma once

#include "nlfp/core.hpp"

#include <string>
#include <vector>

namespace nlfp {

enum class GrowthClass { bounded, linear, quadratic };

inline const char* to_string(GrowthClass g) {
  switch (g) {
    case GrowthClass::bounded: return "bounded";
    case GrowthClass::linear: return "linear";
    case GrowthClass::quadratic: return "quadratic";
  }
  return "?";
}

/// Diffusion matrix a_t(x) (= sigma sigma^T / 2) and drift b_t(x).
template <int D>
struct CoefficientField {
  using MatrixFn = std::function<Mat<D>(double, const Vec<D>&)>;
  using VectorFn = std::function<Vec<D>(double, const Vec<D>&)>;

  MatrixFn a;
  VectorFn b;
  GrowthClass growth = GrowthClass::bounded;

  Mat<D> diffusion(double t, const Vec<D>& x) const { return a ? a(t, x) : Mat<D>::Zero(); }
  Vec<D> drift(double t, const Vec<D>& x) const { return b ? b(t, x) : Vec<D>::Zero(); }
  bool has_diffusion() const { return static_cast<bool>(a); }
  bool has_drift() const { return static_cast<bool>(b); }

  static CoefficientField zero() { return {}; }

  static CoefficientField constant(const Mat<D>& a0, const Vec<D>& b0) {
    CoefficientField c;
    c.a = [a0](double, const Vec<D>&) { return a0; };
    c.b = [b0](double, const Vec<D>&) { return b0; };
    return c;
  }

  /// Checks symmetry (1e-12) and eigenvalues >= -1e-12 of a at every point.
  void validate_at(const std::vector<std::pair<double, Vec<D>>>& points) const {
    if (!a) return;
    for (const auto& [t, x] : points) {
      const Mat<D> m = a(t, x);
      require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "diffusion matrix is not symmetric");
      if constexpr (D == 1) {
        require(m(0, 0) >= -1e-12, "diffusion coefficient is negative");
      } else {
        Eigen::SelfAdjointEigenSolver<Mat<D>> es(m, Eigen::EigenvaluesOnly);
        require(es.eigenvalues().minCoeff() >= -1e-12, "diffusion matrix is not positive semi-definite");
      }
    }
  }
};

}  // namespace nlfp
