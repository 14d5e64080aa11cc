#pragma once

#include "nlfp/coefficients.hpp"
#include "nlfp/core.hpp"
#include "nlfp/quadrature.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <type_traits>

namespace nlfp {

/// Radial-angular quadrature controls shared by the jump functionals and operators.
struct QuadratureSpec {
  /// Inner radius of the shell quadrature for functionals, as a fraction of ell.
  double inner_factor = 0x1p-20;
  /// Inner radius used by jump-operator application (Taylor surrogate below it).
  double operator_inner_factor = 0x1p-12;
  /// Log-spaced Gauss–Legendre panels per factor of two in radius.
  int panels_per_octave = 2;
  int order = 16;
  /// Angular resolution for d >= 2 (directions per great circle).
  int angular_resolution = 24;
  /// Tail shells are added until the last shells change the total by < outer_rtol.
  double outer_rtol = 1e-8;
  int max_octaves = 4000;
  /// Linear panel width inside a test function's support, relative to its radius.
  double support_panel_fraction = 0.0625;
  /// apply_N throws TailBoundTooLoose when its error bound exceeds this.
  double tolerance = kInf;
};

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

/// A time-space indexed family nu_{t,x}(dz) = density(t, x, z) dz of Lévy
/// measures with small-jump cutoff ell.
template <int D>
struct LevyKernel {
  using DensityFn = std::function<double(double, const Vec<D>&, const Vec<D>&)>;
  using MomentFn = std::function<Mat<D>(double, const Vec<D>&, double)>;
  using IntensityFn = std::function<double(double, const Vec<D>&)>;

  double ell = 0.5;
  /// nu_{t,x}(A) = nu_{t,x}(-A) for all t, x (a kernel-global property).
  bool symmetric = false;
  /// Density w.r.t. Lebesgue measure on R^D \ {0}; empty means nu == 0.
  DensityFn density;
  /// Optional closed form of int_{|z|<delta} z z^T nu_{t,x}(dz).
  MomentFn inner_moment;
  /// Optional separable form: density(t,x,z) = intensity(t,x) * unit->density(t,x,z),
  /// where the unit kernel does not depend on (t, x).
  IntensityFn intensity;
  std::shared_ptr<const LevyKernel<D>> unit;
  /// Singularity index of a stable-like kernel (density ~ |z|^{-D-alpha}); NaN if unknown.
  double alpha = std::numeric_limits<double>::quiet_NaN();
  /// Envelope density(t,x,z) <= envelope_kappa * |z|^{-D-alpha}, used for thinning.
  double envelope_kappa = std::numeric_limits<double>::quiet_NaN();

  bool is_zero() const { return !density; }
  bool separable() const { return static_cast<bool>(intensity) && static_cast<bool>(unit); }

  void validate() const {
    require(ell > 0.0 && ell <= 1.0 / std::sqrt(2.0) + 1e-15, "small-jump cutoff must lie in (0, 1/sqrt(2)]");
    if (!std::isnan(alpha)) require(alpha > 0.0 && alpha < 2.0, "stable index must lie in (0, 2)");
  }
};

template <int D>
LevyKernel<D> zero_kernel(double ell = 0.5) {
  LevyKernel<D> k;
  k.ell = ell;
  k.symmetric = true;
  k.validate();
  return k;
}

namespace detail {

template <class T>
T zero_value() {
  if constexpr (std::is_arithmetic_v<T>)
    return T(0);
  else
    return T::Zero();
}

template <class T>
double magnitude(const T& v) {
  if constexpr (std::is_arithmetic_v<T>)
    return std::abs(v);
  else
    return v.norm();
}

template <int D>
const AngularRule<D>& angular_rule(int resolution) {
  static std::mutex m;
  static std::map<int, AngularRule<D>> cache;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(resolution);
  if (it == cache.end()) it = cache.emplace(resolution, make_angular_rule<D>(resolution)).first;
  return it->second;
}

/// int_{a<|z|<b} g(z) nu_{t,x}(dz) with a Gauss–Legendre panel rule in the
/// radius (log- or linearly spaced) times the angular product rule. The error
/// is the difference against the half-order rule on the same panels.
template <class T, int D, class G>
std::pair<T, double> annulus(const LevyKernel<D>& k, double t, const Vec<D>& x, double a, double b, int panels,
                             bool log_spacing, const QuadratureSpec& q, G&& g) {
  T hi = zero_value<T>();
  T lo = zero_value<T>();
  if (k.is_zero() || !(b > a) || panels <= 0) return {hi, 0.0};
  const AngularRule<D>& ang = angular_rule<D>(q.angular_resolution);
  const double s0 = log_spacing ? std::log(a) : a;
  const double s1 = log_spacing ? std::log(b) : b;
  const double h = (s1 - s0) / panels;
  auto accumulate = [&](const GaussRule& rule, T& acc) {
    for (int p = 0; p < panels; ++p) {
      const double mid = s0 + (p + 0.5) * h;
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double s = mid + 0.5 * h * rule.nodes[i];
        const double r = log_spacing ? std::exp(s) : s;
        double wr = 0.5 * h * rule.weights[i] * std::pow(r, D - 1);
        if (log_spacing) wr *= r;
        for (std::size_t j = 0; j < ang.directions.size(); ++j) {
          const Vec<D> z = r * ang.directions[j];
          const double dens = k.density(t, x, z);
          if (dens == 0.0) continue;
          acc += (wr * ang.weights[j] * dens) * g(z);
        }
      }
    }
  };
  accumulate(gauss_legendre(q.order), hi);
  accumulate(gauss_legendre(std::max(2, q.order / 2)), lo);
  return {hi, magnitude<T>(T(hi - lo))};
}

inline int octave_panels(double a, double b, int per_octave) {
  return std::max(1, static_cast<int>(std::ceil(std::log2(b / a) * per_octave - 1e-9)));
}

/// int_{|z|>r0} g(z) nu(dz) by dyadic shells [r0 2^j, r0 2^{j+1}] until the
/// shells stop contributing, plus a geometric remainder estimate.
template <int D, class G>
Estimate tail_integral(const LevyKernel<D>& k, double t, const Vec<D>& x, double r0, const QuadratureSpec& q, G&& g) {
  Estimate out;
  if (k.is_zero()) return out;
  double total = 0.0, err = 0.0, prev = 0.0;
  int quiet = 0;
  double r = r0;
  for (int j = 0; j < q.max_octaves; ++j) {
    const auto [c, e] = annulus<double>(k, t, x, r, 2.0 * r, q.panels_per_octave, true, q, g);
    total += c;
    err += e;
    r *= 2.0;
    const bool small = std::abs(c) <= q.outer_rtol * std::abs(total);
    const bool vanished = (total == 0.0 && c == 0.0 && j >= 64);
    quiet = small ? quiet + 1 : 0;
    if (!std::isfinite(total)) break;
    if (vanished) return {0.0, 0.0};
    if (quiet >= 3) {
      double rem = 0.0;
      if (prev != 0.0) {
        const double ratio = c / prev;
        if (ratio > 0.0 && ratio < 1.0) rem = c * ratio / (1.0 - ratio);
      }
      out.value = total + rem;
      out.error = err + std::abs(rem);
      return out;
    }
    prev = c;
  }
  std::ostringstream msg;
  msg << "tail integral did not converge under outer-radius doubling (last radius " << r << ", partial " << total << ")";
  throw NonIntegrable(msg.str());
}

}  // namespace detail

/// int_{|z|<delta} z z^T nu_{t,x}(dz): closed form when the kernel supplies
/// one, otherwise a geometric extrapolation from the two innermost dyadic
/// annuli. Throws NonIntegrable when that extrapolation does not contract.
template <int D>
Mat<D> inner_second_moment(const LevyKernel<D>& k, double t, const Vec<D>& x, double delta, const QuadratureSpec& q,
                           double* error = nullptr) {
  if (error) *error = 0.0;
  if (k.is_zero()) return Mat<D>::Zero();
  if (k.inner_moment) return k.inner_moment(t, x, delta);
  auto zz = [](const Vec<D>& z) -> Mat<D> { return z * z.transpose(); };
  const auto [outer, e1] = detail::annulus<Mat<D>>(k, t, x, 0.5 * delta, delta, q.panels_per_octave, true, q, zz);
  const auto [inner, e0] = detail::annulus<Mat<D>>(k, t, x, 0.25 * delta, 0.5 * delta, q.panels_per_octave, true, q, zz);
  const double c1 = outer.trace(), c0 = inner.trace();
  if (c1 == 0.0 && c0 == 0.0) return Mat<D>::Zero();
  const double ratio = c0 / c1;
  if (!(ratio < 1.0 - 1e-3) || !std::isfinite(ratio)) {
    throw NonIntegrable("second moment of the small jumps diverges at the origin (annulus ratio " +
                        std::to_string(ratio) + ")");
  }
  const Mat<D> tail = inner * (ratio / (1.0 - ratio));
  if (error) *error = e0 + e1 + 0.5 * tail.norm();
  return outer + inner + tail;
}

/// g^nu_t(x) = int_{B_ell} |z|^2 nu_{t,x}(dz).
template <int D>
Estimate small_jump_moment(const LevyKernel<D>& k, double t, const Vec<D>& x, const QuadratureSpec& q = {}) {
  if (k.is_zero()) return {};
  const double delta = k.ell * q.inner_factor;
  double inner_err = 0.0;
  const double inner = inner_second_moment(k, t, x, delta, q, &inner_err).trace();
  const auto [shell, err] = detail::annulus<double>(k, t, x, delta, k.ell, detail::octave_panels(delta, k.ell, q.panels_per_octave),
                                                    true, q, [](const Vec<D>& z) { return z.squaredNorm(); });
  const Estimate out{inner + shell, err + inner_err};
  if (!std::isfinite(out.value)) throw NonIntegrable("small-jump second moment is not finite");
  return out;
}

/// int_{|z|>r_min} log(1 + |z|/scale) nu_{t,x}(dz).
template <int D>
Estimate log_tail_integral(const LevyKernel<D>& k, double t, const Vec<D>& x, double scale, double r_min,
                           const QuadratureSpec& q = {}) {
  return detail::tail_integral(k, t, x, r_min, q, [scale](const Vec<D>& z) { return std::log1p(z.norm() / scale); });
}

/// hbar^nu_t(x). Symmetric kernels integrate over {|z| > 1+|x|} only.
template <int D>
Estimate log_tail_functional(const LevyKernel<D>& k, double t, const Vec<D>& x, const QuadratureSpec& q = {}) {
  const double scale = 1.0 + x.norm();
  const double r_min = k.symmetric ? std::max(k.ell, scale) : k.ell;
  return log_tail_integral(k, t, x, scale, r_min, q);
}

/// H^nu_t(x, y) = int_{B_ell^c} log(1 + |z|/(1+|x-y|)) nu_{t,x}(dz).
template <int D>
Estimate shifted_log_tail(const LevyKernel<D>& k, double t, const Vec<D>& x, const Vec<D>& y, const QuadratureSpec& q = {}) {
  return log_tail_integral(k, t, x, 1.0 + (x - y).norm(), k.ell, q);
}

/// nu_{t,x}({|z| > r}) for r >= ell.
template <int D>
Estimate tail_mass(const LevyKernel<D>& k, double t, const Vec<D>& x, double r, const QuadratureSpec& q = {}) {
  require(r >= k.ell * (1.0 - 1e-12), "tail_mass radius must be >= ell");
  return detail::tail_integral(k, t, x, r, q, [](const Vec<D>&) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Stable-like kernels nu_{t,x}(dz) = kappa_t(x, z) dz / |z|^{D+alpha}
// ---------------------------------------------------------------------------

template <int D>
using KappaFn = std::function<double(double, const Vec<D>&, const Vec<D>&)>;

/// Stable-like kernel. `kappa_bound` (if finite) is a global bound on kappa,
/// enabling jump sampling by thinning.
template <int D>
LevyKernel<D> stable_like(double alpha, KappaFn<D> kappa, double ell = 0.5, bool symmetric = false,
                          double kappa_bound = std::numeric_limits<double>::quiet_NaN()) {
  require(alpha > 0.0 && alpha < 2.0, "stable index must lie in (0, 2)");
  LevyKernel<D> k;
  k.ell = ell;
  k.symmetric = symmetric;
  k.alpha = alpha;
  k.envelope_kappa = kappa_bound;
  k.density = [alpha, kappa](double t, const Vec<D>& x, const Vec<D>& z) {
    const double r = z.norm();
    return kappa(t, x, z) * std::pow(r, -D - alpha);
  };
  k.inner_moment = [alpha, kappa](double t, const Vec<D>& x, double delta) {
    // kappa is taken constant along each ray inside B_delta, evaluated at delta/2.
    const AngularRule<D>& ang = detail::angular_rule<D>(24);
    Mat<D> m = Mat<D>::Zero();
    for (std::size_t j = 0; j < ang.directions.size(); ++j) {
      const Vec<D>& th = ang.directions[j];
      m += ang.weights[j] * kappa(t, x, 0.5 * delta * th) * (th * th.transpose());
    }
    return Mat<D>(m * (std::pow(delta, 2.0 - alpha) / (2.0 - alpha)));
  };
  k.validate();
  return k;
}

/// kappa_t(x, z) = intensity(t, x): an isotropic stable profile scaled pointwise.
template <int D>
LevyKernel<D> stable_like_separable(double alpha, std::function<double(double, const Vec<D>&)> intensity, double ell = 0.5,
                                    double intensity_bound = std::numeric_limits<double>::quiet_NaN()) {
  auto unit = std::make_shared<const LevyKernel<D>>(
      stable_like<D>(alpha, [](double, const Vec<D>&, const Vec<D>&) { return 1.0; }, ell, true, 1.0));
  LevyKernel<D> k;
  k.ell = ell;
  k.symmetric = true;
  k.alpha = alpha;
  k.envelope_kappa = intensity_bound;
  k.unit = unit;
  k.intensity = intensity;
  k.density = [unit, intensity](double t, const Vec<D>& x, const Vec<D>& z) {
    const double c = intensity(t, x);
    return c == 0.0 ? 0.0 : c * unit->density(t, x, z);
  };
  k.inner_moment = [unit, intensity](double t, const Vec<D>& x, double delta) {
    return Mat<D>(intensity(t, x) * unit->inner_moment(t, x, delta));
  };
  k.validate();
  return k;
}

/// kappa == c: the isotropic alpha-stable Lévy measure c dz/|z|^{D+alpha}.
template <int D>
LevyKernel<D> isotropic_stable(double alpha, double c = 1.0, double ell = 0.5) {
  return stable_like_separable<D>(alpha, [c](double, const Vec<D>&) { return c; }, ell, c);
}

// ---------------------------------------------------------------------------
// Standing-assumption report
// ---------------------------------------------------------------------------

template <int D>
struct Probe {
  double t = 0.0;
  Vec<D> x = Vec<D>::Zero();
};

template <int D>
using ProbeGrid = std::vector<Probe<D>>;

/// Probes on [lo, hi] along the first axis at each time; log spacing places
/// points symmetrically at +-10^s plus the origin.
template <int D>
ProbeGrid<D> probe_line(const std::vector<double>& times, double lo, double hi, int count, bool log_spacing = false) {
  require(count >= 2 && hi > lo, "probe line needs count >= 2 and hi > lo");
  std::vector<double> xs;
  if (!log_spacing) {
    for (int i = 0; i < count; ++i) xs.push_back(lo + (hi - lo) * i / (count - 1));
  } else {
    const double rmax = std::max(std::abs(lo), std::abs(hi));
    const double rmin = std::min(1e-2, rmax / 10.0);
    const int half = std::max(1, count / 2);
    xs.push_back(0.0);
    for (int i = 0; i < half; ++i) {
      const double r = rmin * std::pow(rmax / rmin, static_cast<double>(i) / std::max(1, half - 1));
      if (r <= hi) xs.push_back(r);
      if (-r >= lo) xs.push_back(-r);
    }
    std::sort(xs.begin(), xs.end());
  }
  ProbeGrid<D> out;
  for (double t : times) {
    for (double x1 : xs) {
      Probe<D> p;
      p.t = t;
      p.x = Vec<D>::Zero();
      p.x(0) = x1;
      out.push_back(p);
    }
  }
  return out;
}

struct ConditionTerms {
  double diffusion_and_small_jumps = 0.0;  // (|a| + g) / (1 + |x|^2)
  double drift = 0.0;                      // |b| / (1 + |x|)
  double log_tail = 0.0;                   // hbar
  double total = 0.0;
};

template <int D>
struct ConditionReport {
  double total_sup = 0.0;
  ConditionTerms per_term;  // per-term maxima over the probes
  Probe<D> argmax_probe;
  /// Some term was non-finite at a probe.
  bool violated = false;
  /// The sampled supremum keeps growing with the probe box.
  bool unbounded_trend = false;
  /// Sampled suprema over the nested boxes |x| <= R/4, R/2, R.
  std::vector<double> nested_sups;
  std::string caveat = "supremum sampled on a finite probe grid; the true supremum over all (t, x) is not computed";
};

struct AssumptionOptions {
  /// Growth factor between the half box and the full box flagged as an unbounded trend.
  double trend_ratio = 1.25;
};

template <int D>
ConditionTerms condition_terms(const LevyKernel<D>& k, const CoefficientField<D>& c, const Probe<D>& p,
                               const QuadratureSpec& q = {}) {
  ConditionTerms terms;
  const double r2 = p.x.squaredNorm();
  const double g = small_jump_moment(k, p.t, p.x, q).value;
  terms.diffusion_and_small_jumps = (matrix_norm<D>(c.diffusion(p.t, p.x)) + g) / (1.0 + r2);
  terms.drift = c.drift(p.t, p.x).norm() / (1.0 + std::sqrt(r2));
  terms.log_tail = log_tail_functional(k, p.t, p.x, q).value;
  terms.total = terms.diffusion_and_small_jumps + terms.drift + terms.log_tail;
  return terms;
}

/// Sampled supremum of (|a|+g)/(1+|x|^2) + |b|/(1+|x|) + hbar over the probes.
template <int D>
ConditionReport<D> assumption_report(const LevyKernel<D>& k, const CoefficientField<D>& c, const ProbeGrid<D>& probes,
                                     const QuadratureSpec& q = {}, const AssumptionOptions& opt = {}) {
  require(!probes.empty(), "probe grid is empty");
  ConditionReport<D> rep;
  rep.total_sup = -kInf;
  double rmax = 0.0;
  for (const auto& p : probes) rmax = std::max(rmax, p.x.norm());
  std::vector<double> nested(3, -kInf);
  const double radii[3] = {0.25 * rmax, 0.5 * rmax, rmax};
  for (const auto& p : probes) {
    ConditionTerms t;
    try {
      t = condition_terms(k, c, p, q);
    } catch (const NonIntegrable& e) {
      std::ostringstream msg;
      msg << e.what() << " at probe t=" << p.t << " x=(" << p.x.transpose() << ")";
      throw NonIntegrable(msg.str());
    }
    if (!std::isfinite(t.total)) {
      rep.violated = true;
      rep.argmax_probe = p;
      continue;
    }
    rep.per_term.diffusion_and_small_jumps = std::max(rep.per_term.diffusion_and_small_jumps, t.diffusion_and_small_jumps);
    rep.per_term.drift = std::max(rep.per_term.drift, t.drift);
    rep.per_term.log_tail = std::max(rep.per_term.log_tail, t.log_tail);
    if (t.total > rep.total_sup) {
      rep.total_sup = t.total;
      if (!rep.violated) rep.argmax_probe = p;
    }
    for (int i = 0; i < 3; ++i)
      if (p.x.norm() <= radii[i] * (1.0 + 1e-12)) nested[i] = std::max(nested[i], t.total);
  }
  rep.per_term.total = rep.total_sup;
  rep.nested_sups = nested;
  if (rep.violated) rep.total_sup = kInf;
  if (nested[0] > 0.0 && nested[1] > 0.0)
    rep.unbounded_trend = nested[2] > opt.trend_ratio * nested[1] && nested[1] > nested[0];
  return rep;
}

}  // namespace nlfp
