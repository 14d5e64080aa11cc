#pragma once

#include "nlfp/coefficients.hpp"
#include "nlfp/fft.hpp"
#include "nlfp/levy.hpp"

#include <memory>
#include <optional>
#include <string>

namespace nlfp {

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

/// A C^2 function supported in the closed ball B_radius(center) with exact
/// first and second derivatives.
template <int D>
struct TestFunction {
  std::string name;
  Vec<D> center = Vec<D>::Zero();
  double radius = 1.0;
  std::function<double(const Vec<D>&)> value;
  std::function<Vec<D>(const Vec<D>&)> gradient;
  std::function<Mat<D>(const Vec<D>&)> hessian;
  /// sup|f| + sup|grad f| + sup|hess f|_op, sampled.
  double c2_norm = std::numeric_limits<double>::quiet_NaN();

  bool in_support(const Vec<D>& x) const { return (x - center).norm() < radius; }
};

namespace detail {
template <int D>
double sampled_c2_norm(const TestFunction<D>& f) {
  const int per_axis = D == 1 ? 4001 : (D == 2 ? 81 : 25);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  std::array<int, 3> idx{0, 0, 0};
  const int total = static_cast<int>(std::pow(per_axis, D));
  for (int lin = 0; lin < total; ++lin) {
    int rem = lin;
    for (int a = 0; a < D; ++a) {
      idx[a] = rem % per_axis;
      rem /= per_axis;
    }
    Vec<D> x;
    for (int a = 0; a < D; ++a) x(a) = f.center(a) - f.radius + 2.0 * f.radius * idx[a] / (per_axis - 1);
    s0 = std::max(s0, std::abs(f.value(x)));
    s1 = std::max(s1, f.gradient(x).norm());
    const Mat<D> h = f.hessian(x);
    if constexpr (D == 1) {
      s2 = std::max(s2, std::abs(h(0, 0)));
    } else {
      Eigen::SelfAdjointEigenSolver<Mat<D>> es(h, Eigen::EigenvaluesOnly);
      s2 = std::max(s2, es.eigenvalues().cwiseAbs().maxCoeff());
    }
  }
  return s0 + s1 + s2;
}
}  // namespace detail

/// f(x) = (1 - |x-c|^2/R^2)^4 on B_R(c).
template <int D>
TestFunction<D> radial_bump(const Vec<D>& center, double radius) {
  require(radius > 0.0, "test function radius must be positive");
  TestFunction<D> f;
  f.name = "bump(R=" + std::to_string(radius) + ")";
  f.center = center;
  f.radius = radius;
  const double r2 = radius * radius;
  f.value = [center, r2](const Vec<D>& x) {
    const double u = 1.0 - (x - center).squaredNorm() / r2;
    return u > 0.0 ? u * u * u * u : 0.0;
  };
  f.gradient = [center, r2](const Vec<D>& x) -> Vec<D> {
    const Vec<D> y = x - center;
    const double u = 1.0 - y.squaredNorm() / r2;
    if (u <= 0.0) return Vec<D>::Zero();
    return (-8.0 * u * u * u / r2) * y;
  };
  f.hessian = [center, r2](const Vec<D>& x) -> Mat<D> {
    const Vec<D> y = x - center;
    const double u = 1.0 - y.squaredNorm() / r2;
    if (u <= 0.0) return Mat<D>::Zero();
    return Mat<D>((-8.0 * u * u * u / r2) * Mat<D>::Identity() + (48.0 * u * u / (r2 * r2)) * (y * y.transpose()));
  };
  f.c2_norm = detail::sampled_c2_norm(f);
  return f;
}

/// f(x) = cos(w.(x-c) + phase) * bump(x).
template <int D>
TestFunction<D> modulated_bump(const Vec<D>& center, double radius, const Vec<D>& w, double phase) {
  const TestFunction<D> b = radial_bump<D>(center, radius);
  TestFunction<D> f;
  f.name = "modulated(R=" + std::to_string(radius) + ",|w|=" + std::to_string(w.norm()) + ",phase=" + std::to_string(phase) + ")";
  f.center = center;
  f.radius = radius;
  auto arg = [center, w, phase](const Vec<D>& x) { return w.dot(x - center) + phase; };
  f.value = [b, arg](const Vec<D>& x) { return std::cos(arg(x)) * b.value(x); };
  f.gradient = [b, arg, w](const Vec<D>& x) -> Vec<D> {
    const double c = std::cos(arg(x)), s = std::sin(arg(x));
    return c * b.gradient(x) - s * b.value(x) * w;
  };
  f.hessian = [b, arg, w](const Vec<D>& x) -> Mat<D> {
    const double c = std::cos(arg(x)), s = std::sin(arg(x));
    const Vec<D> gb = b.gradient(x);
    return Mat<D>(c * b.hessian(x) - s * (gb * w.transpose() + w * gb.transpose()) - c * b.value(x) * (w * w.transpose()));
  };
  f.c2_norm = detail::sampled_c2_norm(f);
  return f;
}

/// alpha f + beta g, supported in a ball around f's center covering both supports.
template <int D>
TestFunction<D> combine(double alpha, const TestFunction<D>& f, double beta, const TestFunction<D>& g) {
  TestFunction<D> h;
  h.name = "combination";
  h.center = f.center;
  h.radius = std::max(f.radius, (g.center - f.center).norm() + g.radius);
  h.value = [=](const Vec<D>& x) { return alpha * f.value(x) + beta * g.value(x); };
  h.gradient = [=](const Vec<D>& x) -> Vec<D> { return alpha * f.gradient(x) + beta * g.gradient(x); };
  h.hessian = [=](const Vec<D>& x) -> Mat<D> { return alpha * f.hessian(x) + beta * g.hessian(x); };
  h.c2_norm = detail::sampled_c2_norm(h);
  return h;
}

/// Translate: x -> f(x - shift).
template <int D>
TestFunction<D> translate(const TestFunction<D>& f, const Vec<D>& shift) {
  TestFunction<D> g = f;
  g.center = f.center + shift;
  g.value = [f, shift](const Vec<D>& x) { return f.value(x - shift); };
  g.gradient = [f, shift](const Vec<D>& x) -> Vec<D> { return f.gradient(x - shift); };
  g.hessian = [f, shift](const Vec<D>& x) -> Mat<D> { return f.hessian(x - shift); };
  return g;
}

// ---------------------------------------------------------------------------
// Truncation pi
// ---------------------------------------------------------------------------

/// pi(z) = z chi(|z|) with chi = 1 on [0, ell], a quintic blend to 0 on [ell, 2 ell].
template <int D>
struct TruncationPi {
  double ell = 0.5;

  double chi(double r) const { return 1.0 - smoothstep5((r - ell) / ell); }
  Vec<D> operator()(const Vec<D>& z) const { return chi(z.norm()) * z; }
};

// ---------------------------------------------------------------------------
// Local parts
// ---------------------------------------------------------------------------

template <int D>
double apply_A(const CoefficientField<D>& c, const TestFunction<D>& f, double t, const Vec<D>& x) {
  if (!c.has_diffusion() || !f.in_support(x)) return 0.0;
  return (c.diffusion(t, x).cwiseProduct(f.hessian(x))).sum();
}

template <int D>
double apply_B(const CoefficientField<D>& c, const TestFunction<D>& f, double t, const Vec<D>& x) {
  if (!c.has_drift() || !f.in_support(x)) return 0.0;
  return c.drift(t, x).dot(f.gradient(x));
}

// ---------------------------------------------------------------------------
// Jump part
// ---------------------------------------------------------------------------

namespace detail {

/// Radial segments between consecutive cuts: linear panels of width <=
/// `lin_width` on segments inside [lin_start, lin_end], log-spaced panels elsewhere.
template <class T, int D, class G>
std::pair<T, double> segmented(const LevyKernel<D>& k, double t, const Vec<D>& x, std::vector<double> cuts, double lin_start,
                               double lin_end, double lin_width, const QuadratureSpec& q, G&& g) {
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  T total = zero_value<T>();
  double err = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    if (!(b > a)) continue;
    const bool log_spacing = a < lin_start * (1.0 - 1e-12) || b > lin_end * (1.0 + 1e-12);
    const int panels = log_spacing ? octave_panels(a, b, q.panels_per_octave)
                                   : std::max(1, static_cast<int>(std::ceil((b - a) / lin_width - 1e-9)));
    const auto [v, e] = annulus<T>(k, t, x, a, b, panels, log_spacing, q, g);
    total += v;
    err += e;
  }
  return {total, err};
}

template <int D, class Comp>
Estimate jump_integral(const LevyKernel<D>& k, const TestFunction<D>& f, double t, const Vec<D>& x, const QuadratureSpec& q,
                       double comp_radius, Comp&& comp) {
  if (k.is_zero()) return {};
  const double fx = f.value(x);
  const Vec<D> gx = f.gradient(x);
  const Mat<D> hx = f.hessian(x);
  const double delta = k.ell * q.operator_inner_factor;

  const double rho = (x - f.center).norm();
  const double r_in = std::abs(rho - f.radius);
  const double r_out = rho + f.radius;
  const bool outside = rho >= f.radius;
  const double r_quad = std::max(comp_radius, r_out);
  const double lin_start = std::max(delta, f.radius * q.support_panel_fraction);
  const double lin_width = f.radius * q.support_panel_fraction;

  auto theta = [&](const Vec<D>& z) {
    const double r = z.norm();
    double v = f.value(x + z) - fx;
    if (r <= comp_radius) v -= comp(z).dot(gx);
    return v;
  };

  Estimate out;
  double inner_err = 0.0;
  if (!outside) {
    const Mat<D> m = inner_second_moment(k, t, x, delta, q, &inner_err);
    out.value += 0.5 * hx.cwiseProduct(m).sum();
    inner_err *= 0.5 * hx.norm();
    // The Taylor remainder on B_delta is dominated by its value on [delta, 2 delta].
    const auto [mis, mis_err] = annulus<double>(k, t, x, delta, 2.0 * delta, 1, true, q, [&](const Vec<D>& z) {
      return theta(z) - 0.5 * z.dot(hx * z);
    });
    inner_err += std::abs(mis) + mis_err;
  }

  std::vector<double> cuts{delta, r_quad};
  for (double c : {k.ell, comp_radius, r_in, r_out, lin_start})
    if (c > delta && c < r_quad) cuts.push_back(c);
  if (outside) {
    // f(x+z) = 0 for |z| < |rho - R| when x is outside the support.
    cuts.erase(std::remove_if(cuts.begin(), cuts.end(), [&](double c) { return c < r_in; }), cuts.end());
    cuts.push_back(std::max(delta, r_in));
  }
  const auto [shell, shell_err] = segmented<double>(k, t, x, cuts, lin_start, kInf, lin_width, q, theta);
  out.value += shell;

  double tail_err = 0.0;
  if (fx != 0.0) {
    const Estimate tm = tail_mass(k, t, x, r_quad, q);
    out.value -= fx * tm.value;
    tail_err = std::abs(fx) * tm.error;
  }
  out.error = shell_err + inner_err + tail_err;
  if (!std::isfinite(out.value)) throw NonIntegrable("jump integral is not finite");
  if (out.error > q.tolerance) {
    throw TailBoundTooLoose("jump integral error bound " + std::to_string(out.error) + " exceeds tolerance " +
                            std::to_string(q.tolerance));
  }
  return out;
}

}  // namespace detail

/// N f(x) = int [f(x+z) - f(x) - 1_{|z|<=ell} z.grad f(x)] nu_{t,x}(dz).
template <int D>
Estimate apply_N(const LevyKernel<D>& k, const TestFunction<D>& f, double t, const Vec<D>& x, const QuadratureSpec& q = {}) {
  return detail::jump_integral(k, f, t, x, q, k.ell, [](const Vec<D>& z) { return z; });
}

template <int D>
struct PiDecomposition {
  /// int [f(x+z) - f(x) - pi(z).grad f(x)] nu(dz)
  Estimate jump;
  /// int [pi(z) - z 1_{|z|<=ell}] nu(dz)
  Vec<D> drift_correction = Vec<D>::Zero();
};

template <int D>
Vec<D> pi_drift_correction(const LevyKernel<D>& k, double t, const Vec<D>& x, const TruncationPi<D>& pi,
                           const QuadratureSpec& q = {}) {
  if (k.is_zero()) return Vec<D>::Zero();
  return detail::annulus<Vec<D>>(k, t, x, pi.ell, 2.0 * pi.ell, 16, false, q, [&](const Vec<D>& z) { return pi(z); }).first;
}

template <int D>
PiDecomposition<D> apply_N_pi(const LevyKernel<D>& k, const TestFunction<D>& f, double t, const Vec<D>& x,
                              const TruncationPi<D>& pi, const QuadratureSpec& q = {}) {
  require(std::abs(pi.ell - k.ell) <= 1e-15 * k.ell, "truncation pi must use the kernel's cutoff");
  PiDecomposition<D> out;
  out.jump = detail::jump_integral(k, f, t, x, q, 2.0 * pi.ell, [&](const Vec<D>& z) { return pi(z); });
  out.drift_correction = pi_drift_correction(k, t, x, pi, q);
  return out;
}

// ---------------------------------------------------------------------------
// Fractional Laplacian
// ---------------------------------------------------------------------------

/// C_{d,alpha}: with nu = C dz/|z|^{d+alpha} the jump operator has symbol -|xi|^alpha.
inline double stable_generator_constant(int d, double alpha) {
  require(alpha > 0.0 && alpha < 2.0, "stable index must lie in (0, 2)");
  return alpha * std::pow(2.0, alpha - 1.0) * std::tgamma(0.5 * (d + alpha)) /
         (std::pow(kPi, 0.5 * d) * std::tgamma(1.0 - 0.5 * alpha));
}

/// Symbol -scale |xi|^alpha on the real-FFT modes of a periodic grid.
inline std::vector<double> fractional_symbol(const PeriodicGrid& g, double alpha, double scale = 1.0) {
  std::vector<double> m(g.n / 2 + 1);
  for (int k = 0; k < static_cast<int>(m.size()); ++k) m[k] = -scale * std::pow(g.wavenumber(k), alpha);
  return m;
}

/// Periodic spectral Delta^{alpha/2}: Fourier multiplier -|xi|^alpha. This is
/// the periodic surrogate of the whole-space operator; data must be small
/// near the box edges for the two to agree.
inline std::vector<double> frac_laplacian_spectral(const std::vector<double>& u, const PeriodicGrid& g, double alpha) {
  require(alpha > 0.0 && alpha < 2.0, "stable index must lie in (0, 2)");
  require(static_cast<int>(u.size()) == g.n, "grid function length does not match the grid");
  if (g.n < 16) throw GridTooCoarse("spectral fractional Laplacian needs at least 16 nodes");
  RealFft fft(g.n);
  return fft.apply_multiplier(u, fractional_symbol(g, alpha));
}

/// Density at time t > 0 of the stable flight (Levy measure dz/|z|^{1+alpha},
/// started at 0) wrapped onto the periodic grid, by Fourier series.
inline std::vector<double> stable_density_torus(double alpha, double t, const PeriodicGrid& g) {
  require(alpha > 0.0 && alpha < 2.0, "stable index must lie in (0, 2)");
  require(t > 0.0, "torus stable density needs t > 0");
  require(g.n >= 16, "torus stable density needs at least 16 nodes");
  const double scale = t / stable_generator_constant(1, alpha);
  RealFft fft(g.n);
  std::vector<std::complex<double>> spec(fft.modes());
  for (int k = 0; k < fft.modes(); ++k) {
    const double xi = g.wavenumber(k);
    spec[k] = (g.n / g.width) * std::exp(-scale * std::pow(xi, alpha)) * std::polar(1.0, xi * g.x0);
  }
  auto v = fft.inverse(spec);
  for (double& x : v) x = std::max(0.0, x);
  return v;
}

// ---------------------------------------------------------------------------
// Tabulated jump operators for separable 1-D kernels
// ---------------------------------------------------------------------------

/// Catmull-Rom interpolation of uniformly spaced samples; NaN outside.
inline double cubic_interpolate(const std::vector<double>& v, double x_lo, double h, double x) {
  const double s = (x - x_lo) / h;
  const int n = static_cast<int>(v.size());
  if (!(s >= 0.0) || s > n - 1) return std::numeric_limits<double>::quiet_NaN();
  int i = std::min(static_cast<int>(s), n - 2);
  const double u = s - i;
  const double p1 = v[i], p2 = v[i + 1];
  const double p0 = i > 0 ? v[i - 1] : 2.0 * p1 - p2;
  const double p3 = i + 2 < n ? v[i + 2] : 2.0 * p2 - p1;
  return p1 + 0.5 * u * (p2 - p0 + u * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + u * (3.0 * (p1 - p2) + p3 - p0)));
}

/// N_unit f tabulated around c for kernels whose density factors as
/// intensity(t, x) * unit(z): a fine table across the support edge, where
/// N f is only C^{4-alpha}, and a coarse one out to the reach.
struct JumpTable {
  struct Level {
    double x_lo = 0.0;
    double h = 0.0;
    std::vector<double> values;
    bool covers(double x) const { return !values.empty() && x >= x_lo && x <= x_lo + h * (values.size() - 1); }
  };
  Level fine;
  Level coarse;

  bool covers(double x) const { return coarse.covers(x); }
  double operator()(double x) const {
    const Level& l = fine.covers(x) ? fine : coarse;
    return cubic_interpolate(l.values, l.x_lo, l.h, x);
  }
};

struct TableSpec {
  bool enabled = true;
  /// Coarse table half-width in units of the test function radius.
  double reach = 48.0;
  int coarse_nodes_per_radius = 32;
  /// Fine table covers |x - c| <= fine_reach * R.
  double fine_reach = 1.5;
  int fine_nodes_per_radius = 256;
};

inline JumpTable build_jump_table(const LevyKernel<1>& unit, const TestFunction<1>& f, const TableSpec& spec,
                                  const QuadratureSpec& q) {
  auto fill = [&](double reach, int per_radius) {
    JumpTable::Level l;
    l.h = f.radius / per_radius;
    const int half = static_cast<int>(std::ceil(reach * per_radius));
    l.x_lo = f.center(0) - half * l.h;
    l.values.resize(2 * half + 1);
    parallel_for(l.values.size(), [&](std::size_t i) {
      l.values[i] = apply_N(unit, f, 0.0, Vec<1>(l.x_lo + i * l.h), q).value;
    });
    return l;
  };
  JumpTable tab;
  tab.fine = fill(spec.fine_reach, spec.fine_nodes_per_radius);
  tab.coarse = fill(spec.reach, spec.coarse_nodes_per_radius);
  return tab;
}

/// L_t f(x) = A f + B f + N f for a fixed test function, with jump tables for
/// separable 1-D kernels.
template <int D>
class BoundGenerator {
public:
  BoundGenerator(const CoefficientField<D>& c, const LevyKernel<D>& k, TestFunction<D> f, const QuadratureSpec& q = {},
                 const TableSpec& tables = {})
      : c_(c), k_(k), f_(std::move(f)), q_(q) {
    if constexpr (D == 1) {
      if (tables.enabled && k_.separable()) table_ = build_jump_table(*k_.unit, f_, tables, q_);
    }
  }

  const TestFunction<D>& function() const { return f_; }

  double jump(double t, const Vec<D>& x) const {
    if (k_.is_zero()) return 0.0;
    if constexpr (D == 1) {
      if (table_ && table_->covers(x(0))) {
        const double c = k_.intensity(t, x);
        return c == 0.0 ? 0.0 : c * (*table_)(x(0));
      }
    }
    return apply_N(k_, f_, t, x, q_).value;
  }

  double operator()(double t, const Vec<D>& x) const { return apply_A(c_, f_, t, x) + apply_B(c_, f_, t, x) + jump(t, x); }

private:
  CoefficientField<D> c_;
  LevyKernel<D> k_;
  TestFunction<D> f_;
  QuadratureSpec q_;
  std::optional<JumpTable> table_;
};

// ---------------------------------------------------------------------------
// Lyapunov audit
// ---------------------------------------------------------------------------

/// V_y(x) = log(1 + |x-y|^2) and its exact derivatives.
template <int D>
struct LyapunovV {
  Vec<D> y = Vec<D>::Zero();

  double value(const Vec<D>& x) const { return std::log1p((x - y).squaredNorm()); }
  Vec<D> gradient(const Vec<D>& x) const {
    const Vec<D> w = x - y;
    return (2.0 / (1.0 + w.squaredNorm())) * w;
  }
  Mat<D> hessian(const Vec<D>& x) const {
    const Vec<D> w = x - y;
    const double q = 1.0 + w.squaredNorm();
    return Mat<D>((2.0 / q) * Mat<D>::Identity() - (4.0 / (q * q)) * (w * w.transpose()));
  }
};

/// L_t V_y(x) via the exact derivatives of V_y.
template <int D>
double generator_on_lyapunov(const CoefficientField<D>& c, const LevyKernel<D>& k, const LyapunovV<D>& V, double t,
                             const Vec<D>& x, const QuadratureSpec& q = {}) {
  const Mat<D> hx = V.hessian(x);
  const Vec<D> gx = V.gradient(x);
  const double vx = V.value(x);
  double out = c.diffusion(t, x).cwiseProduct(hx).sum() + c.drift(t, x).dot(gx);
  if (k.is_zero()) return out;
  const double delta = k.ell * q.operator_inner_factor;
  out += 0.5 * hx.cwiseProduct(inner_second_moment(k, t, x, delta, q)).sum();
  auto small = [&](const Vec<D>& z) { return V.value(x + z) - vx - z.dot(gx); };
  out += detail::annulus<double>(k, t, x, delta, k.ell, detail::octave_panels(delta, k.ell, q.panels_per_octave), true, q, small)
             .first;
  // Large jumps: resolve the dip of V(x+z) near z = y - x before the dyadic tail.
  auto big = [&](const Vec<D>& z) { return V.value(x + z) - vx; };
  const double rho = (x - V.y).norm();
  const double r_mid = std::max(k.ell, 2.0 * (rho + 2.0));
  std::vector<double> cuts{k.ell, r_mid};
  for (double c : {rho - 2.0, rho + 2.0})
    if (c > k.ell && c < r_mid) cuts.push_back(c);
  out += detail::segmented<double>(k, t, x, cuts, rho - 2.0, rho + 2.0, 0.125, q, big).first;
  out += detail::tail_integral(k, t, x, r_mid, q, big).value;
  return out;
}

template <int D>
struct AuditReport {
  /// max over probes of LHS - RHS.
  double max_excess = -kInf;
  Probe<D> argmax;
  double lhs_at_max = 0.0;
  double rhs_at_max = 0.0;
  std::size_t probes = 0;
  std::size_t violations = 0;
  double tolerance = 1e-8;
  bool passed() const { return max_excess <= tolerance; }
};

/// Checks L V_y <= 2[(|a| + <x-y, b>^+ + g)/(1+|x-y|^2) + 2 H(x, y)] at every probe.
template <int D>
AuditReport<D> lyapunov_bound_audit(const CoefficientField<D>& c, const LevyKernel<D>& k, const Vec<D>& y,
                                    const ProbeGrid<D>& probes, const QuadratureSpec& q = {}, double tolerance = 1e-8) {
  AuditReport<D> rep;
  rep.tolerance = tolerance;
  rep.probes = probes.size();
  const LyapunovV<D> V{y};
  std::vector<double> lhs(probes.size()), rhs(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) {
    const auto& p = probes[i];
    const Vec<D> w = p.x - y;
    const double g = small_jump_moment(k, p.t, p.x, q).value;
    const double H = shifted_log_tail(k, p.t, p.x, y, q).value;
    const double num = matrix_norm<D>(c.diffusion(p.t, p.x)) + std::max(0.0, w.dot(c.drift(p.t, p.x))) + g;
    rhs[i] = 2.0 * (num / (1.0 + w.squaredNorm()) + 2.0 * H);
    lhs[i] = generator_on_lyapunov(c, k, V, p.t, p.x, q);
  });
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double ex = lhs[i] - rhs[i];
    if (ex > tolerance) ++rep.violations;
    if (ex > rep.max_excess) {
      rep.max_excess = ex;
      rep.argmax = probes[i];
      rep.lhs_at_max = lhs[i];
      rep.rhs_at_max = rhs[i];
    }
  }
  return rep;
}

}  // namespace nlfp
