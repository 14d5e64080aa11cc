#pragma once

#include "nlfp/measure.hpp"
#include "nlfp/operators.hpp"

namespace nlfp {

template <int D>
struct TestBank {
  std::vector<TestFunction<D>> functions;

  std::size_t size() const { return functions.size(); }

  /// Radial and coordinate-modulated bumps around `center` for each radius.
  static TestBank standard(const Vec<D>& center = Vec<D>::Zero(), const std::vector<double>& radii = {1.0, 2.0, 4.0, 8.0}) {
    TestBank b;
    for (double r : radii) {
      b.functions.push_back(radial_bump<D>(center, r));
      Vec<D> w = Vec<D>::Zero();
      w(0) = 2.0 / r;
      b.functions.push_back(modulated_bump<D>(center, r, w, 0.4));
    }
    return b;
  }
};

struct ResidualReport {
  std::vector<std::string> functions;
  std::vector<double> c2_norms;
  std::vector<double> times;
  /// residual[f][j] = mu_t(f) - mu_0(f) - int_0^t mu_s(L_s f) ds at times[j].
  std::vector<std::vector<double>> residual;
  /// Time-discretization error estimate (trapezoid vs. every-other-node trapezoid).
  std::vector<std::vector<double>> error;
  /// Grid-level weak-continuity modulus max_n |mu_{t_{n+1}}(f) - mu_{t_n}(f)| (diagnostic only).
  std::vector<double> continuity_modulus;

  double max_abs() const {
    double m = 0.0;
    for (const auto& row : residual)
      for (double v : row) m = std::max(m, std::abs(v));
    return m;
  }
  /// max over (f, t) of |R(f, t)| / ||f||_{C^2}.
  double max_scaled() const {
    double m = 0.0;
    for (std::size_t i = 0; i < residual.size(); ++i)
      for (double v : residual[i]) m = std::max(m, std::abs(v) / c2_norms[i]);
    return m;
  }
};

namespace detail {
template <int D, class G>
double integrate_parallel(const Snapshot<D>& s, G&& g) {
  if (const auto* pc = std::get_if<ParticleCloud<D>>(&s)) {
    return parallel_sum(pc->size(), [&](std::size_t i) { return pc->weights[i] * g(pc->positions[i]); });
  }
  if constexpr (D == 1) {
    const auto& gd = std::get<GridDensity>(s);
    return gd.h * parallel_sum(gd.size(), [&](std::size_t i) {
      return gd.values[i] == 0.0 ? 0.0 : gd.values[i] * g(Vec<1>(gd.node(i)));
    });
  }
  throw ValidationError("grid densities are one-dimensional");
}
}  // namespace detail

struct ResidualOptions {
  QuadratureSpec quad;
  TableSpec tables;
  /// Periodic images summed explicitly on each side; the rest is a tail-mass estimate.
  int image_terms = 256;
};

namespace detail {
/// Jumps of the periodized test function landing on the images of its support:
/// int f(y) S(y - x) dy with S(d) = sum_{0 < |m| <= M} nu_x(d + m W), plus a
/// tail-mass estimate for |m| > M.
template <class S>
double periodic_images(const LevyKernel<1>& k, double t, double x, const TestFunction<1>& f, double W, double fmass,
                       const ResidualOptions& opt, S&& images) {
  const double c = f.center(0), R = f.radius;
  const int panels = std::max(4, static_cast<int>(std::ceil(2.0 * R / (0.05 * W))));
  const double sum = integrate_panels(
      [&](double y) {
        const double fy = f.value(Vec<1>(y));
        return fy == 0.0 ? 0.0 : fy * images(y - x);
      },
      c - R, c + R, panels);
  const double far = (opt.image_terms + 0.5) * W;
  return sum + fmass * tail_mass(k, t, Vec<1>(x), far, opt.quad).value / W;
}

/// Image sum S(d) of a (t, x)-independent kernel tabulated on [-W, W].
inline std::function<double(double)> image_table(const LevyKernel<1>& unit, double W, int terms) {
  const int n = 4096;
  const double h = 2.0 * W / n;
  auto v = std::make_shared<std::vector<double>>(n + 1);
  const Vec<1> o = Vec<1>::Zero();
  parallel_for(n + 1, [&](std::size_t i) {
    const double d = -W + static_cast<double>(i) * h;
    double s = 0.0;
    for (int m = 1; m <= terms; ++m) {
      const double a = d + m * W, b = d - m * W;
      if (std::abs(a) > 0.0) s += unit.density(0.0, o, Vec<1>(a));
      if (std::abs(b) > 0.0) s += unit.density(0.0, o, Vec<1>(b));
    }
    (*v)[i] = s;
  });
  return [v, W, h](double d) { return cubic_interpolate(*v, -W, h, d); };
}
}  // namespace detail

/// Weak-identity residuals of `curve` for L = A + B + N at the requested grid times.
template <int D>
ResidualReport residual(const MeasureCurve<D>& curve, const CoefficientField<D>& c, const LevyKernel<D>& k,
                        const TestBank<D>& bank, const std::vector<double>& times, const ResidualOptions& opt = {}) {
  curve.validate(1e-6);
  std::vector<int> idx;
  for (double t : times) {
    const int i = curve.index_of(t, 1e-9);
    require(i >= 0, "residual time " + std::to_string(t) + " is not on the curve's time grid");
    idx.push_back(i);
  }
  ResidualReport rep;
  rep.times = times;
  const std::size_t n = curve.size();
  for (const auto& f : bank.functions) {
    BoundGenerator<D> gen(c, k, f, opt.quad, opt.tables);
    std::vector<double> m(n), l(n);
    // Separable kernels: image sums per grid node, reused across times.
    std::vector<double> unit_images;
    double unit_x0 = 0.0, unit_h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double t = curve.times[j];
      m[j] = detail::integrate_parallel<D>(curve.snapshots[j], [&](const Vec<D>& x) { return f.value(x); });
      l[j] = detail::integrate_parallel<D>(curve.snapshots[j], [&](const Vec<D>& x) { return gen(t, x); });
      if constexpr (D == 1) {
        const auto* gd = std::get_if<GridDensity>(&curve.snapshots[j]);
        if (!gd || !gd->periodic || k.is_zero()) continue;
        // A periodic grid is a measure on the circle: add the image jumps.
        const double W = gd->h * static_cast<double>(gd->size());
        require(f.center(0) - f.radius >= gd->x0 + k.ell && f.center(0) + f.radius <= gd->x0 + W - k.ell,
                "test function support must sit inside the periodic box");
        const double fmass = integrate_panels([&](double y) { return f.value(Vec<1>(y)); }, f.center(0) - f.radius,
                                              f.center(0) + f.radius, 16);
        std::vector<double> img(gd->size());
        if (k.separable()) {
          if (unit_images.size() != gd->size() || unit_x0 != gd->x0 || unit_h != gd->h) {
            const auto table = detail::image_table(*k.unit, W, opt.image_terms);
            unit_images.assign(gd->size(), 0.0);
            parallel_for(gd->size(), [&](std::size_t i) {
              unit_images[i] = detail::periodic_images(*k.unit, 0.0, gd->node(i), f, W, fmass, opt, table);
            });
            unit_x0 = gd->x0;
            unit_h = gd->h;
          }
          for (std::size_t i = 0; i < gd->size(); ++i) img[i] = k.intensity(t, Vec<1>(gd->node(i))) * unit_images[i];
        } else {
          parallel_for(gd->size(), [&](std::size_t i) {
            if (gd->values[i] == 0.0) return;
            const double x = gd->node(i);
            auto direct = [&](double d) {
              double s = 0.0;
              for (int m = 1; m <= opt.image_terms; ++m)
                s += k.density(t, Vec<1>(x), Vec<1>(d + m * W)) + k.density(t, Vec<1>(x), Vec<1>(d - m * W));
              return s;
            };
            img[i] = detail::periodic_images(k, t, x, f, W, fmass, opt, direct);
          });
        }
        double add = 0.0;
        for (std::size_t i = 0; i < gd->size(); ++i) add += gd->values[i] * img[i];
        l[j] += gd->h * add;
      }
    }
    // Cumulative trapezoid on the full grid and on every other node.
    std::vector<double> fine(n, 0.0), coarse(n, 0.0);
    for (std::size_t j = 1; j < n; ++j) fine[j] = fine[j - 1] + 0.5 * (curve.times[j] - curve.times[j - 1]) * (l[j] + l[j - 1]);
    for (std::size_t j = 2; j < n; j += 2)
      coarse[j] = coarse[j - 2] + 0.5 * (curve.times[j] - curve.times[j - 2]) * (l[j] + l[j - 2]);
    std::vector<double> row, err;
    for (int j : idx) {
      row.push_back(j == 0 ? 0.0 : m[j] - m[0] - fine[j]);
      const int je = j - (j % 2);
      err.push_back(je >= 2 ? std::abs(fine[je] - coarse[je]) / 3.0 : 0.0);
    }
    double modulus = 0.0;
    for (std::size_t j = 1; j < n; ++j) modulus = std::max(modulus, std::abs(m[j] - m[j - 1]));
    rep.functions.push_back(f.name);
    rep.c2_norms.push_back(f.c2_norm);
    rep.residual.push_back(std::move(row));
    rep.error.push_back(std::move(err));
    rep.continuity_modulus.push_back(modulus);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Integrability
// ---------------------------------------------------------------------------

/// nu({|z| > r}) for a kernel, with a log-log table of the unit tail when the
/// kernel is separable.
template <int D>
class TailMassEvaluator {
public:
  TailMassEvaluator(const LevyKernel<D>& k, const QuadratureSpec& q) : k_(k), q_(q) {
    if (k_.separable()) {
      const double r0 = k_.ell;
      const int per_octave = 8, octaves = 64;
      log_r0_ = std::log(r0);
      step_ = std::log(2.0) / per_octave;
      for (int i = 0; i <= per_octave * octaves; ++i) {
        const double r = std::exp(log_r0_ + i * step_);
        log_tail_.push_back(std::log(std::max(tail_mass(*k_.unit, 0.0, Vec<D>(Vec<D>::Zero()), r, q_).value, 1e-300)));
      }
    }
  }

  double operator()(double t, const Vec<D>& x, double r) const {
    if (k_.is_zero()) return 0.0;
    if (!log_tail_.empty()) {
      const double s = (std::log(r) - log_r0_) / step_;
      const int last = static_cast<int>(log_tail_.size()) - 1;
      if (s >= 0.0 && s < last) {
        const int i = static_cast<int>(s);
        const double u = s - i;
        return k_.intensity(t, x) * std::exp((1.0 - u) * log_tail_[i] + u * log_tail_[i + 1]);
      }
    }
    return tail_mass(k_, t, x, r, q_).value;
  }

private:
  LevyKernel<D> k_;
  QuadratureSpec q_;
  double log_r0_ = 0.0, step_ = 1.0;
  std::vector<double> log_tail_;
};

struct IntegrabilityEntry {
  double radius = 0.0;
  /// int_0^T int 1_{B_R}(|a| + |b| + g) dmu_s ds
  double local_terms = 0.0;
  /// int_0^T int [nu(B^c_{ell v (|x|-R)}) + 1_{B_R} nu(B^c_ell)] dmu_s ds
  double tail_terms = 0.0;
  /// Same integrals on every other time node.
  double local_terms_coarse = 0.0;
  double tail_terms_coarse = 0.0;
  bool finite = true;
  bool stable = true;
  bool diverged() const { return !finite || !stable; }
};

struct IntegrabilityOptions {
  QuadratureSpec quad;
  /// Particle snapshots are thinned to at most this many (evenly strided, reweighted).
  std::size_t max_particles = 2000;
  /// Relative change between time resolutions tolerated as "stable".
  double stability_rtol = 0.1;
};

template <int D>
std::vector<IntegrabilityEntry> integrability_report(const MeasureCurve<D>& curve, const CoefficientField<D>& c,
                                                     const LevyKernel<D>& k, const std::vector<double>& radii, double T,
                                                     const IntegrabilityOptions& opt = {}) {
  curve.validate(1e-6);
  require(T >= curve.start() && T <= curve.end() + 1e-12, "integrability horizon must lie within the curve window");
  std::vector<std::size_t> steps;
  for (std::size_t j = 0; j < curve.size() && curve.times[j] <= T + 1e-12; ++j) steps.push_back(j);

  // (x, weight) sample of each snapshot.
  auto sample = [&](std::size_t j) {
    std::vector<std::pair<Vec<D>, double>> pts;
    if (const auto* pc = std::get_if<ParticleCloud<D>>(&curve.snapshots[j])) {
      const std::size_t stride = std::max<std::size_t>(1, (pc->size() + opt.max_particles - 1) / opt.max_particles);
      double w = 0.0;
      for (std::size_t i = 0; i < pc->size(); i += stride) {
        pts.emplace_back(pc->positions[i], pc->weights[i]);
        w += pc->weights[i];
      }
      for (auto& p : pts) p.second /= w;
    } else if constexpr (D == 1) {
      const auto& g = std::get<GridDensity>(curve.snapshots[j]);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (g.values[i] > 0.0) pts.emplace_back(Vec<1>(g.node(i)), g.values[i] * g.h);
    }
    return pts;
  };

  TailMassEvaluator<D> tails(k, opt.quad);
  std::vector<IntegrabilityEntry> out;
  for (double R : radii) {
    IntegrabilityEntry e;
    e.radius = R;
    std::vector<double> loc(steps.size()), tl(steps.size());
    try {
      for (std::size_t n = 0; n < steps.size(); ++n) {
        const std::size_t j = steps[n];
        const double t = curve.times[j];
        const auto pts = sample(j);
        std::vector<double> lv(pts.size()), tv(pts.size());
        parallel_for(pts.size(), [&](std::size_t i) {
          const Vec<D>& x = pts[i].first;
          const double r = x.norm();
          double local = 0.0;
          if (r < R) {
            local = matrix_norm<D>(c.diffusion(t, x)) + c.drift(t, x).norm();
            if (!k.is_zero()) local += small_jump_moment(k, t, x, opt.quad).value;
          }
          double tail = 0.0;
          if (!k.is_zero()) {
            tail = tails(t, x, std::max(k.ell, r - R));
            if (r < R) tail += tails(t, x, k.ell);
          }
          lv[i] = pts[i].second * local;
          tv[i] = pts[i].second * tail;
        });
        loc[n] = 0.0;
        tl[n] = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          loc[n] += lv[i];
          tl[n] += tv[i];
        }
      }
    } catch (const NonIntegrable&) {
      e.finite = false;
    }
    auto trap = [&](const std::vector<double>& v, std::size_t stride) {
      double s = 0.0;
      for (std::size_t n = stride; n < steps.size(); n += stride)
        s += 0.5 * (curve.times[steps[n]] - curve.times[steps[n - stride]]) * (v[n] + v[n - stride]);
      return s;
    };
    if (e.finite) {
      e.local_terms = trap(loc, 1);
      e.tail_terms = trap(tl, 1);
      const bool can_coarsen = steps.size() >= 3 && (steps.size() - 1) % 2 == 0;
      e.local_terms_coarse = can_coarsen ? trap(loc, 2) : e.local_terms;
      e.tail_terms_coarse = can_coarsen ? trap(tl, 2) : e.tail_terms;
      e.finite = std::isfinite(e.local_terms) && std::isfinite(e.tail_terms);
      auto close = [&](double a, double b) { return std::abs(a - b) <= opt.stability_rtol * std::abs(a) + 1e-12; };
      e.stable = close(e.local_terms, e.local_terms_coarse) && close(e.tail_terms, e.tail_terms_coarse);
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace nlfp
