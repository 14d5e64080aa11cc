#pragma once

#include "nlfp/fft.hpp"
#include "nlfp/levy.hpp"
#include "nlfp/measure.hpp"
#include "nlfp/operators.hpp"

#include <memory>

namespace nlfp {

/// d_t u = Delta^{alpha/2}(|u|^{m-1} u) with Delta^{alpha/2} f = P.V. int (f(x+z) - f(x)) dz/|z|^{1+alpha},
/// i.e. symbol -|xi|^alpha / C_{1,alpha}.
struct FpmeParams {
  double m = 2.0;
  double alpha = 1.0;

  void validate() const {
    require(std::isfinite(m) && m > 1.0, "porous media exponent m>1 required, got m = " + detail::fmt(m));
    require(alpha > 0.0 && alpha < 2.0, "stable index alpha must lie in (0, 2), got " + detail::fmt(alpha));
  }
  /// Multiplier of -|xi|^alpha.
  double symbol_scale() const { return 1.0 / stable_generator_constant(1, alpha); }
};

struct FpmeOptions {
  double dt = 1e-3;
  /// Relative mass lost to clipping in one step above which the step is retried at dt/2.
  double step_mass_tol = 1e-6;
  int max_halvings = 10;
  /// Total clipped mass (relative) above which the run is flagged.
  double clip_flag = 1e-4;
  /// Mass in the outer `boundary_band` fraction of the box above which the run is flagged.
  double boundary_threshold = 1e-6;
  double boundary_band = 1.0 / 16.0;
  /// Skip the box >= 8x support check (periodic data such as constants).
  bool allow_wide_support = false;
};

/// u on a periodic grid at one time.
struct FpmeField {
  PeriodicGrid grid;
  double t = 0.0;
  std::vector<double> u;

  double mass() const {
    double s = 0.0;
    for (double v : u) s += v;
    return s * grid.h();
  }
  double sup() const { return u.empty() ? 0.0 : *std::max_element(u.begin(), u.end()); }
  double min() const { return u.empty() ? 0.0 : *std::min_element(u.begin(), u.end()); }
  /// Linear interpolation, periodic.
  double evaluate(double x) const {
    double s = (grid.wrap(x) - grid.x0) / grid.h();
    const int i = std::min(static_cast<int>(s), grid.n - 1);
    const double w = s - i;
    return (1.0 - w) * u[i] + w * u[(i + 1) % grid.n];
  }
  GridDensity density() const { return GridDensity{grid.x0, grid.h(), u, true}; }
};

struct FpmeRun {
  FpmeParams params;
  FpmeOptions options;
  std::vector<FpmeField> snapshots;
  double init_sup = 0.0;
  /// Riemann mass of the sampled initial function before normalization.
  double init_raw_mass = 0.0;
  std::size_t steps = 0;
  std::size_t rejections = 0;
  /// Relative mass removed by clipping, summed over steps (and redistributed).
  double clipped_mass = 0.0;
  /// Largest mass seen in the boundary band.
  double boundary_mass = 0.0;
  /// Largest increase of max u over one step.
  double sup_overshoot = 0.0;

  bool clip_flagged() const { return clipped_mass > options.clip_flag; }
  bool boundary_flagged() const { return boundary_mass > options.boundary_threshold; }
  const FpmeField& final() const { return snapshots.back(); }
  std::vector<double> times() const {
    std::vector<double> t;
    for (const auto& s : snapshots) t.push_back(s.t);
    return t;
  }
};

namespace detail {

class FpmeStepper {
public:
  FpmeStepper(const PeriodicGrid& g, const FpmeParams& p) : g_(g), p_(p), fft_(g.n), symbol_(fractional_symbol(g, p.alpha, p.symbol_scale())) {}

  /// One stabilized step; returns the relative mass removed by clipping
  /// (before redistribution). `u` is replaced only if the step is accepted.
  double step(std::vector<double>& u, double dt, double tol, bool& accepted) {
    const double s = p_.m * std::pow(*std::max_element(u.begin(), u.end()), p_.m - 1.0);
    std::vector<double> r(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) r[i] = std::pow(u[i], p_.m) - s * u[i];
    auto uh = fft_.forward(u);
    const auto rh = fft_.forward(r);
    for (int k = 0; k < fft_.modes(); ++k) uh[k] = (uh[k] + dt * symbol_[k] * rh[k]) / (1.0 - dt * s * symbol_[k]);
    std::vector<double> next = fft_.inverse(uh);
    double before = 0.0, clipped = 0.0;
    for (double& v : next) {
      if (!std::isfinite(v)) {
        accepted = false;
        return kInf;
      }
      before += v;
      if (v < 0.0) {
        clipped -= v;
        v = 0.0;
      }
    }
    const double rel = clipped / before;
    accepted = rel <= tol;
    if (!accepted) return rel;
    const double scale = before / (before + clipped);
    for (double& v : next) v *= scale;
    u = std::move(next);
    return rel;
  }

private:
  PeriodicGrid g_;
  FpmeParams p_;
  RealFft fft_;
  std::vector<double> symbol_;
};

inline double band_mass(const FpmeField& f, double band) {
  const double half = 0.5 * f.grid.width, mid = f.grid.x0 + half, inner = half * (1.0 - 2.0 * band);
  double s = 0.0;
  for (int i = 0; i < f.grid.n; ++i)
    if (std::abs(f.grid.node(i) - mid) >= inner) s += f.u[i];
  return s * f.grid.h();
}

}  // namespace detail

/// Samples `init` on the grid and normalizes it to unit mass.
inline std::vector<double> sample_initial(const std::function<double(double)>& init, const PeriodicGrid& g, double* raw_mass = nullptr) {
  require(g.n >= 16 && g.width > 0.0, "FPME grid needs at least 16 nodes and a positive width");
  std::vector<double> u(g.n);
  double m = 0.0;
  for (int i = 0; i < g.n; ++i) {
    u[i] = init(g.node(i));
    require(std::isfinite(u[i]) && u[i] >= 0.0, "initial data must be finite and non-negative");
    m += u[i];
  }
  m *= g.h();
  require(m > 0.0, "initial data has zero mass");
  for (double& v : u) v /= m;
  if (raw_mass) *raw_mass = m;
  return u;
}

/// Semi-implicit spectral solve, snapshots at every time in `time_grid`.
inline FpmeRun solve_fpme(const std::vector<double>& init, const FpmeParams& p, const PeriodicGrid& g, const std::vector<double>& time_grid,
                          const FpmeOptions& opt = {}) {
  p.validate();
  require(static_cast<int>(init.size()) == g.n, "initial data length does not match the grid");
  require(opt.dt > 0.0 && opt.max_halvings >= 0, "FPME time step must be positive");
  FpmeRun run;
  run.params = p;
  run.options = opt;
  std::vector<double> u = init;
  double mass = 0.0;
  for (double v : u) {
    require(std::isfinite(v) && v >= 0.0, "initial data must be finite and non-negative");
    mass += v;
  }
  mass *= g.h();
  require(std::abs(mass - 1.0) <= 1e-8, "initial data must have unit mass, got " + detail::fmt(mass));
  if (!opt.allow_wide_support) {
    const double peak = *std::max_element(u.begin(), u.end());
    int lo = g.n, hi = -1;
    for (int i = 0; i < g.n; ++i)
      if (u[i] > 1e-12 * peak) {
        lo = std::min(lo, i);
        hi = std::max(hi, i);
      }
    const double support = (hi - lo + 1) * g.h();
    require(g.width >= 8.0 * support,
            "box width " + detail::fmt(g.width) + " must be at least 8x the initial support " + detail::fmt(support));
  }
  run.init_sup = *std::max_element(u.begin(), u.end());
  std::vector<char> on_grid;
  const auto steps = detail::fill_grid(time_grid, opt.dt, &on_grid);
  detail::FpmeStepper stepper(g, p);
  auto record = [&](double t) {
    FpmeField f{g, t, u};
    run.boundary_mass = std::max(run.boundary_mass, detail::band_mass(f, opt.boundary_band));
    run.snapshots.push_back(std::move(f));
  };
  record(steps.front());
  for (std::size_t k = 1; k < steps.size(); ++k) {
    // Advance over [steps[k-1], steps[k]], halving on rejection.
    struct Piece {
      double dt;
      int depth;
    };
    std::vector<Piece> todo{{steps[k] - steps[k - 1], 0}};
    while (!todo.empty()) {
      Piece pc = todo.back();
      todo.pop_back();
      const double before_sup = *std::max_element(u.begin(), u.end());
      bool ok = false;
      const double rel = stepper.step(u, pc.dt, opt.step_mass_tol, ok);
      if (!ok) {
        ++run.rejections;
        if (pc.depth >= opt.max_halvings)
          throw StepRejected("FPME step at t = " + detail::fmt(steps[k - 1]) + " lost relative mass " + detail::fmt(rel) +
                             " to clipping after " + std::to_string(opt.max_halvings) + " halvings");
        todo.push_back({0.5 * pc.dt, pc.depth + 1});
        todo.push_back({0.5 * pc.dt, pc.depth + 1});
        continue;
      }
      ++run.steps;
      run.clipped_mass += rel;
      run.sup_overshoot = std::max(run.sup_overshoot, *std::max_element(u.begin(), u.end()) - before_sup);
    }
    if (on_grid[k]) record(steps[k]);
  }
  return run;
}

/// Same solve with n and 1/dt multiplied by `factor`.
inline FpmeRun refine_reference(const std::function<double(double)>& init, const FpmeParams& p, const PeriodicGrid& g,
                                const std::vector<double>& time_grid, int factor, FpmeOptions opt = {}) {
  require(factor >= 1, "refinement factor must be >= 1");
  const PeriodicGrid fine{g.x0, g.width, g.n * factor};
  opt.dt /= factor;
  return solve_fpme(sample_initial(init, fine), p, fine, time_grid, opt);
}

/// L^1 distance int |a - b| dx on the nodes of `a` (b interpolated).
inline double l1_distance(const FpmeField& a, const FpmeField& b) {
  double s = 0.0;
  for (int i = 0; i < a.grid.n; ++i) s += std::abs(a.u[i] - b.evaluate(a.grid.node(i)));
  return s * a.grid.h();
}

/// The solution packaged for the residual and particle modules; u(t, x) is
/// linear in x between nodes and in t between snapshots.
struct FpmeCurve {
  MeasureCurve<1> curve;
  FpmeParams params;
  std::shared_ptr<const std::vector<FpmeField>> fields;
  double init_sup = 0.0;

  double u(double t, double x) const {
    const auto& f = *fields;
    if (t <= f.front().t) return f.front().evaluate(x);
    if (t >= f.back().t) return f.back().evaluate(x);
    const auto it = std::upper_bound(f.begin(), f.end(), t, [](double v, const FpmeField& s) { return v < s.t; });
    const FpmeField& b = *it;
    const FpmeField& a = *(it - 1);
    const double w = (t - a.t) / (b.t - a.t);
    return (1.0 - w) * a.evaluate(x) + w * b.evaluate(x);
  }
  double kappa(double t, double x) const { return std::pow(u(t, x), params.m - 1.0); }
  double sigma(double t, double x) const { return std::pow(u(t, x), (params.m - 1.0) / params.alpha); }
  /// kappa_t(x) dz/|z|^{1+alpha}.
  LevyKernel<1> kernel(double ell = 0.5) const {
    auto self = *this;
    return stable_like_separable<1>(
        params.alpha, [self](double t, const Vec<1>& x) { return self.kappa(t, x(0)); }, ell, std::pow(init_sup, params.m - 1.0));
  }
};

inline FpmeCurve as_measure_curve(const FpmeRun& run) {
  require(!run.snapshots.empty(), "FPME run has no snapshots");
  FpmeCurve c;
  c.params = run.params;
  c.init_sup = run.init_sup;
  c.fields = std::make_shared<const std::vector<FpmeField>>(run.snapshots);
  for (const auto& f : run.snapshots) {
    GridDensity d = f.density();
    const double m = d.mass();
    for (double& v : d.values) v /= m;
    c.curve.push_back(f.t, std::move(d));
  }
  return c;
}

}  // namespace nlfp
