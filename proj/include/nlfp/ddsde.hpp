#pragma once

#include "nlfp/fpe_residual.hpp"
#include "nlfp/fpme.hpp"
#include "nlfp/sde_sim.hpp"

namespace nlfp {

struct DensityEstimator {
  enum class Method { kde, histogram };
  enum class Bandwidth { silverman, fixed };
  Method method = Method::kde;
  Bandwidth bandwidth = Bandwidth::silverman;
  double fixed_bandwidth = 0.1;
  /// Evaluation grid x_i = x0 + i h, i < n.
  double x0 = -64.0;
  double h = 1.0 / 32.0;
  int n = 4096;

  void validate() const {
    require(h > 0.0 && n >= 2, "density grid needs a positive spacing and two nodes");
    require(bandwidth == Bandwidth::silverman || fixed_bandwidth > 0.0, "fixed bandwidth must be positive");
  }
  static DensityEstimator on(const PeriodicGrid& g) {
    DensityEstimator e;
    e.x0 = g.x0;
    e.h = g.h();
    e.n = g.n;
    return e;
  }
};

struct DensityEstimate {
  /// Normalized to unit mass on the grid; evaluate() interpolates linearly, 0 outside.
  GridDensity density;
  double bandwidth = 0.0;
  /// Fraction of the particles' (smoothed) mass that falls on the grid.
  double captured = 1.0;
};

/// Silverman's rule 0.9 min(sd, IQR/1.34) N^{-1/5}.
inline double silverman_bandwidth(std::vector<double> xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0, m2 = 0.0;
  for (double v : xs) m += v;
  m /= n;
  for (double v : xs) m2 += (v - m) * (v - m);
  const double sd = std::sqrt(m2 / std::max(1.0, n - 1.0));
  auto q = [&](double p) {
    const std::size_t k = static_cast<std::size_t>(p * (xs.size() - 1));
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k), xs.end());
    return xs[k];
  };
  const double iqr = q(0.75) - q(0.25);
  double s = std::min(sd, iqr / 1.34);
  if (!(s > 0.0)) s = std::max(sd, iqr / 1.34);
  return 0.9 * s * std::pow(n, -0.2);
}

inline DensityEstimate estimate_density(const std::vector<double>& xs, const DensityEstimator& est) {
  est.validate();
  require(xs.size() >= 1000, "density estimation needs at least 1000 particles");
  const double n_p = static_cast<double>(xs.size());
  const double lo = xs.front();
  bool all_same = true;
  for (double v : xs) {
    require(std::isfinite(v), "particle position is not finite");
    all_same = all_same && v == lo;
  }
  DensityEstimate out;
  out.density.x0 = est.x0;
  out.density.h = est.h;
  out.density.values.assign(est.n, 0.0);
  auto& val = out.density.values;
  if (est.method == DensityEstimator::Method::histogram) {
    for (double v : xs) {
      const double s = std::round((v - est.x0) / est.h);
      if (s >= 0.0 && s < est.n) val[static_cast<std::size_t>(s)] += 1.0;
    }
  } else {
    if (all_same) throw DegenerateEnsemble("all particles coincide; no kernel density estimate");
    out.bandwidth = est.bandwidth == DensityEstimator::Bandwidth::fixed ? est.fixed_bandwidth : silverman_bandwidth(xs);
    // Linear binning, then Gaussian smoothing by FFT on a zero-padded grid.
    const int pad = static_cast<int>(std::ceil(8.0 * out.bandwidth / est.h)) + 1;
    const int len = est.n + 2 * pad;
    std::vector<double> bins(len, 0.0);
    for (double v : xs) {
      const double s = (v - est.x0) / est.h + pad;
      if (!(s >= 0.0 && s < len - 1)) continue;
      const int i = static_cast<int>(s);
      const double w = s - i;
      bins[i] += 1.0 - w;
      bins[i + 1] += w;
    }
    RealFft fft(len);
    std::vector<double> mult(fft.modes());
    for (int k = 0; k < fft.modes(); ++k) {
      const double xi = 2.0 * kPi * k / (len * est.h);
      mult[k] = std::exp(-0.5 * out.bandwidth * out.bandwidth * xi * xi);
    }
    const auto smooth = fft.apply_multiplier(bins, mult);
    for (int i = 0; i < est.n; ++i) val[i] = std::max(0.0, smooth[i + pad]);
  }
  double mass = 0.0;
  for (double v : val) mass += v;
  out.captured = mass / n_p;
  require(mass > 0.0, "no particle mass on the density grid");
  for (double& v : val) v /= mass * est.h;
  return out;
}

struct DdsdeOptions {
  double dt = 0.005;
  /// Density re-estimated every `refresh` steps.
  int refresh = 1;
  double density_floor = 1e-8;
  DensityEstimator estimator;
  std::uint64_t seed = 0;
  StepOptions step;
};

/// sigma(y) = (rho(y) + floor)^{(m-1)/alpha}.
inline std::function<double(double, const Vec<1>&)> density_sigma(const GridDensity& rho, double m, double alpha, double floor) {
  const double e = (m - 1.0) / alpha;
  auto r = std::make_shared<const GridDensity>(rho);
  return [r, e, floor](double, const Vec<1>& x) { return std::pow(r->evaluate(x(0)) + floor, e); };
}

/// One step Y += sigma(Y-) dL with sigma from the given density estimate.
inline void ddsde_step(Ensemble<1>& e, const GridDensity& rho, const FpmeParams& p, double dt, double floor, const StepOptions& opt = {}) {
  p.validate();
  require(floor >= 0.0, "density floor must be non-negative");
  euler_step(e, CoefficientField<1>::zero(), JumpSpec<1>::stable(p.alpha, density_sigma(rho, p.m, p.alpha, floor)), dt, opt);
}

inline std::vector<double> positions_1d(const Ensemble<1>& e) {
  std::vector<double> xs(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) xs[i] = e.positions[i](0);
  return xs;
}

/// Inverse-CDF sampler of a density tabulated on `g` (piecewise linear between nodes).
inline InitSampler<1> inverse_cdf_sampler(const std::function<double(double)>& density, const PeriodicGrid& g, int refine = 16) {
  const int n = g.n * refine;
  const double h = g.width / n;
  auto xs = std::make_shared<std::vector<double>>(n + 1);
  auto cdf = std::make_shared<std::vector<double>>(n + 1, 0.0);
  double prev = density(g.x0);
  (*xs)[0] = g.x0;
  for (int i = 1; i <= n; ++i) {
    const double x = g.x0 + i * h, v = density(x);
    require(std::isfinite(v) && v >= 0.0, "initial density must be finite and non-negative");
    (*xs)[i] = x;
    (*cdf)[i] = (*cdf)[i - 1] + 0.5 * h * (prev + v);
    prev = v;
  }
  const double total = cdf->back();
  require(total > 0.0, "initial density has zero mass");
  for (double& c : *cdf) c /= total;
  return [xs, cdf](RngStream& rng) {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf->begin(), cdf->end(), u);
    const std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - cdf->begin()), 1, cdf->size() - 1);
    const double c0 = (*cdf)[j - 1], c1 = (*cdf)[j];
    const double w = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
    return Vec<1>((*xs)[j - 1] + w * ((*xs)[j] - (*xs)[j - 1]));
  };
}

struct DdsdeResult {
  std::vector<double> times;
  std::vector<DensityEstimate> densities;
  /// Particle clouds at every step (for residuals).
  MeasureCurve<1> curve;
  Ensemble<1> final;
};

/// Runs the particle system from `init`, recording densities at `snapshot_times`.
inline DdsdeResult run_ddsde(const InitSampler<1>& init, const FpmeParams& p, std::size_t n, const std::vector<double>& snapshot_times,
                             const DdsdeOptions& opt, bool keep_curve = false) {
  p.validate();
  require(opt.refresh >= 1, "density refresh period must be >= 1");
  std::vector<char> on_grid;
  const auto steps = detail::fill_grid(snapshot_times, opt.dt, &on_grid);
  DdsdeResult r;
  Ensemble<1> e = make_ensemble<1>(n, init, opt.seed, steps.front());
  DensityEstimate rho = estimate_density(positions_1d(e), opt.estimator);
  auto snap = [&](double t) {
    if (keep_curve) r.curve.push_back(t, e.cloud());
  };
  snap(steps.front());
  r.times.push_back(steps.front());
  r.densities.push_back(rho);
  for (std::size_t s = 1; s < steps.size(); ++s) {
    if (s > 1 && (s - 1) % static_cast<std::size_t>(opt.refresh) == 0) rho = estimate_density(positions_1d(e), opt.estimator);
    ddsde_step(e, rho.density, p, steps[s] - steps[s - 1], opt.density_floor, opt.step);
    e.time = steps[s];
    snap(steps[s]);
    if (on_grid[s]) {
      r.times.push_back(steps[s]);
      r.densities.push_back(estimate_density(positions_1d(e), opt.estimator));
    }
  }
  r.final = std::move(e);
  return r;
}

struct RepresentationOptions {
  PeriodicGrid grid = PeriodicGrid::centered(128.0, 4096);
  double fpme_dt = 2.5e-4;
  /// Solver settings other than dt (which is fpme_dt).
  FpmeOptions fpme;
  ResidualOptions residual;
  std::vector<double> snapshot_times{0.0, 0.1, 0.25, 0.5};
  DdsdeOptions particles;
  /// Exponent used by the particle system only (negative controls); NaN means m.
  double particle_m = std::numeric_limits<double>::quiet_NaN();
  bool residuals = true;
  std::vector<double> bank_radii{1.0, 2.0, 4.0, 8.0};
};

struct ComparisonReport {
  std::vector<double> times;
  std::vector<double> l1_distances;
  std::vector<double> bandwidths;
  std::vector<double> captured;
  /// mean(sign Y) and its standard error per snapshot.
  std::vector<double> sign_mean;
  std::vector<double> sign_se;
  /// Residuals against kappa_t = u^{m-1}: of the solver curve and of the particle curve.
  std::vector<std::string> functions;
  std::vector<double> c2_norms;
  std::vector<std::vector<double>> fpme_residuals;
  std::vector<std::vector<double>> particle_residuals;
  double fpme_clipped_mass = 0.0;
  double fpme_boundary_mass = 0.0;
  std::size_t fpme_rejections = 0;
  std::size_t particles = 0;
  std::size_t frozen = 0;
  /// Per snapshot: the particle density estimate and the solver field.
  std::vector<DensityEstimate> estimates;
  std::vector<FpmeField> fields;

  double fpme_residual_scaled() const {
    double m = 0.0;
    for (std::size_t i = 0; i < fpme_residuals.size(); ++i)
      for (double v : fpme_residuals[i]) m = std::max(m, std::abs(v) / c2_norms[i]);
    return m;
  }
};

/// L^1 distance between an estimate (scaled by its captured mass) and u on the solver grid.
inline double l1_to_field(const DensityEstimate& d, const FpmeField& u) {
  double s = 0.0;
  for (int i = 0; i < u.grid.n; ++i) s += std::abs(d.captured * d.density.evaluate(u.grid.node(i)) - u.u[i]);
  return s * u.grid.h();
}

/// Solves the FPME and runs the particle system from the same initial law;
/// compares KDE(particles, t) with u(t, .).
inline ComparisonReport representation_experiment(const std::function<double(double)>& init, const FpmeParams& p, std::size_t n,
                                                  const RepresentationOptions& opt) {
  p.validate();
  require(opt.snapshot_times.size() >= 2 && opt.snapshot_times.front() == 0.0, "snapshot times must start at 0");
  // Solver on a time grid that contains every particle step and snapshot.
  std::vector<double> solver_times = detail::fill_grid(opt.snapshot_times, opt.particles.dt);
  FpmeOptions fo = opt.fpme;
  fo.dt = opt.fpme_dt;
  const FpmeRun run = solve_fpme(sample_initial(init, opt.grid), p, opt.grid, solver_times, fo);
  const FpmeCurve fc = as_measure_curve(run);

  FpmeParams pp = p;
  if (std::isfinite(opt.particle_m)) pp.m = opt.particle_m;
  DdsdeOptions po = opt.particles;
  const DdsdeResult dr = run_ddsde(inverse_cdf_sampler(init, opt.grid), pp, n, opt.snapshot_times, po, opt.residuals);

  ComparisonReport rep;
  rep.particles = n;
  rep.frozen = dr.final.frozen_count();
  rep.fpme_clipped_mass = run.clipped_mass;
  rep.fpme_boundary_mass = run.boundary_mass;
  rep.fpme_rejections = run.rejections;
  for (std::size_t j = 0; j < dr.times.size(); ++j) {
    const double t = dr.times[j];
    const int idx = fc.curve.index_of(t, 1e-9);
    require(idx >= 0, "snapshot time missing from the solver grid");
    rep.times.push_back(t);
    rep.l1_distances.push_back(l1_to_field(dr.densities[j], run.snapshots[idx]));
    rep.bandwidths.push_back(dr.densities[j].bandwidth);
    rep.captured.push_back(dr.densities[j].captured);
    rep.estimates.push_back(dr.densities[j]);
    rep.fields.push_back(run.snapshots[idx]);
  }
  if (opt.residuals) {
    for (std::size_t j = 0; j < dr.curve.size(); ++j) {
      if (std::find(dr.times.begin(), dr.times.end(), dr.curve.times[j]) == dr.times.end()) continue;
      const auto& pc = std::get<ParticleCloud<1>>(dr.curve.snapshots[j]);
      double s = 0.0;
      for (const auto& x : pc.positions) s += x(0) > 0.0 ? 1.0 : (x(0) < 0.0 ? -1.0 : 0.0);
      const double dn = static_cast<double>(pc.size());
      rep.sign_mean.push_back(s / dn);
      rep.sign_se.push_back(1.0 / std::sqrt(dn));
    }
    const TestBank<1> bank = TestBank<1>::standard(Vec<1>(0.0), opt.bank_radii);
    std::vector<double> at(opt.snapshot_times.begin() + 1, opt.snapshot_times.end());
    const auto k = fc.kernel();
    const auto fr = residual(fc.curve, CoefficientField<1>::zero(), k, bank, at, opt.residual);
    const auto pr = residual(dr.curve, CoefficientField<1>::zero(), k, bank, at, opt.residual);
    rep.functions = fr.functions;
    rep.c2_norms = fr.c2_norms;
    rep.fpme_residuals = fr.residual;
    rep.particle_residuals = pr.residual;
  }
  return rep;
}

}  // namespace nlfp
