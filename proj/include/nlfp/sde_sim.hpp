#pragma once

#include "nlfp/measure.hpp"
#include "nlfp/operators.hpp"
#include "nlfp/rng.hpp"
#include "nlfp/stable_law.hpp"

#include <random>

namespace nlfp {

struct StableParams {
  double alpha = 1.5;
  int dim = 1;

  void validate() const {
    require(alpha > 0.0 && alpha < 2.0, "stable index alpha must lie in (0, 2), got " + std::to_string(alpha));
    require(dim >= 1 && dim <= 3, "stable dimension must be 1, 2 or 3");
  }
};

/// Standard symmetric stable variate, E exp(i u S) = exp(-|u|^alpha), by the
/// Chambers–Mallows–Stuck transform.
inline double standard_stable(double alpha, RngStream& rng) {
  const double u = kPi * (rng.uniform() - 0.5);
  const double w = -std::log(rng.uniform());
  if (alpha == 1.0) return std::tan(u);
  return std::sin(alpha * u) / std::pow(std::cos(u), 1.0 / alpha) * std::pow(std::cos((1.0 - alpha) * u) / w, (1.0 - alpha) / alpha);
}

/// Positive stable variate with E exp(-lambda A) = exp(-lambda^a), a in (0, 1) (Kanter).
inline double positive_stable(double a, RngStream& rng) {
  const double u = kPi * rng.uniform();
  const double w = -std::log(rng.uniform());
  return std::sin(a * u) / std::pow(std::sin(u), 1.0 / a) * std::pow(std::sin((1.0 - a) * u) / w, (1.0 - a) / a);
}

/// Increment over dt of the isotropic stable process with Levy measure
/// dz/|z|^{D+alpha}, i.e. exponent -|xi|^alpha / C_{D,alpha}. For D > 1 the
/// sub-Gaussian form sqrt(A) G with A positive (alpha/2)-stable and G ~ N(0, 2I).
template <int D>
Vec<D> sample_stable(const StableParams& p, double dt, RngStream& rng) {
  require(dt > 0.0, "stable increment needs dt > 0");
  const double scale = std::pow(dt / stable_generator_constant(D, p.alpha), 1.0 / p.alpha);
  Vec<D> out;
  if constexpr (D == 1) {
    out(0) = scale * standard_stable(p.alpha, rng);
  } else {
    const double a = std::sqrt(positive_stable(0.5 * p.alpha, rng));
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0));
    for (int i = 0; i < D; ++i) out(i) = scale * a * nd(rng);
  }
  return out;
}

/// How particles jump.
template <int D>
struct JumpSpec {
  enum class Kind { none, multiplicative_stable, kernel };
  Kind kind = Kind::none;
  /// multiplicative_stable: X += sigma(t, X-) dL with L the stable process of index alpha.
  double alpha = 1.0;
  std::function<double(double, const Vec<D>&)> sigma;
  /// kernel: jumps below small_jump_radius become a Gaussian with their second
  /// moment; larger ones are thinned from the stable envelope of the kernel.
  LevyKernel<D> kernel;
  double small_jump_radius = 0.05;

  static JumpSpec none() { return {}; }
  static JumpSpec stable(double alpha, std::function<double(double, const Vec<D>&)> sigma = {}) {
    JumpSpec j;
    j.kind = Kind::multiplicative_stable;
    j.alpha = alpha;
    j.sigma = std::move(sigma);
    StableParams{alpha, D}.validate();
    return j;
  }
  static JumpSpec general(LevyKernel<D> k, double small_jump_radius = 0.05) {
    JumpSpec j;
    j.kind = k.is_zero() ? Kind::none : Kind::kernel;
    j.kernel = std::move(k);
    j.small_jump_radius = small_jump_radius;
    if (j.kind == Kind::kernel) {
      require(std::isfinite(j.kernel.envelope_kappa) && j.kernel.alpha > 0.0,
              "kernel jumps need a stable-like kernel with a finite kappa bound for thinning");
      require(small_jump_radius > 0.0 && small_jump_radius <= j.kernel.ell, "small-jump radius must lie in (0, ell]");
    }
    return j;
  }
};

template <int D>
struct Ensemble {
  std::vector<Vec<D>> positions;
  double time = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  /// Guarded particles stay where they crossed the guard (only when freezing is enabled).
  std::vector<char> frozen;

  std::size_t size() const { return positions.size(); }
  std::size_t frozen_count() const { return static_cast<std::size_t>(std::count(frozen.begin(), frozen.end(), 1)); }
  ParticleCloud<D> cloud() const { return ParticleCloud<D>::uniform(positions); }
};

struct StepOptions {
  double guard = 1e6;
  /// Freeze particles that cross the guard instead of throwing BlowUp.
  bool freeze_blowups = false;
};

namespace detail {
template <int D>
Mat<D> sqrt_psd(const Mat<D>& m) {
  if constexpr (D == 1) {
    return Mat<D>(std::sqrt(std::max(0.0, m(0, 0))));
  } else {
    Eigen::SelfAdjointEigenSolver<Mat<D>> es(m);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  }
}

template <int D>
Vec<D> gaussian(RngStream& rng) {
  std::normal_distribution<double> nd;
  Vec<D> g;
  for (int i = 0; i < D; ++i) g(i) = nd(rng);
  return g;
}

template <int D>
Vec<D> uniform_direction(RngStream& rng) {
  if constexpr (D == 1) {
    return Vec<1>(rng.uniform() < 0.5 ? -1.0 : 1.0);
  } else {
    const Vec<D> g = gaussian<D>(rng);
    return g / g.norm();
  }
}

/// Displacement of one particle over [t, t + dt) given its pre-step position.
template <int D>
Vec<D> increment(const CoefficientField<D>& c, const JumpSpec<D>& j, double t, const Vec<D>& x, double dt, std::uint64_t seed,
                 std::uint64_t id, std::uint64_t step) {
  Vec<D> dx = Vec<D>::Zero();
  if (c.has_drift()) dx += c.drift(t, x) * dt;
  if (c.has_diffusion()) {
    RngStream rng(seed, id, StreamPurpose::diffusion, step);
    dx += sqrt_psd<D>(Mat<D>(2.0 * dt * c.diffusion(t, x))) * gaussian<D>(rng);
  }
  if (j.kind == JumpSpec<D>::Kind::multiplicative_stable) {
    const double s = j.sigma ? j.sigma(t, x) : 1.0;
    if (s != 0.0) {
      RngStream rng(seed, id, StreamPurpose::jumps, step);
      dx += s * sample_stable<D>(StableParams{j.alpha, D}, dt, rng);
    }
  } else if (j.kind == JumpSpec<D>::Kind::kernel) {
    const LevyKernel<D>& k = j.kernel;
    const double delta = j.small_jump_radius;
    RngStream rng(seed, id, StreamPurpose::jumps, step);
    const QuadratureSpec q;
    // Small jumps: Gaussian with covariance M(delta) dt.
    const Mat<D> m = inner_second_moment(k, t, x, delta, q);
    dx += sqrt_psd<D>(Mat<D>(m * dt)) * gaussian<D>(rng);
    // Compensator of the jumps in [delta, ell).
    if (delta < k.ell) {
      const auto [mean, err] = detail::annulus<Vec<D>>(k, t, x, delta, k.ell, octave_panels(delta, k.ell, 2), true, q,
                                                         [](const Vec<D>& z) { return z; });
      (void)err;
      dx -= mean * dt;
    }
    // Jumps above delta, thinned from kappa_bar dz/|z|^{D+alpha}.
    const double rate = k.envelope_kappa * sphere_area(D) * std::pow(delta, -k.alpha) / k.alpha;
    std::poisson_distribution<long> pois(rate * dt);
    const long n = pois(rng);
    for (long i = 0; i < n; ++i) {
      const double r = delta * std::pow(rng.uniform(), -1.0 / k.alpha);
      const Vec<D> z = r * uniform_direction<D>(rng);
      const double kappa = k.density(t, x, z) * std::pow(r, D + k.alpha);
      if (rng.uniform() * k.envelope_kappa < kappa) dx += z;
    }
  }
  return dx;
}
}  // namespace detail

/// One Euler step of all particles. Every draw comes from the counter-based
/// stream of (seed, particle, purpose, step), so the result does not depend on
/// the thread count.
template <int D>
void euler_step(Ensemble<D>& e, const CoefficientField<D>& c, const JumpSpec<D>& j, double dt, const StepOptions& opt = {}) {
  require(dt > 0.0, "time step must be positive");
  if (e.frozen.size() != e.size()) e.frozen.assign(e.size(), 0);
  const std::size_t n = e.size();
  std::vector<char> blown(n, 0);
  parallel_for(n, [&](std::size_t i) {
    if (e.frozen[i]) return;
    Vec<D> y = e.positions[i] + detail::increment<D>(c, j, e.time, e.positions[i], dt, e.seed, i, e.step);
    if (!y.allFinite() || y.norm() > opt.guard) {
      blown[i] = 1;
      if (opt.freeze_blowups) return;
    }
    e.positions[i] = y;
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!blown[i]) continue;
    if (!opt.freeze_blowups) {
      throw BlowUp("particle " + std::to_string(i) + " left the guard ball |x| <= " + detail::fmt(opt.guard) + " at t = " +
                       detail::fmt(e.time + dt),
                   i);
    }
    e.frozen[i] = 1;
  }
  e.time += dt;
  ++e.step;
}

/// Initial positions: particle i draws from its own init stream.
template <int D>
using InitSampler = std::function<Vec<D>(RngStream&)>;

template <int D>
Ensemble<D> make_ensemble(std::size_t n, const InitSampler<D>& init, std::uint64_t seed, double t0 = 0.0) {
  require(n > 0, "ensemble needs at least one particle");
  Ensemble<D> e;
  e.seed = seed;
  e.time = t0;
  e.positions.resize(n);
  e.frozen.assign(n, 0);
  parallel_for(n, [&](std::size_t i) {
    RngStream rng(seed, i, StreamPurpose::init);
    e.positions[i] = init(rng);
  });
  return e;
}

/// Particle positions at every step (or every `record_every` steps).
template <int D>
struct PathBundle {
  std::vector<double> times;
  std::vector<std::vector<Vec<D>>> positions;  // [time][particle]
  std::size_t frozen = 0;

  std::size_t particles() const { return positions.empty() ? 0 : positions.front().size(); }
  MeasureCurve<D> curve() const {
    MeasureCurve<D> c;
    for (std::size_t j = 0; j < times.size(); ++j) c.push_back(times[j], ParticleCloud<D>::uniform(positions[j]));
    return c;
  }
};

struct SimulationOptions {
  double dt = 0.01;
  std::uint64_t seed = 0;
  StepOptions step;
};

/// Empirical marginals at the grid times.
template <int D>
MeasureCurve<D> simulate_marginals(const InitSampler<D>& init, const CoefficientField<D>& c, const JumpSpec<D>& j,
                                   const std::vector<double>& time_grid, std::size_t n, const SimulationOptions& opt = {}) {
  std::vector<char> on_grid;
  const auto steps = detail::fill_grid(time_grid, opt.dt, &on_grid);
  Ensemble<D> e = make_ensemble<D>(n, init, opt.seed, steps.front());
  MeasureCurve<D> curve;
  curve.push_back(steps.front(), e.cloud());
  for (std::size_t s = 1; s < steps.size(); ++s) {
    euler_step(e, c, j, steps[s] - steps[s - 1], opt.step);
    e.time = steps[s];
    if (on_grid[s]) curve.push_back(steps[s], e.cloud());
  }
  return curve;
}

/// Paths on the step grid over [0, T].
template <int D>
PathBundle<D> simulate_paths(const InitSampler<D>& init, const CoefficientField<D>& c, const JumpSpec<D>& j, double T,
                             std::size_t n, const SimulationOptions& opt = {}) {
  require(T > 0.0, "horizon must be positive");
  const auto steps = detail::fill_grid({0.0, T}, opt.dt);
  Ensemble<D> e = make_ensemble<D>(n, init, opt.seed);
  PathBundle<D> p;
  p.times.push_back(0.0);
  p.positions.push_back(e.positions);
  for (std::size_t s = 1; s < steps.size(); ++s) {
    euler_step(e, c, j, steps[s] - steps[s - 1], opt.step);
    e.time = steps[s];
    p.times.push_back(steps[s]);
    p.positions.push_back(e.positions);
  }
  p.frozen = e.frozen_count();
  return p;
}

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

/// Bounded path functional xi(X) of the positions at one recorded time.
template <int D>
struct Conditioner {
  std::string name;
  double time = 0.0;
  std::function<double(const Vec<D>&)> g;
};

template <int D>
std::vector<Conditioner<D>> default_conditioners(double s) {
  return {{"one", s, [](const Vec<D>&) { return 1.0; }},
          {"tanh(x1)@s", s, [](const Vec<D>& x) { return std::tanh(x(0)); }},
          {"cos(x1)@s/2", 0.5 * s, [](const Vec<D>& x) { return std::cos(x(0)); }},
          {"1{|x|<1}@s", s, [](const Vec<D>& x) { return x.norm() < 1.0 ? 1.0 : 0.0; }}};
}

struct MartingaleAudit {
  std::string function;
  std::string conditioner;
  double s = 0.0, t = 0.0;
  double estimate = 0.0;
  double standard_error = 0.0;
  /// Same estimate with the time integral on every other recorded node.
  double coarse_estimate = 0.0;
  double z() const { return standard_error > 0.0 ? estimate / standard_error : (estimate == 0.0 ? 0.0 : kInf); }
  /// |trapezoid(dt) - trapezoid(2 dt)| / 3.
  double discretization() const { return std::abs(estimate - coarse_estimate) / 3.0; }
  bool passed(double k = 3.0) const { return std::abs(estimate) <= k * standard_error; }
};

/// E[(M^f_t - M^f_s) xi] with M^f_t = f(X_t) - int_0^t L f(X_r) dr, for the
/// generator L of (c, k), from recorded paths.
template <int D>
std::vector<MartingaleAudit> martingale_audit(const PathBundle<D>& paths, const CoefficientField<D>& c, const LevyKernel<D>& k,
                                              const TestFunction<D>& f, double s, double t,
                                              const std::vector<Conditioner<D>>& xis, const QuadratureSpec& q = {}) {
  auto index = [&](double time) {
    for (std::size_t j = 0; j < paths.times.size(); ++j)
      if (std::abs(paths.times[j] - time) <= 1e-9 * std::max(1.0, time)) return j;
    throw ValidationError("audit time " + std::to_string(time) + " is not a recorded path time");
  };
  const std::size_t js = index(s), jt = index(t);
  require(jt > js, "martingale audit needs s < t");
  const std::size_t n = paths.particles();
  BoundGenerator<D> gen(c, k, f, q);
  // Per-particle increments, fine and coarse time integrals.
  std::vector<double> inc(n), inc_coarse(n);
  const bool can_coarsen = (jt - js) % 2 == 0;
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> lf(jt - js + 1);
    for (std::size_t j = js; j <= jt; ++j) lf[j - js] = gen(paths.times[j], paths.positions[j][i]);
    double fine = 0.0, coarse = 0.0;
    for (std::size_t j = 1; j < lf.size(); ++j) fine += 0.5 * (paths.times[js + j] - paths.times[js + j - 1]) * (lf[j] + lf[j - 1]);
    if (can_coarsen) {
      for (std::size_t j = 2; j < lf.size(); j += 2)
        coarse += 0.5 * (paths.times[js + j] - paths.times[js + j - 2]) * (lf[j] + lf[j - 2]);
    } else {
      coarse = fine;
    }
    const double df = f.value(paths.positions[jt][i]) - f.value(paths.positions[js][i]);
    inc[i] = df - fine;
    inc_coarse[i] = df - coarse;
  });
  std::vector<MartingaleAudit> out;
  for (const auto& xi : xis) {
    require(xi.time <= s + 1e-12, "conditioner '" + xi.name + "' looks past s");
    const std::size_t jx = index(xi.time);
    double m = 0.0, m2 = 0.0, mc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = xi.g(paths.positions[jx][i]);
      const double v = inc[i] * w;
      m += v;
      m2 += v * v;
      mc += inc_coarse[i] * w;
    }
    const double dn = static_cast<double>(n);
    MartingaleAudit a;
    a.function = f.name;
    a.conditioner = xi.name;
    a.s = s;
    a.t = t;
    a.estimate = m / dn;
    a.coarse_estimate = mc / dn;
    a.standard_error = n > 1 ? std::sqrt(std::max(0.0, m2 / dn - a.estimate * a.estimate) / (dn - 1.0)) : 0.0;
    out.push_back(a);
  }
  return out;
}

struct LyapunovMomentReport {
  /// Monte-Carlo estimate of E sup_{t<=T} V(X_t)^{1/2}.
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t particles = 0;
  std::size_t frozen = 0;
  /// Fraction of particles that crossed the guard.
  double blowup_fraction() const { return particles ? static_cast<double>(frozen) / particles : 0.0; }
};

/// V = psi(log(1 + |x|^2)); psi defaults to the identity.
template <int D>
LyapunovMomentReport lyapunov_moment_audit(const PathBundle<D>& paths, std::function<double(double)> psi = {}) {
  if (!psi) psi = [](double r) { return r; };
  const std::size_t n = paths.particles();
  require(n > 0, "no paths to audit");
  double m = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sup = 0.0;
    for (const auto& snap : paths.positions) sup = std::max(sup, std::sqrt(psi(std::log1p(snap[i].squaredNorm()))));
    m += sup;
    m2 += sup * sup;
  }
  LyapunovMomentReport r;
  r.particles = n;
  r.frozen = paths.frozen;
  const double dn = static_cast<double>(n);
  r.estimate = m / dn;
  r.standard_error = n > 1 ? std::sqrt(std::max(0.0, m2 / dn - r.estimate * r.estimate) / (dn - 1.0)) : 0.0;
  return r;
}

/// Kolmogorov–Smirnov distance of a sample to a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  require(!xs.empty(), "KS statistic needs samples");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    d = std::max({d, F - i / n, (i + 1) / n - F});
  }
  return d;
}

/// Two-sample Kolmogorov–Smirnov distance.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "KS statistic needs samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

/// Piecewise-linear table of a CDF on [-half_width, half_width]; exact outside.
inline std::function<double(double)> tabulate_cdf(std::function<double(double)> cdf, double half_width = 30.0, int n = 6001) {
  require(n >= 2 && half_width > 0.0, "CDF table needs a positive width and two nodes");
  auto vals = std::make_shared<std::vector<double>>(n);
  const double h = 2.0 * half_width / (n - 1);
  for (int i = 0; i < n; ++i) (*vals)[i] = cdf(-half_width + i * h);
  return [vals, h, half_width, n, cdf = std::move(cdf)](double x) {
    const double u = (x + half_width) / h;
    if (!(u >= 0.0 && u <= n - 1.0)) return cdf(x);
    const int i = std::min(static_cast<int>(u), n - 2);
    const double w = u - i;
    return (1.0 - w) * (*vals)[i] + w * (*vals)[i + 1];
  };
}

/// CDF at time t of the stable flight with Levy measure dz/|z|^{1+alpha} from 0.
inline double stable_flight_cdf(double alpha, double t, double x) {
  return symmetric_stable_cdf(alpha, x * std::pow(stable_generator_constant(1, alpha) / t, 1.0 / alpha));
}

}  // namespace nlfp
