#pragma once

#include "nlfp/config.hpp"
#include "nlfp/ddsde.hpp"

#include <filesystem>

namespace nlfp {

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_config = 2, exit_io = 3, exit_numerical = 4 };

struct RunResult {
  int exit_code = exit_ok;
  std::vector<std::string> files;
  /// One line for the terminal.
  std::string summary;
};

// ---------------------------------------------------------------------------
// Config -> objects
// ---------------------------------------------------------------------------

namespace detail {

inline bool expr_is(const std::string& s, const char* literal) {
  std::string t;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) t += c;
  return t == literal;
}

inline std::function<double(double)> density_expr(const std::string& text) {
  const Expr e = Expr::parse(text);
  return [e](double x) { return e(0.0, x); };
}

}  // namespace detail

inline LevyKernel<1> build_kernel(const KernelConfig& k) {
  if (k.family == "zero") return zero_kernel<1>(k.ell);
  if (k.family == "isotropic_stable") return isotropic_stable<1>(k.alpha, k.c, k.ell);
  if (k.family == "stable_like") {
    const Expr e = Expr::parse(k.kappa, 1, true);
    return stable_like<1>(
        k.alpha,
        [e](double t, const Vec<1>& x, const Vec<1>& z) {
          ExprVars v;
          v.t = t;
          v.x[0] = x(0);
          v.z[0] = z(0);
          return e(v);
        },
        k.ell, k.symmetric, k.kappa_bound);
  }
  if (k.family == "separable") {
    const Expr e = Expr::parse(k.intensity);
    return stable_like_separable<1>(k.alpha, [e](double t, const Vec<1>& x) { return e(t, x(0)); }, k.ell, k.kappa_bound);
  }
  throw ValidationError("unknown kernel family '" + k.family + "'");
}

inline CoefficientField<1> build_coefficients(const CoefficientConfig& c) {
  CoefficientField<1> f;
  if (!detail::expr_is(c.a, "0")) {
    const Expr a = Expr::parse(c.a);
    f.a = [a](double t, const Vec<1>& x) { return Mat<1>(a(t, x(0))); };
  }
  if (!detail::expr_is(c.b, "0")) {
    const Expr b = Expr::parse(c.b);
    f.b = [b](double t, const Vec<1>& x) { return Vec<1>(b(t, x(0))); };
  }
  return f;
}

inline FpmeOptions build_fpme_options(const FpmeConfig& f) {
  FpmeOptions o;
  o.dt = f.dt;
  o.step_mass_tol = f.step_mass_tol;
  o.max_halvings = f.max_halvings;
  o.clip_flag = f.clip_flag;
  o.boundary_threshold = f.boundary_threshold;
  o.boundary_band = f.boundary_band;
  o.allow_wide_support = f.allow_wide_support;
  return o;
}

inline ResidualOptions build_residual_options(const ExperimentConfig& c) {
  ResidualOptions o;
  o.quad = c.quadrature;
  o.tables = c.tables;
  o.image_terms = c.residual.image_terms;
  return o;
}

/// Wrapped stable flight started at 0, shown from time `offset` on: snapshot t carries the law at offset + t.
inline MeasureCurve<1> stable_flight_curve(const CurveSource& s) {
  require(s.steps >= 1 && s.T > 0.0 && s.offset > 0.0, "stable flight curve needs steps >= 1, T > 0 and offset > 0");
  const PeriodicGrid g = PeriodicGrid::centered(s.width, s.n);
  MeasureCurve<1> c;
  for (int j = 0; j <= s.steps; ++j) {
    const double t = s.T * j / s.steps;
    GridDensity d{g.x0, g.h(), stable_density_torus(s.alpha, s.offset + t, g), true};
    const double m = d.mass();
    for (double& v : d.values) v /= m;
    c.push_back(t, std::move(d));
  }
  return c;
}

inline MeasureCurve<1> load_curve_file(const std::string& path) {
  if (path.empty()) throw ValidationError("curve file path is empty");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curve file '" + path + "'");
  return read_curve_csv<1>(in);
}

inline FpmeRun run_fpme_solver(const FpmeConfig& f) {
  const FpmeParams p{f.m, f.alpha};
  p.validate();
  const PeriodicGrid g = PeriodicGrid::centered(f.width, f.n);
  return solve_fpme(sample_initial(detail::density_expr(f.init), g), p, g, f.times, build_fpme_options(f));
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

namespace detail {

inline std::filesystem::path out_dir(const ExperimentConfig& c) {
  std::filesystem::path d(c.out);
  std::error_code ec;
  std::filesystem::create_directories(d, ec);
  if (ec || !std::filesystem::is_directory(d)) throw IoError("cannot create output directory '" + c.out + "'");
  return d;
}

inline std::string write_text(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
  const auto p = dir / name;
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write '" + p.string() + "'");
  os << text;
  os.close();
  if (!os) throw IoError("write failed for '" + p.string() + "'");
  return p.string();
}

inline std::string write_json(const std::filesystem::path& dir, const std::string& name, const Json& j) {
  return write_text(dir, name, j.dump(2) + "\n");
}

inline Json with_config(const ExperimentConfig& c, const char* command) {
  Json j;
  j["command"] = command;
  j["config"] = resolved_config(c);
  return j;
}

inline Json nums(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline std::string fmt_short(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(4) << v;
  return os.str();
}

inline Json residual_json(const ResidualReport& r, double tolerance) {
  Json j;
  j["times"] = nums(r.times);
  Json fs = Json::array();
  for (std::size_t i = 0; i < r.functions.size(); ++i) {
    fs.push_back({{"function", r.functions[i]},
                  {"c2_norm", num(r.c2_norms[i])},
                  {"residual", nums(r.residual[i])},
                  {"error", nums(r.error[i])},
                  {"continuity_modulus", num(r.continuity_modulus[i])}});
  }
  j["functions"] = fs;
  j["max_abs"] = num(r.max_abs());
  j["max_scaled"] = num(r.max_scaled());
  j["tolerance"] = tolerance;
  j["passed"] = r.max_scaled() < tolerance;
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

/// Standing-assumption report; optional integrability report for a curve file.
inline RunResult run_check(const ExperimentConfig& c) {
  const auto k = build_kernel(c.kernel);
  const auto coef = build_coefficients(c.coefficients);
  const auto& ch = c.check;
  const auto probes = probe_line<1>(ch.times, -ch.x_max, ch.x_max, ch.count, ch.log_spacing);
  AssumptionOptions ao;
  ao.trend_ratio = ch.trend_ratio;
  const auto rep = assumption_report(k, coef, probes, c.quadrature, ao);

  Json j = detail::with_config(c, "check");
  j["condition_report"] = {{"total_sup", detail::num(rep.total_sup)},
                           {"per_term",
                            {{"diffusion_and_small_jumps", detail::num(rep.per_term.diffusion_and_small_jumps)},
                             {"drift", detail::num(rep.per_term.drift)},
                             {"log_tail", detail::num(rep.per_term.log_tail)},
                             {"total", detail::num(rep.per_term.total)}}},
                           {"argmax_probe", {{"t", rep.argmax_probe.t}, {"x", {rep.argmax_probe.x(0)}}}},
                           {"violated", rep.violated},
                           {"unbounded_trend", rep.unbounded_trend},
                           {"nested_sups", detail::nums(rep.nested_sups)},
                           {"caveat", rep.caveat}};
  bool diverged = false;
  if (!ch.curve.empty()) {
    const auto curve = load_curve_file(ch.curve);
    IntegrabilityOptions io;
    io.quad = c.quadrature;
    io.max_particles = ch.max_particles;
    io.stability_rtol = ch.stability_rtol;
    Json a = Json::array();
    for (const auto& e : integrability_report(curve, coef, k, ch.radii, curve.end(), io)) {
      diverged = diverged || e.diverged();
      a.push_back({{"radius", e.radius},
                   {"local_terms", detail::num(e.local_terms)},
                   {"tail_terms", detail::num(e.tail_terms)},
                   {"local_terms_coarse", detail::num(e.local_terms_coarse)},
                   {"tail_terms_coarse", detail::num(e.tail_terms_coarse)},
                   {"finite", e.finite},
                   {"stable", e.stable},
                   {"diverged", e.diverged()}});
    }
    j["integrability"] = a;
  }
  const bool bad = rep.violated || rep.unbounded_trend || diverged;
  j["status"] = bad ? "VIOLATED" : "OK";
  RunResult r;
  r.files.push_back(detail::write_json(detail::out_dir(c), "check_report.json", j));
  r.exit_code = bad ? exit_check_failed : exit_ok;
  r.summary = std::string(bad ? "VIOLATED" : "OK") + ": sampled sup " + detail::fmt_short(rep.total_sup) +
              (rep.unbounded_trend ? ", unbounded trend" : "") + (rep.violated ? ", non-finite term" : "") +
              (diverged ? ", integrability diverged" : "");
  return r;
}

/// Weak-identity residuals of a measure curve.
inline RunResult run_residual(const ExperimentConfig& c) {
  const auto& rc = c.residual;
  MeasureCurve<1> curve;
  LevyKernel<1> k;
  CoefficientField<1> coef;
  if (rc.curve.source == "fpme") {
    const FpmeCurve fc = as_measure_curve(run_fpme_solver(c.fpme));
    curve = fc.curve;
    k = fc.kernel(c.kernel.ell);
  } else {
    curve = rc.curve.source == "file" ? load_curve_file(rc.curve.path) : stable_flight_curve(rc.curve);
    k = build_kernel(c.kernel);
    coef = build_coefficients(c.coefficients);
  }
  const auto bank = TestBank<1>::standard(Vec<1>(rc.center), rc.radii);
  const auto rep = residual(curve, coef, k, bank, rc.times, build_residual_options(c));

  const auto dir = detail::out_dir(c);
  std::ostringstream csv;
  csv << "function,c2_norm,time,residual,error,scaled\r\n";
  for (std::size_t i = 0; i < rep.functions.size(); ++i)
    for (std::size_t j = 0; j < rep.times.size(); ++j)
      csv << detail::csv_field(rep.functions[i]) << ',' << detail::fmt(rep.c2_norms[i]) << ',' << detail::fmt(rep.times[j]) << ','
          << detail::fmt(rep.residual[i][j]) << ',' << detail::fmt(rep.error[i][j]) << ','
          << detail::fmt(std::abs(rep.residual[i][j]) / rep.c2_norms[i]) << "\r\n";
  Json j = detail::with_config(c, "residual");
  j["residual_report"] = detail::residual_json(rep, rc.tolerance);
  RunResult r;
  r.files.push_back(detail::write_text(dir, "residual.csv", csv.str()));
  r.files.push_back(detail::write_json(dir, "residual.json", j));
  const bool ok = rep.max_scaled() < rc.tolerance;
  r.exit_code = ok ? exit_ok : exit_check_failed;
  r.summary = std::string(ok ? "OK" : "FAILED") + ": max |R|/||f||_C2 = " + detail::fmt_short(rep.max_scaled());
  return r;
}

/// Euler scheme marginals, optional paths, martingale / moment / KS audits.
inline RunResult run_simulate(const ExperimentConfig& c) {
  const auto& s = c.simulate;
  require(s.T > 0.0 && s.dt > 0.0, "simulate needs T > 0 and dt > 0");
  const auto coef = build_coefficients(c.coefficients);

  InitSampler<1> init;
  if (s.init == "point") {
    init = [x0 = s.x0](RngStream&) { return Vec<1>(x0); };
  } else if (s.init == "uniform") {
    require(s.hi > s.lo, "uniform init needs hi > lo");
    init = [lo = s.lo, hi = s.hi](RngStream& r) { return Vec<1>(lo + (hi - lo) * r.uniform()); };
  } else {
    init = inverse_cdf_sampler(detail::density_expr(s.init_density), PeriodicGrid::centered(s.init_width, s.init_n));
  }

  JumpSpec<1> jumps;
  LevyKernel<1> gen_kernel = zero_kernel<1>(c.kernel.ell);
  const bool unit_sigma = detail::expr_is(s.sigma, "1");
  if (s.jumps == "stable") {
    StableParams{s.alpha, 1}.validate();
    if (unit_sigma) {
      jumps = JumpSpec<1>::stable(s.alpha);
      gen_kernel = isotropic_stable<1>(s.alpha, 1.0, c.kernel.ell);
    } else {
      const Expr sig = Expr::parse(s.sigma);
      jumps = JumpSpec<1>::stable(s.alpha, [sig](double t, const Vec<1>& x) { return sig(t, x(0)); });
      gen_kernel = stable_like_separable<1>(
          s.alpha, [sig, a = s.alpha](double t, const Vec<1>& x) { return std::pow(std::abs(sig(t, x(0))), a); }, c.kernel.ell);
    }
  } else if (s.jumps == "kernel") {
    gen_kernel = build_kernel(c.kernel);
    jumps = JumpSpec<1>::general(gen_kernel, s.small_jump_radius);
  }

  SimulationOptions so;
  so.dt = s.dt;
  so.seed = c.seed;
  so.step.guard = s.guard;
  so.step.freeze_blowups = s.freeze_blowups;
  const std::vector<double> times = s.times.empty() ? std::vector<double>{0.0, s.T} : s.times;
  const auto marg = simulate_marginals(init, coef, jumps, times, s.n, so);

  const auto dir = detail::out_dir(c);
  RunResult r;
  {
    std::ostringstream os;
    write_curve_csv(os, marg);
    r.files.push_back(detail::write_text(dir, "marginals.csv", os.str()));
  }

  Json j = detail::with_config(c, "simulate");
  bool ok = true;
  // Exact law available: unit-scale stable flight from a point.
  const bool flight = s.jumps == "stable" && unit_sigma && s.init == "point" && !coef.has_diffusion() && !coef.has_drift();
  if (flight) {
    const auto cdf = tabulate_cdf([a = s.alpha](double x) { return symmetric_stable_cdf(a, x); });
    Json ks = Json::array();
    for (std::size_t n = 0; n < marg.size(); ++n) {
      const double t = marg.times[n];
      if (t <= 0.0) continue;
      const auto& pc = std::get<ParticleCloud<1>>(marg.snapshots[n]);
      const double scale = std::pow(t / stable_generator_constant(1, s.alpha), 1.0 / s.alpha);
      std::vector<double> xs;
      for (const auto& p : pc.positions) xs.push_back((p(0) - s.x0) / scale);
      const double d = ks_statistic(xs, cdf);
      ok = ok && d < s.ks_tolerance;
      ks.push_back({{"t", t}, {"ks", d}, {"tolerance", s.ks_tolerance}, {"passed", d < s.ks_tolerance}});
    }
    j["ks_audit"] = ks;
  }

  if (s.martingale || s.paths) {
    const auto paths = simulate_paths(init, coef, jumps, s.T, s.n, so);
    if (s.paths) {
      std::ostringstream os;
      os << "particle_id,time,x1\r\n";
      for (std::size_t i = 0; i < paths.particles(); ++i)
        for (std::size_t t = 0; t < paths.times.size(); ++t)
          os << i << ',' << detail::fmt(paths.times[t]) << ',' << detail::fmt(paths.positions[t][i](0)) << "\r\n";
      r.files.push_back(detail::write_text(dir, "paths.csv", os.str()));
    }
    if (s.martingale) {
      const auto bank = TestBank<1>::standard(Vec<1>(0.0), s.audit_radii);
      const auto xis = default_conditioners<1>(s.audit_s);
      Json a = Json::array();
      std::size_t failed = 0;
      for (const auto& f : bank.functions) {
        for (const auto& m : martingale_audit(paths, coef, gen_kernel, f, s.audit_s, s.T, xis, c.quadrature)) {
          const bool pass = m.passed(s.audit_z);
          failed += pass ? 0 : 1;
          a.push_back({{"function", m.function},
                       {"conditioner", m.conditioner},
                       {"s", m.s},
                       {"t", m.t},
                       {"estimate", m.estimate},
                       {"standard_error", m.standard_error},
                       {"z", detail::num(m.z())},
                       {"discretization", m.discretization()},
                       {"passed", pass}});
        }
      }
      j["martingale_audit"] = {{"z_threshold", s.audit_z}, {"failed", failed}, {"entries", a}};
      const auto ly = lyapunov_moment_audit(paths);
      j["lyapunov_moment"] = {{"estimate", ly.estimate},
                              {"standard_error", ly.standard_error},
                              {"particles", ly.particles},
                              {"frozen", ly.frozen},
                              {"blowup_fraction", ly.blowup_fraction()}};
    }
  }
  r.files.push_back(detail::write_json(dir, "audits.json", j));
  r.exit_code = ok ? exit_ok : exit_check_failed;
  r.summary = std::string(ok ? "OK" : "FAILED") + ": " + std::to_string(s.n) + " particles, " + std::to_string(marg.size()) + " marginals";
  return r;
}

/// Porous medium solve: fields and diagnostics.
inline RunResult run_fpme(const ExperimentConfig& c) {
  const FpmeRun run = run_fpme_solver(c.fpme);
  const auto dir = detail::out_dir(c);
  std::ostringstream csv;
  csv << "t,x,u\r\n";
  for (const auto& f : run.snapshots)
    for (int i = 0; i < f.grid.n; ++i) csv << detail::fmt(f.t) << ',' << detail::fmt(f.grid.node(i)) << ',' << detail::fmt(f.u[i]) << "\r\n";
  Json j = detail::with_config(c, "fpme");
  Json snaps = Json::array();
  for (const auto& f : run.snapshots) snaps.push_back({{"t", f.t}, {"mass", f.mass()}, {"sup", f.sup()}, {"min", f.min()}});
  j["diagnostics"] = {{"steps", run.steps},
                      {"rejections", run.rejections},
                      {"init_sup", run.init_sup},
                      {"init_raw_mass", run.init_raw_mass},
                      {"clipped_mass", run.clipped_mass},
                      {"clip_flagged", run.clip_flagged()},
                      {"boundary_mass", run.boundary_mass},
                      {"boundary_flagged", run.boundary_flagged()},
                      {"sup_overshoot", run.sup_overshoot}};
  j["snapshots"] = snaps;
  RunResult r;
  r.files.push_back(detail::write_text(dir, "fpme.csv", csv.str()));
  r.files.push_back(detail::write_json(dir, "fpme.json", j));
  r.summary = "OK: " + std::to_string(run.steps) + " steps, final mass " + detail::fmt_short(run.final().mass()) +
              (run.boundary_flagged() ? ", boundary mass flagged" : "") + (run.clip_flagged() ? ", clipping flagged" : "");
  return r;
}

/// Particle system against the solver from the same initial law.
inline RunResult run_ddsde(const ExperimentConfig& c) {
  const auto& d = c.ddsde;
  const FpmeParams p{d.m, d.alpha};
  p.validate();
  RepresentationOptions o;
  o.grid = PeriodicGrid::centered(d.width, d.grid_n);
  o.fpme_dt = d.fpme_dt;
  o.fpme = build_fpme_options(c.fpme);
  o.fpme.dt = d.fpme_dt;
  o.residual = build_residual_options(c);
  o.snapshot_times = d.times;
  o.particle_m = d.particle_m;
  o.residuals = d.residuals;
  o.bank_radii = d.bank_radii;
  auto& po = o.particles;
  po.dt = d.dt;
  po.refresh = d.refresh;
  po.density_floor = d.density_floor;
  po.seed = c.seed;
  po.step.guard = d.guard;
  po.step.freeze_blowups = d.freeze_blowups;
  po.estimator = DensityEstimator::on(o.grid);
  po.estimator.method = d.estimator == "kde" ? DensityEstimator::Method::kde : DensityEstimator::Method::histogram;
  po.estimator.bandwidth = d.bandwidth == "silverman" ? DensityEstimator::Bandwidth::silverman : DensityEstimator::Bandwidth::fixed;
  po.estimator.fixed_bandwidth = d.fixed_bandwidth;
  const auto rep = representation_experiment(detail::density_expr(d.init), p, d.n, o);

  const auto dir = detail::out_dir(c);
  std::ostringstream csv;
  csv << "t,x,fpme,particles\r\n";
  for (std::size_t s = 0; s < rep.times.size(); ++s) {
    const auto& f = rep.fields[s];
    const auto& e = rep.estimates[s];
    for (int i = 0; i < f.grid.n; ++i)
      csv << detail::fmt(rep.times[s]) << ',' << detail::fmt(f.grid.node(i)) << ',' << detail::fmt(f.u[i]) << ','
          << detail::fmt(e.captured * e.density.evaluate(f.grid.node(i))) << "\r\n";
  }
  bool ok = true;
  Json snaps = Json::array();
  for (std::size_t s = 0; s < rep.times.size(); ++s) {
    const bool pass = rep.l1_distances[s] <= d.l1_tolerance;
    if (rep.times[s] > 0.0) ok = ok && pass;
    Json e = {{"t", rep.times[s]},
              {"l1", rep.l1_distances[s]},
              {"passed", pass},
              {"bandwidth", rep.bandwidths[s]},
              {"captured", rep.captured[s]}};
    if (s < rep.sign_mean.size()) {
      e["sign_mean"] = rep.sign_mean[s];
      e["sign_se"] = rep.sign_se[s];
    }
    snaps.push_back(e);
  }
  Json j = detail::with_config(c, "ddsde");
  j["comparison"] = {{"particles", rep.particles},
                     {"frozen", rep.frozen},
                     {"l1_tolerance", d.l1_tolerance},
                     {"snapshots", snaps},
                     {"fpme", {{"clipped_mass", rep.fpme_clipped_mass}, {"boundary_mass", rep.fpme_boundary_mass}, {"rejections", rep.fpme_rejections}}}};
  if (d.residuals) {
    Json fs = Json::array();
    for (std::size_t i = 0; i < rep.functions.size(); ++i)
      fs.push_back({{"function", rep.functions[i]},
                    {"c2_norm", rep.c2_norms[i]},
                    {"fpme", detail::nums(rep.fpme_residuals[i])},
                    {"particles", detail::nums(rep.particle_residuals[i])}});
    j["comparison"]["residuals"] = {{"times", detail::nums(std::vector<double>(d.times.begin() + 1, d.times.end()))},
                                    {"functions", fs},
                                    {"fpme_max_scaled", rep.fpme_residual_scaled()}};
  }
  RunResult r;
  r.files.push_back(detail::write_text(dir, "densities.csv", csv.str()));
  r.files.push_back(detail::write_json(dir, "comparison.json", j));
  r.exit_code = ok ? exit_ok : exit_check_failed;
  std::string l1;
  for (std::size_t s = 0; s < rep.times.size(); ++s) l1 += (s ? " " : "") + detail::fmt_short(rep.l1_distances[s]);
  r.summary = std::string(ok ? "OK" : "FAILED") + ": L1 at snapshots " + l1;
  return r;
}

inline RunResult run_command(const std::string& cmd, const ExperimentConfig& c) {
  if (cmd == "check") return run_check(c);
  if (cmd == "residual") return run_residual(c);
  if (cmd == "simulate") return run_simulate(c);
  if (cmd == "fpme") return run_fpme(c);
  if (cmd == "ddsde") return run_ddsde(c);
  throw ValidationError("unknown command '" + cmd + "'");
}

/// Maps exceptions to exit codes; the message goes to `err`.
inline int run_guarded(const std::string& cmd, const std::function<ExperimentConfig()>& load, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig c = load();
    set_thread_count(c.threads);
    const RunResult r = run_command(cmd, c);
    out << cmd << ": " << r.summary << "\n";
    for (const auto& f : r.files) out << "  wrote " << f << "\n";
    return r.exit_code;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return exit_config;
  } catch (const BlowUp& e) {
    err << "numerical error: " << e.what() << "\n";
    return exit_numerical;
  } catch (const StepRejected& e) {
    err << "numerical error: " << e.what() << "\n";
    return exit_numerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_numerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_numerical;
  }
}

}  // namespace nlfp
