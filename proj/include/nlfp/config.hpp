#pragma once

#include "nlfp/expr.hpp"
#include "nlfp/operators.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace nlfp {

using Json = nlohmann::ordered_json;

/// Unreadable inputs or unwritable outputs.
class IoError : public Error {
public:
  explicit IoError(const std::string& m) : Error(m) {}
};

/// Config problems, with the line of the offending node when known.
class ConfigError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

struct KernelConfig {
  /// zero | isotropic_stable | stable_like | separable
  std::string family = "zero";
  double alpha = 1.5;
  double ell = 0.5;
  /// isotropic_stable: nu = c dz/|z|^{1+alpha}.
  double c = 1.0;
  /// stable_like: kappa(t, x1, z1).
  std::string kappa = "1";
  /// separable: intensity(t, x1).
  std::string intensity = "1";
  /// Global bound on kappa / intensity (enables jump thinning); NaN if unknown.
  double kappa_bound = std::numeric_limits<double>::quiet_NaN();
  bool symmetric = false;
};

struct CoefficientConfig {
  /// a = sigma sigma^T / 2 and b, expressions in t, x1.
  std::string a = "0";
  std::string b = "0";
};

struct CheckConfig {
  std::vector<double> times{0.0};
  double x_max = 1000.0;
  int count = 41;
  bool log_spacing = true;
  double trend_ratio = 1.25;
  /// Optional measure curve CSV for the integrability report.
  std::string curve;
  std::vector<double> radii{1.0, 2.0, 4.0};
  std::size_t max_particles = 2000;
  double stability_rtol = 0.1;
};

struct CurveSource {
  /// file | stable_flight | fpme
  std::string source = "file";
  std::string path;
  /// stable_flight: wrapped flight density from time `offset` for `T`, `steps` intervals.
  double alpha = 1.5;
  double offset = 0.2;
  double T = 1.0;
  int steps = 50;
  double width = 64.0;
  int n = 1024;
};

struct ResidualConfig {
  CurveSource curve;
  std::vector<double> times{0.5, 1.0};
  double center = 0.0;
  std::vector<double> radii{1.0, 2.0, 4.0, 8.0};
  int image_terms = 256;
  /// Pass threshold on |R(f, t)| / ||f||_{C^2}.
  double tolerance = 1e-2;
};

struct SimulateConfig {
  std::size_t n = 10000;
  double dt = 0.01;
  double T = 1.0;
  /// Marginal times; empty means {0, T}.
  std::vector<double> times;
  /// point | uniform | density
  std::string init = "point";
  double x0 = 0.0;
  double lo = 0.0, hi = 1.0;
  std::string init_density = "35/32*max(1-x1^2,0)^3";
  double init_width = 64.0;
  int init_n = 2048;
  /// none | stable | kernel
  std::string jumps = "none";
  double alpha = 1.5;
  std::string sigma = "1";
  double small_jump_radius = 0.05;
  double guard = 1e6;
  bool freeze_blowups = false;
  bool paths = false;
  bool martingale = true;
  double audit_s = 0.2;
  std::vector<double> audit_radii{1.0, 2.0};
  double audit_z = 3.0;
  double ks_tolerance = 0.015;
};

struct FpmeConfig {
  double m = 2.0;
  double alpha = 1.0;
  double width = 64.0;
  int n = 1024;
  double dt = 1e-3;
  std::vector<double> times{0.0, 0.1, 0.25, 0.5};
  std::string init = "35/32*max(1-x1^2,0)^3";
  double step_mass_tol = 1e-6;
  int max_halvings = 10;
  double clip_flag = 1e-4;
  double boundary_threshold = 1e-6;
  double boundary_band = 1.0 / 16.0;
  bool allow_wide_support = false;
};

struct DdsdeConfig {
  double m = 2.0;
  double alpha = 1.0;
  std::size_t n = 100000;
  double dt = 0.005;
  int refresh = 1;
  double density_floor = 1e-8;
  std::vector<double> times{0.0, 0.1, 0.25, 0.5};
  double width = 128.0;
  int grid_n = 4096;
  double fpme_dt = 2.5e-4;
  /// Exponent of the particle system only; NaN means m.
  double particle_m = std::numeric_limits<double>::quiet_NaN();
  bool residuals = true;
  std::vector<double> bank_radii{1.0, 2.0, 4.0, 8.0};
  std::string init = "35/32*max(1-x1^2,0)^3";
  /// kde | histogram
  std::string estimator = "kde";
  /// silverman | fixed
  std::string bandwidth = "silverman";
  double fixed_bandwidth = 0.1;
  double l1_tolerance = 0.05;
  double guard = 1e6;
  bool freeze_blowups = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out = "out";
  KernelConfig kernel;
  CoefficientConfig coefficients;
  QuadratureSpec quadrature;
  TableSpec tables;
  CheckConfig check;
  ResidualConfig residual;
  SimulateConfig simulate;
  FpmeConfig fpme;
  DdsdeConfig ddsde;
};

namespace detail {

/// A YAML mapping whose keys are checked against an allowed list.
class ConfigSection {
public:
  ConfigSection(const YAML::Node& node, std::string path, std::initializer_list<const char*> allowed) : node_(node), path_(std::move(path)) {
    if (!node_.IsMap()) fail(node_, "section '" + path_ + "' must be a mapping");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!ok.count(key)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
        fail(kv.first, "unknown key '" + key + "' in " + (path_.empty() ? std::string("top level") : "'" + path_ + "'") + " (allowed: " + list + ")");
      }
    }
  }

  [[noreturn]] static void fail(const YAML::Node& n, const std::string& msg) {
    const auto m = n.Mark();
    if (m.line >= 0) throw ConfigError("config line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ": " + msg);
    throw ConfigError("config: " + msg);
  }

  bool has(const char* key) const { return static_cast<bool>(node_[key]); }
  YAML::Node node(const char* key) const { return node_[key]; }

  template <class T>
  void read(const char* key, T& out) const {
    const YAML::Node n = node_[key];
    if (!n) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        out = n.IsNull() ? std::numeric_limits<double>::quiet_NaN() : n.as<double>();
      } else {
        out = n.as<T>();
      }
    } catch (const YAML::Exception&) {
      fail(n, "bad value for '" + qualified(key) + "'");
    }
  }

  ConfigSection section(const char* key, std::initializer_list<const char*> allowed) const {
    return ConfigSection(node_[key], qualified(key), allowed);
  }

private:
  std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  YAML::Node node_;
  std::string path_;
};

inline void check_choice(const YAML::Node& n, const std::string& v, std::initializer_list<const char*> choices, const std::string& what) {
  for (const auto& c : choices)
    if (v == c) return;
  ConfigSection::fail(n, "bad " + what + " '" + v + "'");
}

}  // namespace detail

/// Parses YAML (or JSON) text; unknown keys are rejected with their line.
inline ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("config line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull() || (root.IsMap() && root.size() == 0)) throw ConfigError("config is empty");
  using detail::ConfigSection;
  ExperimentConfig c;
  const ConfigSection top(root, "",
                          {"seed", "threads", "out", "kernel", "coefficients", "quadrature", "tables", "check", "residual", "simulate", "fpme", "ddsde"});
  top.read("seed", c.seed);
  top.read("threads", c.threads);
  top.read("out", c.out);
  if (top.has("kernel")) {
    const auto s = top.section("kernel", {"family", "alpha", "ell", "c", "kappa", "intensity", "kappa_bound", "symmetric"});
    auto& k = c.kernel;
    s.read("family", k.family);
    detail::check_choice(s.node("family"), k.family, {"zero", "isotropic_stable", "stable_like", "separable"}, "kernel family");
    s.read("alpha", k.alpha);
    s.read("ell", k.ell);
    s.read("c", k.c);
    s.read("kappa", k.kappa);
    s.read("intensity", k.intensity);
    s.read("kappa_bound", k.kappa_bound);
    s.read("symmetric", k.symmetric);
  }
  if (top.has("coefficients")) {
    const auto s = top.section("coefficients", {"a", "b"});
    s.read("a", c.coefficients.a);
    s.read("b", c.coefficients.b);
  }
  if (top.has("quadrature")) {
    const auto s = top.section("quadrature", {"inner_factor", "operator_inner_factor", "panels_per_octave", "order", "angular_resolution",
                                              "outer_rtol", "max_octaves", "support_panel_fraction", "tolerance"});
    auto& q = c.quadrature;
    s.read("inner_factor", q.inner_factor);
    s.read("operator_inner_factor", q.operator_inner_factor);
    s.read("panels_per_octave", q.panels_per_octave);
    s.read("order", q.order);
    s.read("angular_resolution", q.angular_resolution);
    s.read("outer_rtol", q.outer_rtol);
    s.read("max_octaves", q.max_octaves);
    s.read("support_panel_fraction", q.support_panel_fraction);
    s.read("tolerance", q.tolerance);
    // null reads back as unlimited
    if (std::isnan(q.tolerance)) q.tolerance = kInf;
  }
  if (top.has("tables")) {
    const auto s = top.section("tables", {"enabled", "reach", "coarse_nodes_per_radius", "fine_reach", "fine_nodes_per_radius"});
    auto& tb = c.tables;
    s.read("enabled", tb.enabled);
    s.read("reach", tb.reach);
    s.read("coarse_nodes_per_radius", tb.coarse_nodes_per_radius);
    s.read("fine_reach", tb.fine_reach);
    s.read("fine_nodes_per_radius", tb.fine_nodes_per_radius);
  }
  if (top.has("check")) {
    const auto s = top.section("check", {"times", "x_max", "count", "log_spacing", "trend_ratio", "curve", "radii", "max_particles", "stability_rtol"});
    auto& k = c.check;
    s.read("times", k.times);
    s.read("x_max", k.x_max);
    s.read("count", k.count);
    s.read("log_spacing", k.log_spacing);
    s.read("trend_ratio", k.trend_ratio);
    s.read("curve", k.curve);
    s.read("radii", k.radii);
    s.read("max_particles", k.max_particles);
    s.read("stability_rtol", k.stability_rtol);
  }
  if (top.has("residual")) {
    const auto s = top.section("residual", {"curve", "times", "center", "radii", "image_terms", "tolerance"});
    auto& r = c.residual;
    if (s.has("curve")) {
      const auto cs = s.section("curve", {"source", "path", "alpha", "offset", "T", "steps", "width", "n"});
      cs.read("source", r.curve.source);
      detail::check_choice(cs.node("source"), r.curve.source, {"file", "stable_flight", "fpme"}, "curve source");
      cs.read("path", r.curve.path);
      cs.read("alpha", r.curve.alpha);
      cs.read("offset", r.curve.offset);
      cs.read("T", r.curve.T);
      cs.read("steps", r.curve.steps);
      cs.read("width", r.curve.width);
      cs.read("n", r.curve.n);
    }
    s.read("times", r.times);
    s.read("center", r.center);
    s.read("radii", r.radii);
    s.read("image_terms", r.image_terms);
    s.read("tolerance", r.tolerance);
  }
  if (top.has("simulate")) {
    const auto s = top.section("simulate", {"n", "dt", "T", "times", "init", "x0", "lo", "hi", "init_density", "init_width", "init_n", "jumps",
                                            "alpha", "sigma", "small_jump_radius", "guard", "freeze_blowups", "paths", "martingale", "audit_s",
                                            "audit_radii", "audit_z", "ks_tolerance"});
    auto& m = c.simulate;
    s.read("n", m.n);
    s.read("dt", m.dt);
    s.read("T", m.T);
    s.read("times", m.times);
    s.read("init", m.init);
    detail::check_choice(s.node("init"), m.init, {"point", "uniform", "density"}, "init kind");
    s.read("x0", m.x0);
    s.read("lo", m.lo);
    s.read("hi", m.hi);
    s.read("init_density", m.init_density);
    s.read("init_width", m.init_width);
    s.read("init_n", m.init_n);
    s.read("jumps", m.jumps);
    detail::check_choice(s.node("jumps"), m.jumps, {"none", "stable", "kernel"}, "jump kind");
    s.read("alpha", m.alpha);
    s.read("sigma", m.sigma);
    s.read("small_jump_radius", m.small_jump_radius);
    s.read("guard", m.guard);
    s.read("freeze_blowups", m.freeze_blowups);
    s.read("paths", m.paths);
    s.read("martingale", m.martingale);
    s.read("audit_s", m.audit_s);
    s.read("audit_radii", m.audit_radii);
    s.read("audit_z", m.audit_z);
    s.read("ks_tolerance", m.ks_tolerance);
  }
  if (top.has("fpme")) {
    const auto s = top.section("fpme", {"m", "alpha", "width", "n", "dt", "times", "init", "step_mass_tol", "max_halvings", "clip_flag",
                                        "boundary_threshold", "boundary_band", "allow_wide_support"});
    auto& f = c.fpme;
    s.read("m", f.m);
    s.read("alpha", f.alpha);
    s.read("width", f.width);
    s.read("n", f.n);
    s.read("dt", f.dt);
    s.read("times", f.times);
    s.read("init", f.init);
    s.read("step_mass_tol", f.step_mass_tol);
    s.read("max_halvings", f.max_halvings);
    s.read("clip_flag", f.clip_flag);
    s.read("boundary_threshold", f.boundary_threshold);
    s.read("boundary_band", f.boundary_band);
    s.read("allow_wide_support", f.allow_wide_support);
  }
  if (top.has("ddsde")) {
    const auto s = top.section("ddsde", {"m", "alpha", "n", "dt", "refresh", "density_floor", "times", "width", "grid_n", "fpme_dt", "particle_m",
                                         "residuals", "bank_radii", "init", "estimator", "bandwidth", "fixed_bandwidth", "l1_tolerance", "guard",
                                         "freeze_blowups"});
    auto& d = c.ddsde;
    s.read("m", d.m);
    s.read("alpha", d.alpha);
    s.read("n", d.n);
    s.read("dt", d.dt);
    s.read("refresh", d.refresh);
    s.read("density_floor", d.density_floor);
    s.read("times", d.times);
    s.read("width", d.width);
    s.read("grid_n", d.grid_n);
    s.read("fpme_dt", d.fpme_dt);
    s.read("particle_m", d.particle_m);
    s.read("residuals", d.residuals);
    s.read("bank_radii", d.bank_radii);
    s.read("init", d.init);
    s.read("estimator", d.estimator);
    detail::check_choice(s.node("estimator"), d.estimator, {"kde", "histogram"}, "estimator");
    s.read("bandwidth", d.bandwidth);
    detail::check_choice(s.node("bandwidth"), d.bandwidth, {"silverman", "fixed"}, "bandwidth rule");
    s.read("fixed_bandwidth", d.fixed_bandwidth);
    s.read("l1_tolerance", d.l1_tolerance);
    s.read("guard", d.guard);
    s.read("freeze_blowups", d.freeze_blowups);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace detail {
/// NaN and infinities become null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
}  // namespace detail

/// Every setting, defaults included; parse_config(dump) reproduces the config.
inline Json resolved_config(const ExperimentConfig& c) {
  using detail::num;
  Json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out"] = c.out;
  const auto& k = c.kernel;
  j["kernel"] = {{"family", k.family}, {"alpha", k.alpha},         {"ell", k.ell},
                 {"c", k.c},           {"kappa", k.kappa},         {"intensity", k.intensity},
                 {"kappa_bound", num(k.kappa_bound)}, {"symmetric", k.symmetric}};
  j["coefficients"] = {{"a", c.coefficients.a}, {"b", c.coefficients.b}};
  const auto& q = c.quadrature;
  j["quadrature"] = {{"inner_factor", q.inner_factor},   {"operator_inner_factor", q.operator_inner_factor},
                     {"panels_per_octave", q.panels_per_octave}, {"order", q.order},
                     {"angular_resolution", q.angular_resolution}, {"outer_rtol", q.outer_rtol},
                     {"max_octaves", q.max_octaves},     {"support_panel_fraction", q.support_panel_fraction},
                     {"tolerance", num(q.tolerance)}};
  const auto& tb = c.tables;
  j["tables"] = {{"enabled", tb.enabled},
                 {"reach", tb.reach},
                 {"coarse_nodes_per_radius", tb.coarse_nodes_per_radius},
                 {"fine_reach", tb.fine_reach},
                 {"fine_nodes_per_radius", tb.fine_nodes_per_radius}};
  const auto& ch = c.check;
  j["check"] = {{"times", ch.times},         {"x_max", ch.x_max}, {"count", ch.count}, {"log_spacing", ch.log_spacing},
                {"trend_ratio", ch.trend_ratio}, {"curve", ch.curve}, {"radii", ch.radii},
                {"max_particles", ch.max_particles}, {"stability_rtol", ch.stability_rtol}};
  const auto& r = c.residual;
  j["residual"] = {{"curve",
                    {{"source", r.curve.source}, {"path", r.curve.path}, {"alpha", r.curve.alpha}, {"offset", r.curve.offset},
                     {"T", r.curve.T}, {"steps", r.curve.steps}, {"width", r.curve.width}, {"n", r.curve.n}}},
                   {"times", r.times},
                   {"center", r.center},
                   {"radii", r.radii},
                   {"image_terms", r.image_terms},
                   {"tolerance", r.tolerance}};
  const auto& s = c.simulate;
  j["simulate"] = {{"n", s.n},
                   {"dt", s.dt},
                   {"T", s.T},
                   {"times", s.times},
                   {"init", s.init},
                   {"x0", s.x0},
                   {"lo", s.lo},
                   {"hi", s.hi},
                   {"init_density", s.init_density},
                   {"init_width", s.init_width},
                   {"init_n", s.init_n},
                   {"jumps", s.jumps},
                   {"alpha", s.alpha},
                   {"sigma", s.sigma},
                   {"small_jump_radius", s.small_jump_radius},
                   {"guard", s.guard},
                   {"freeze_blowups", s.freeze_blowups},
                   {"paths", s.paths},
                   {"martingale", s.martingale},
                   {"audit_s", s.audit_s},
                   {"audit_radii", s.audit_radii},
                   {"audit_z", s.audit_z},
                   {"ks_tolerance", s.ks_tolerance}};
  const auto& f = c.fpme;
  j["fpme"] = {{"m", f.m},
               {"alpha", f.alpha},
               {"width", f.width},
               {"n", f.n},
               {"dt", f.dt},
               {"times", f.times},
               {"init", f.init},
               {"step_mass_tol", f.step_mass_tol},
               {"max_halvings", f.max_halvings},
               {"clip_flag", f.clip_flag},
               {"boundary_threshold", f.boundary_threshold},
               {"boundary_band", f.boundary_band},
               {"allow_wide_support", f.allow_wide_support}};
  const auto& d = c.ddsde;
  j["ddsde"] = {{"m", d.m},
                {"alpha", d.alpha},
                {"n", d.n},
                {"dt", d.dt},
                {"refresh", d.refresh},
                {"density_floor", d.density_floor},
                {"times", d.times},
                {"width", d.width},
                {"grid_n", d.grid_n},
                {"fpme_dt", d.fpme_dt},
                {"particle_m", num(d.particle_m)},
                {"residuals", d.residuals},
                {"bank_radii", d.bank_radii},
                {"init", d.init},
                {"estimator", d.estimator},
                {"bandwidth", d.bandwidth},
                {"fixed_bandwidth", d.fixed_bandwidth},
                {"l1_tolerance", d.l1_tolerance},
                {"guard", d.guard},
                {"freeze_blowups", d.freeze_blowups}};
  return j;
}

}  // namespace nlfp
