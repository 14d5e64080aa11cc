#include "nlfp/harness.hpp"

#include <gtest/gtest.h>

using namespace nlfp;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("nlfp_harness_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const std::filesystem::path& p) { return Json::parse(slurp(p)); }

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::string& cmd, const std::string& yaml, const std::filesystem::path& out) {
  std::ostringstream o, e;
  const int code = run_guarded(
      cmd,
      [&] {
        auto c = parse_config(yaml);
        c.out = out.string();
        return c;
      },
      o, e);
  return {code, o.str(), e.str()};
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Expr, ArithmeticAndFunctions) {
  EXPECT_DOUBLE_EQ(Expr::parse("1 + 2*3 - 4/8")(0.0, 0.0), 6.5);
  EXPECT_DOUBLE_EQ(Expr::parse("2^3^2")(0.0, 0.0), 512.0);
  EXPECT_DOUBLE_EQ(Expr::parse("-x1^2")(0.0, 3.0), -9.0);
  EXPECT_DOUBLE_EQ(Expr::parse("(1+abs(x1))^1.5")(0.0, -3.0), 8.0);
  EXPECT_DOUBLE_EQ(Expr::parse("max(1-x1^2, 0)")(0.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(Expr::parse("min(t, 2)*exp(0)+log(1)")(5.0, 0.0), 2.0);
  EXPECT_NEAR(Expr::parse("sqrt(2)*sin(pi/4)+cos(0)")(0.0, 0.0), 2.0, 1e-15);
  ExprVars v;
  v.t = 0.5;
  v.x = {1.0, 2.0, 3.0};
  v.z = {-4.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(Expr::parse("x3 - x2 + abs(z1)*t", 3, true)(v), 3.0);
}

TEST(Expr, ErrorsCarryColumns) {
  EXPECT_NE(message_of([] { Expr::parse("1 + * 2"); }).find("column 5"), std::string::npos);
  EXPECT_NE(message_of([] { Expr::parse("foo(x1)"); }).find("unknown identifier 'foo'"), std::string::npos);
  EXPECT_THROW(Expr::parse("z1"), ValidationError);
  EXPECT_THROW(Expr::parse("x2"), ValidationError);
  EXPECT_THROW(Expr::parse("(1+2"), ValidationError);
  EXPECT_THROW(Expr::parse("max(1)"), ValidationError);
  EXPECT_THROW(Expr::parse("  "), ValidationError);
  EXPECT_THROW(Expr::parse("1 2"), ValidationError);
}

TEST(Config, UnknownKeysRejectedWithLine) {
  const std::string yaml = "seed: 1\nkernel:\n  family: zero\n  alpah: 1.5\n";
  const std::string msg = message_of([&] { parse_config(yaml); });
  EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("alpah"), std::string::npos) << msg;
  EXPECT_THROW(parse_config("sede: 1\n"), ConfigError);
  EXPECT_THROW(parse_config("kernel:\n  family: gaussian\n"), ConfigError);
  EXPECT_THROW(parse_config("fpme:\n  m: two\n"), ConfigError);
  EXPECT_NE(message_of([] { parse_config("seed: [1,\n"); }).find("config line"), std::string::npos);
}

TEST(Config, EmptyIsAParseError) {
  EXPECT_THROW(parse_config(""), ConfigError);
  EXPECT_THROW(parse_config("# nothing\n"), ConfigError);
  EXPECT_THROW(parse_config("{}"), ConfigError);
}

TEST(Config, ResolvedConfigRoundTrips) {
  const auto c = parse_config("seed: 9\nkernel: {family: separable, intensity: \"1+t\", alpha: 0.7}\nddsde: {n: 5000}\nquadrature: {order: 12}\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.kernel.alpha, 0.7);
  EXPECT_EQ(c.ddsde.n, 5000u);
  EXPECT_EQ(c.quadrature.order, 12);
  const Json j = resolved_config(c);
  const Json again = resolved_config(parse_config(j.dump()));
  EXPECT_EQ(j.dump(), again.dump());
  EXPECT_TRUE(j["quadrature"]["tolerance"].is_null());
  EXPECT_TRUE(std::isinf(parse_config(j.dump()).quadrature.tolerance));
  // Stable key order: sections in declaration order.
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys.front(), "seed");
  EXPECT_EQ(keys.back(), "ddsde");
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(load_config("/nonexistent/config.yaml"), IoError);
  std::ostringstream o, e;
  EXPECT_EQ(run_guarded("check", [] { return load_config("/nonexistent/config.yaml"); }, o, e), exit_io);
}

TEST(HarnessCheck, ExampleKernelPasses) {
  const auto dir = scratch("check_ok");
  const auto r = run("check",
                     "kernel: {family: stable_like, alpha: 1.5, kappa: \"(1+abs(x1))^1\"}\n"
                     "check: {times: [0.0], x_max: 1000, count: 21}\n",
                     dir);
  EXPECT_EQ(r.code, exit_ok) << r.err;
  const Json j = read_json(dir / "check_report.json");
  EXPECT_EQ(j["status"], "OK");
  EXPECT_FALSE(j["condition_report"]["violated"].get<bool>());
  EXPECT_FALSE(j["condition_report"]["unbounded_trend"].get<bool>());
  EXPECT_EQ(j["config"]["kernel"]["kappa"], "(1+abs(x1))^1");
  for (const char* key : {"total_sup", "per_term", "argmax_probe", "violated"}) EXPECT_TRUE(j["condition_report"].contains(key)) << key;
}

TEST(HarnessCheck, CubicDriftFlagged) {
  const auto dir = scratch("check_cubic");
  const auto r = run("check", "coefficients: {b: \"-x1^3\"}\ncheck: {times: [0.0], x_max: 1000, count: 21}\n", dir);
  EXPECT_EQ(r.code, exit_check_failed);
  const Json j = read_json(dir / "check_report.json");
  EXPECT_TRUE(j["condition_report"]["unbounded_trend"].get<bool>());
  EXPECT_EQ(j["status"], "VIOLATED");
}

TEST(HarnessCheck, IntegrabilityOfCurveFile) {
  const auto dir = scratch("check_curve");
  MeasureCurve<1> c;
  for (int j = 0; j <= 4; ++j) c.push_back(0.25 * j, ParticleCloud<1>::uniform({Vec<1>(-1.0), Vec<1>(0.5), Vec<1>(2.0)}));
  {
    std::ofstream os(dir / "curve.csv", std::ios::binary);
    write_curve_csv(os, c);
  }
  const auto r = run("check",
                     "kernel: {family: isotropic_stable, alpha: 1.5}\n"
                     "check: {times: [0.0], x_max: 100, count: 11, curve: \"" + (dir / "curve.csv").string() + "\", radii: [1, 4]}\n",
                     dir);
  EXPECT_EQ(r.code, exit_ok) << r.err;
  const Json j = read_json(dir / "check_report.json");
  ASSERT_EQ(j["integrability"].size(), 2u);
  EXPECT_FALSE(j["integrability"][0]["diverged"].get<bool>());
  EXPECT_GT(j["integrability"][0]["tail_terms"].get<double>(), 0.0);
}

TEST(HarnessResidual, StaticZeroSystem) {
  const auto dir = scratch("residual_static");
  MeasureCurve<1> c;
  for (int j = 0; j <= 10; ++j) c.push_back(0.1 * j, ParticleCloud<1>::uniform({Vec<1>(-0.3), Vec<1>(0.1), Vec<1>(1.7)}));
  {
    std::ofstream os(dir / "curve.csv", std::ios::binary);
    write_curve_csv(os, c);
  }
  const auto r = run("residual", "residual: {curve: {source: file, path: \"" + (dir / "curve.csv").string() + "\"}, times: [0.5, 1.0]}\n", dir);
  EXPECT_EQ(r.code, exit_ok) << r.err;
  const Json j = read_json(dir / "residual.json");
  EXPECT_EQ(j["residual_report"]["max_abs"].get<double>(), 0.0);
  const std::string csv = slurp(dir / "residual.csv");
  EXPECT_EQ(csv.rfind("function,c2_norm,time,residual,error,scaled\r\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8 * 2);
}

TEST(HarnessResidual, MissingCurveFile) {
  const auto dir = scratch("residual_missing");
  const auto r = run("residual", "residual: {curve: {source: file, path: /nonexistent/curve.csv}}\n", dir);
  EXPECT_EQ(r.code, exit_io);
  EXPECT_NE(r.err.find("cannot open curve file"), std::string::npos);
}

TEST(HarnessResidual, StableFlightOracle) {
  const auto dir = scratch("residual_flight");
  const auto r = run("residual",
                     "kernel: {family: isotropic_stable, alpha: 1.5, c: 1}\n"
                     "residual: {curve: {source: stable_flight, alpha: 1.5, T: 1.0, steps: 50}, times: [0.2, 1.0], radii: [1, 4]}\n",
                     dir);
  EXPECT_EQ(r.code, exit_ok) << r.err;
  const Json j = read_json(dir / "residual.json");
  EXPECT_LT(j["residual_report"]["max_scaled"].get<double>(), 1e-2);
  // Wrong intensity: the same curve no longer solves the equation.
  const auto bad = run("residual",
                       "kernel: {family: isotropic_stable, alpha: 1.5, c: 2}\n"
                       "residual: {curve: {source: stable_flight, alpha: 1.5, T: 1.0, steps: 50}, times: [1.0], radii: [1]}\n",
                       scratch("residual_flight_bad"));
  EXPECT_EQ(bad.code, exit_check_failed);
}

TEST(HarnessSimulate, FixedSeedIsByteIdentical) {
  const std::string yaml =
      "seed: 11\nsimulate: {n: 2000, dt: 0.02, T: 0.4, times: [0.0, 0.2, 0.4], init: uniform, jumps: stable, alpha: 1.2, "
      "sigma: \"1/(1+x1^2)\", audit_s: 0.2, paths: true}\ncoefficients: {b: \"-x1\", a: \"0.1\"}\n";
  const auto a = scratch("sim_a"), b = scratch("sim_b");
  ASSERT_EQ(run("simulate", yaml, a).code, exit_ok);
  ASSERT_EQ(run("simulate", yaml, b).code, exit_ok);
  for (const char* f : {"marginals.csv", "paths.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  // audits.json embeds the output directory, which differs.
  Json ja = read_json(a / "audits.json"), jb = read_json(b / "audits.json");
  ja["config"].erase("out");
  jb["config"].erase("out");
  EXPECT_EQ(ja.dump(), jb.dump());
  EXPECT_EQ(slurp(a / "paths.csv").rfind("particle_id,time,x1\r\n", 0), 0u);
  // A different seed changes the sample.
  const auto c = scratch("sim_c");
  ASSERT_EQ(run("simulate", "seed: 12" + yaml.substr(8), c).code, exit_ok);
  EXPECT_NE(slurp(a / "marginals.csv"), slurp(c / "marginals.csv"));
}

TEST(HarnessSimulate, RegeneratedFromEmbeddedConfig) {
  const auto dir = scratch("sim_regen");
  ASSERT_EQ(run("simulate", "seed: 3\nsimulate: {n: 1000, dt: 0.05, T: 0.5, jumps: stable, alpha: 1.7, martingale: false, ks_tolerance: 0.1}\n", dir).code, exit_ok);
  const std::string first = slurp(dir / "audits.json"), marg = slurp(dir / "marginals.csv");
  const Json j = read_json(dir / "audits.json");
  std::ostringstream o, e;
  ASSERT_EQ(run_guarded("simulate", [&] { return parse_config(j["config"].dump()); }, o, e), exit_ok) << e.str();
  EXPECT_EQ(slurp(dir / "audits.json"), first);
  EXPECT_EQ(slurp(dir / "marginals.csv"), marg);
}

TEST(HarnessSimulate, StableFlightKsAuditPasses) {
  const auto dir = scratch("sim_ks");
  const auto r = run("simulate", "seed: 5\nsimulate: {n: 20000, dt: 0.05, T: 1.0, init: point, x0: 2, jumps: stable, alpha: 1.5, martingale: false}\n", dir);
  EXPECT_EQ(r.code, exit_ok) << r.err;
  const Json j = read_json(dir / "audits.json");
  ASSERT_EQ(j["ks_audit"].size(), 1u);
  EXPECT_TRUE(j["ks_audit"][0]["passed"].get<bool>());
}

TEST(HarnessSimulate, AlphaOutOfRange) {
  const auto dir = scratch("sim_alpha");
  const auto r = run("simulate", "simulate: {n: 100, jumps: stable, alpha: 2.5}\n", dir);
  EXPECT_EQ(r.code, exit_config);
  EXPECT_NE(r.err.find("(0, 2)"), std::string::npos) << r.err;
}

TEST(HarnessSimulate, BlowUpIsNumericalError) {
  const auto dir = scratch("sim_blowup");
  const auto r = run("simulate", "coefficients: {b: \"x1^3\"}\nsimulate: {n: 100, dt: 0.1, T: 2, init: point, x0: 3, martingale: false}\n", dir);
  EXPECT_EQ(r.code, exit_numerical);
}

TEST(HarnessFpme, ConstantInitIsStationary) {
  const auto dir = scratch("fpme_const");
  const auto r = run("fpme", "fpme: {init: \"1\", width: 16, n: 128, dt: 0.01, times: [0, 0.5], allow_wide_support: true}\n", dir);
  EXPECT_EQ(r.code, exit_ok) << r.err;
  const Json j = read_json(dir / "fpme.json");
  for (const auto& s : j["snapshots"]) {
    EXPECT_NEAR(s["sup"].get<double>(), 1.0 / 16.0, 1e-14);
    EXPECT_NEAR(s["min"].get<double>(), 1.0 / 16.0, 1e-14);
  }
  const std::string csv = slurp(dir / "fpme.csv");
  EXPECT_EQ(csv.rfind("t,x,u\r\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 128);
}

TEST(HarnessFpme, ExponentMustExceedOne) {
  const auto dir = scratch("fpme_m1");
  const auto r = run("fpme", "fpme: {m: 1}\n", dir);
  EXPECT_EQ(r.code, exit_config);
  EXPECT_NE(r.err.find("porous media exponent m>1"), std::string::npos) << r.err;
  EXPECT_EQ(run("ddsde", "ddsde: {m: 0.5}\n", dir).code, exit_config);
}

TEST(HarnessDdsde, SmallComparison) {
  const auto dir = scratch("ddsde_small");
  const auto r = run("ddsde",
                     "seed: 4\nddsde: {n: 5000, dt: 0.01, times: [0, 0.05], width: 64, grid_n: 1024, fpme_dt: 0.001, residuals: false, "
                     "l1_tolerance: 0.2}\n",
                     dir);
  EXPECT_EQ(r.code, exit_ok) << r.err;
  const Json j = read_json(dir / "comparison.json");
  ASSERT_EQ(j["comparison"]["snapshots"].size(), 2u);
  EXPECT_LT(j["comparison"]["snapshots"][1]["l1"].get<double>(), 0.2);
  EXPECT_EQ(j["config"]["ddsde"]["n"], 5000);
  const std::string csv = slurp(dir / "densities.csv");
  EXPECT_EQ(csv.rfind("t,x,fpme,particles\r\n", 0), 0u);
}
