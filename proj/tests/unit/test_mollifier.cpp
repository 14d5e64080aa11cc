#include "nlfp/mollifier.hpp"
#include "support/oracles.hpp"
#include "support/stable_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nlfp;

namespace {

MeasureCurve<1> drifting_cloud(int n, int steps, double T = 1.0) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  std::vector<double> x0(n), v(n);
  for (int i = 0; i < n; ++i) {
    x0[i] = nd(rng);
    v[i] = 0.5 * nd(rng);
  }
  MeasureCurve<1> c;
  for (int j = 0; j <= steps; ++j) {
    const double t = T * j / steps;
    std::vector<Vec<1>> pos;
    for (int i = 0; i < n; ++i) pos.emplace_back(x0[i] + v[i] * t);
    c.push_back(t, ParticleCloud<1>::uniform(pos));
  }
  return c;
}

MeasureCurve<1> flight_curve(double alpha, double T, int steps, double width, int n) {
  MeasureCurve<1> c;
  const double h = width / n, x0 = -0.5 * width;
  for (int j = 0; j <= steps; ++j) {
    const double t = T * j / steps;
    GridDensity g;
    g.x0 = x0;
    g.h = h;
    g.periodic = true;
    g.values = oracle::torus_stable_density(alpha, t, 0.2, x0, h, n);
    c.push_back(t, g);
  }
  return c;
}

CoefficientField<1> wavy_coefficients() {
  CoefficientField<1> c;
  c.a = [](double t, const Vec<1>& x) { return Mat<1>(0.5 + 0.2 * std::sin(x(0) + t)); };
  c.b = [](double, const Vec<1>& x) { return Vec<1>(std::cos(x(0)) - 0.3 * x(0)); };
  return c;
}

LevyKernel<1> wavy_kernel() {
  return stable_like<1>(1.2, [](double, const Vec<1>& x, const Vec<1>&) { return 1.0 + 0.5 * std::sin(x(0)); }, 0.5, false, 1.5);
}

}  // namespace

TEST(Mollifier, BumpsHaveUnitMass) {
  EXPECT_NEAR(integrate_panels(time_bump, 0.0, 1.0, 8), 1.0, 1e-13);
  EXPECT_NEAR(integrate_panels([](double x) { return space_bump<1>(Vec<1>(x)); }, -1.0, 1.0, 8), 1.0, 1e-13);
  EXPECT_NEAR(oracle::integrate([](double r) { return 2 * oracle::pi * r * space_bump<2>(Vec<2>(r, 0.0)); }, 0.0, 1.0), 1.0, 1e-12);
  EXPECT_NEAR(oracle::integrate([](double r) { return 4 * oracle::pi * r * r * space_bump<3>(Vec<3>(r, 0.0, 0.0)); }, 0.0, 1.0), 1.0,
              1e-12);
  for (double u : {-0.7, -0.1, 0.3, 0.9}) {
    const double ref = oracle::integrate([](double s) { return space_bump<1>(Vec<1>(s)); }, -1.0, u);
    EXPECT_NEAR(space_bump_cdf(u), ref, 1e-14);
  }
}

TEST(Mollifier, SingleParticleFarAway) {
  MeasureCurve<1> c;
  c.push_back(0.0, ParticleCloud<1>::uniform({Vec<1>(0.0)}));
  c.push_back(1.0, ParticleCloud<1>::uniform({Vec<1>(0.0)}));
  const MollifiedFamily<1> fam(c, 0.2);
  for (double x : {0.5, -1.0, 3.0}) EXPECT_DOUBLE_EQ(mollify_measure(fam, 0.5, Vec<1>(x)), 0.2 * gaussian_floor<1>(Vec<1>(x)));
  EXPECT_GT(mollify_measure(fam, 0.5, Vec<1>(0.05)), 0.2 * gaussian_floor<1>(Vec<1>(0.05)) + 1.0);
}

TEST(Mollifier, RejectsBadInput) {
  EXPECT_THROW(MollifiedFamily<1>(MeasureCurve<1>{}, 0.1), EmptyCurve);
  EXPECT_THROW(MollifiedFamily<1>(drifting_cloud(10, 2), 0.5), ValidationError);
  EXPECT_THROW(MollifiedFamily<1>(drifting_cloud(10, 2), 0.0), ValidationError);
}

TEST(Mollifier, UnitMass) {
  const auto cloud = drifting_cloud(400, 10);
  const auto grid = flight_curve(1.5, 0.5, 10, 32.0, 512);
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    const MollifiedFamily<1> a(cloud, eps), b(grid, eps);
    for (double t : {0.0, 0.03, 0.5, 1.0, 1.3}) {
      EXPECT_NEAR(a.mass(t), 1.0, 1e-8) << eps << " " << t;
      EXPECT_NEAR(b.mass(t), 1.0, 1e-8) << eps << " " << t;
    }
  }
}

TEST(Mollifier, PositiveWithGaussianFloor) {
  const MollifiedFamily<1> fam(drifting_cloud(200, 5), 0.1);
  for (double x = -20.0; x <= 20.0; x += 0.37) {
    const double v = fam.density(0.4, Vec<1>(x));
    EXPECT_GE(v, 0.1 * gaussian_floor<1>(Vec<1>(x)));
    EXPECT_GT(v, 0.0);
  }
}

TEST(Mollifier, PeriodicGridWraps) {
  // A periodic density concentrated on the last cell also mollifies onto the first.
  GridDensity g;
  g.x0 = -2.0;
  g.h = 0.25;
  g.periodic = true;
  g.values.assign(16, 0.0);
  g.values.back() = 4.0;
  MeasureCurve<1> c;
  c.push_back(0.0, g);
  c.push_back(1.0, g);
  const MollifiedFamily<1> fam(c, 0.2);
  EXPECT_GT(fam.smoothed(0.5, Vec<1>(-2.1)), 0.1);
  EXPECT_NEAR(fam.smoothed(0.5, Vec<1>(-2.1)), fam.smoothed(0.5, Vec<1>(1.9)), 1e-12);
  EXPECT_NEAR(fam.mass(0.5), 1.0, 1e-8);
}

TEST(MollifyCoeffs, IdentityPassesThrough) {
  const MollifiedFamily<1> fam(drifting_cloud(300, 10), 0.2);
  const auto c = CoefficientField<1>::constant(Mat<1>(1.0), Vec<1>(0.0));
  for (double t : {0.3, 0.6, 1.0})
    for (double x : {-2.0, 0.0, 0.7, 5.0}) EXPECT_NEAR(mollify_coeffs(fam, c, t, Vec<1>(x)).a(0, 0), 1.0, 1e-13);
}

TEST(MollifyCoeffs, ZeroDriftLeavesGaussianPull) {
  const MollifiedFamily<1> fam(drifting_cloud(300, 10), 0.2);
  const auto c = CoefficientField<1>::constant(Mat<1>(1.0), Vec<1>(0.0));
  for (double x : {-2.0, 0.3, 4.0}) {
    const Vec<1> v(x);
    const double expect = -0.2 * gaussian_floor<1>(v) * x / fam.density(0.5, v);
    EXPECT_NEAR(mollify_coeffs(fam, c, 0.5, v).b(0), expect, 1e-14);
  }
}

TEST(MollifyCoeffs, SwitchedOffBeforeTheWindow) {
  const MollifiedFamily<1> fam(drifting_cloud(300, 10), 0.2);
  const auto c = CoefficientField<1>::constant(Mat<1>(1.0), Vec<1>(0.0));
  // At t = 0 every atom lies in the frozen region, so only the floor is left.
  const Vec<1> v(0.1);
  const double mu = fam.density(0.0, v);
  EXPECT_NEAR(mollify_coeffs(fam, c, 0.0, v).a(0, 0), 0.2 * gaussian_floor<1>(v) / mu, 1e-14);
}

TEST(MollifiedKernel, ZeroKernel) {
  const MollifiedFamily<1> fam(drifting_cloud(50, 4), 0.2);
  const auto f = mollified_kernel_functionals(fam, zero_kernel<1>(), 0.5, Vec<1>(0.0));
  EXPECT_EQ(f.g, 0.0);
  EXPECT_EQ(f.H(Vec<1>(1.0)), 0.0);
}

TEST(MollifiedKernel, ConstantKernelScalesByActiveMass) {
  const MollifiedFamily<1> fam(drifting_cloud(300, 10), 0.2);
  const auto k = isotropic_stable<1>(1.3);
  const Vec<1> x(0.4);
  const auto f = mollified_kernel_functionals(fam, k, 0.6, x);
  const double share = 0.8 * fam.smoothed(0.6, x) / fam.density(0.6, x);
  EXPECT_NEAR(f.g, share * oracle::stable_small_moment_1d(1.3, 0.5), 1e-8 * f.g);
  const double scale = 1.0 + std::abs(0.4 - 2.0);
  EXPECT_NEAR(f.H(Vec<1>(2.0)), share * oracle::stable_log_tail_1d(1.3, scale, 0.5), 1e-7 * f.H(Vec<1>(2.0)));
}

TEST(Regularization, EstimatesHoldAcrossEpsilon) {
  const auto curve = drifting_cloud(60, 10);
  const auto c = wavy_coefficients();
  const auto k = wavy_kernel();
  const auto probes = probe_line<1>({0.05, 0.5, 1.0}, -4.0, 4.0, 17);
  const std::vector<Vec<1>> shifts{Vec<1>(-2.0), Vec<1>(3.0)};
  QuadratureSpec q;
  q.outer_rtol = 1e-6;
  for (double eps : {0.4, 0.2, 0.1}) {
    const MollifiedFamily<1> fam(curve, eps);
    const auto r = check_regularization(fam, c, k, probes, shifts, q);
    for (const auto& l : r.lemma) EXPECT_TRUE(l.holds()) << eps << " " << l.name << " " << l.max_excess;
    EXPECT_TRUE(r.growth.holds()) << eps << " " << r.growth.max_excess;
    EXPECT_TRUE(r.shifted_tail.holds()) << eps << " " << r.shifted_tail.max_excess;
    EXPECT_TRUE(r.all_hold());
  }
}

TEST(Regularization, GrowthBoundFailsWithoutAnyBase) {
  // With a = b = 0 and no jumps the right side is 1. Away from the mass the
  // floor alone gives a^eps = 1 and |b^eps| = |x|, so the left side is
  // 1/(1+x^2) + |x|/(1+|x|), about 1.13 near |x| = 0.5.
  MeasureCurve<1> curve;
  curve.push_back(0.0, ParticleCloud<1>::uniform({Vec<1>(20.0)}));
  curve.push_back(1.0, ParticleCloud<1>::uniform({Vec<1>(20.0)}));
  const MollifiedFamily<1> fam(curve, 0.2);
  const auto probes = probe_line<1>({0.5}, -8.0, 8.0, 33);
  const auto r = check_regularization(fam, CoefficientField<1>::zero(), zero_kernel<1>(), probes, {});
  EXPECT_GT(r.growth.max_excess, 0.1);
}

TEST(WeakGap, ShrinksWithEpsilon) {
  const auto curve = flight_curve(1.5, 0.5, 10, 32.0, 512);
  const auto bank = TestBank<1>::standard();
  for (const auto& f : bank.functions) {
    double prev = kInf;
    for (double eps : {0.4, 0.2, 0.1, 0.05}) {
      const MollifiedFamily<1> fam(curve, eps);
      const double gap = weak_gap(fam, f, 0.5);
      EXPECT_LT(gap, prev) << f.name << " eps=" << eps;
      prev = gap;
    }
  }
}

TEST(GaussianFloor, Stationary) {
  for (const auto& f : TestBank<1>::standard(Vec<1>(0.3)).functions) {
    const double lo = f.center(0) - f.radius, hi = f.center(0) + f.radius;
    const double v = integrate_panels(
        [&](double x) {
          const Vec<1> y(x);
          return gaussian_floor<1>(y) * (f.hessian(y)(0, 0) - x * f.gradient(y)(0));
        },
        lo, hi, 64);
    EXPECT_NEAR(v, 0.0, 1e-12) << f.name;
  }
}

TEST(MollifiedFpe, StaticCurveZeroSystem) {
  GridDensity g;
  g.x0 = -16.0;
  g.h = 1.0 / 32;
  g.periodic = true;
  for (int i = 0; i < 1024; ++i) g.values.push_back(std::exp(-0.5 * std::pow(g.node(i) / 0.7, 2)));
  const double m = g.mass();
  for (double& v : g.values) v /= m;
  MeasureCurve<1> c;
  for (int j = 0; j <= 10; ++j) c.push_back(0.05 * j, g);
  const MollifiedFamily<1> fam(c, 0.1);
  const auto rep = verify_mollified_fpe(fam, CoefficientField<1>::zero(), zero_kernel<1>(), TestBank<1>::standard(), {0.25, 0.5});
  // Only the Gaussian floor moves mass, and it is stationary; what is left is
  // the node-sum error of the floor terms.
  EXPECT_LT(rep.max_abs(), 1e-6);
}

TEST(MollifiedFpe, FractionalHeatFlow) {
  const double alpha = 1.5;
  const auto k = isotropic_stable<1>(alpha);
  const auto bank = TestBank<1>::standard();
  const MollifiedFamily<1> fam(flight_curve(alpha, 1.0, 100, 64.0, 1024), 0.1);
  const auto rep = verify_mollified_fpe(fam, CoefficientField<1>::zero(), k, bank, {0.2, 0.5, 1.0});
  EXPECT_LT(rep.max_abs(), 5e-3);
}

TEST(MollifiedFpe, RefinementDecreases) {
  const double alpha = 1.5;
  const auto k = isotropic_stable<1>(alpha);
  const auto bank = TestBank<1>::standard(Vec<1>::Zero(), {1.0, 2.0});
  double prev = kInf;
  for (int level = 0; level < 3; ++level) {
    const int steps = 25 << level, n = 256 << level;
    const MollifiedFamily<1> fam(flight_curve(alpha, 0.5, steps, 32.0, n), 0.1);
    const double r = verify_mollified_fpe(fam, CoefficientField<1>::zero(), k, bank, {0.5}).max_abs();
    EXPECT_LT(r, prev) << level;
    if (level > 0) {
      EXPECT_GT(r, prev / 8.0) << level;
    }
    prev = r;
  }
}
