#include "nlfp/fpe_residual.hpp"
#include "support/stable_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nlfp;

namespace {

MeasureCurve<1> stable_flight_curve(double alpha, double T, int steps, double width = 64.0, int n = 1024) {
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

MeasureCurve<1> static_cloud(int n, int steps) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  std::vector<Vec<1>> pos;
  for (int i = 0; i < n; ++i) pos.emplace_back(nd(rng));
  MeasureCurve<1> c;
  for (int j = 0; j <= steps; ++j) c.push_back(0.1 * j, ParticleCloud<1>::uniform(pos));
  return c;
}

}  // namespace

TEST(Residual, StaticCurveZeroOperator) {
  const auto curve = static_cloud(500, 10);
  const auto rep = residual(curve, CoefficientField<1>::zero(), zero_kernel<1>(), TestBank<1>::standard(), {0.0, 0.5, 1.0});
  EXPECT_EQ(rep.max_abs(), 0.0);
  EXPECT_EQ(rep.functions.size(), 8u);
}

TEST(Residual, ZeroAtStartAndLinear) {
  const auto curve = stable_flight_curve(1.5, 0.2, 10, 32.0, 512);
  const auto k = isotropic_stable<1>(1.5);
  TestBank<1> bank = TestBank<1>::standard(Vec<1>(0.0), {1.0, 2.0});
  const auto f = bank.functions[0], g = bank.functions[3];
  bank.functions.push_back(combine(2.0, f, -0.5, g));
  const auto rep = residual(curve, CoefficientField<1>::zero(), k, bank, {0.0, 0.1, 0.2});
  for (const auto& row : rep.residual) EXPECT_EQ(row[0], 0.0);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(rep.residual[4][j], 2.0 * rep.residual[0][j] - 0.5 * rep.residual[3][j], 1e-9);
}

TEST(Residual, RejectsOffGridTimes) {
  const auto curve = static_cloud(100, 4);
  EXPECT_THROW(residual(curve, CoefficientField<1>::zero(), zero_kernel<1>(), TestBank<1>::standard(), {0.15}), ValidationError);
}

TEST(Residual, StableFlightOracle) {
  const double alpha = 1.5;
  const auto k = isotropic_stable<1>(alpha);
  const auto bank = TestBank<1>::standard();
  const auto coarse = residual(stable_flight_curve(alpha, 1.0, 50), CoefficientField<1>::zero(), k, bank, {0.2, 0.5, 1.0});
  EXPECT_LT(coarse.max_scaled(), 1e-2);
  const auto fine = residual(stable_flight_curve(alpha, 1.0, 100), CoefficientField<1>::zero(), k, bank, {0.2, 0.5, 1.0});
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double a = std::abs(coarse.residual[i][2]), b = std::abs(fine.residual[i][2]);
    EXPECT_GE(a / b, 1.5) << coarse.functions[i];
    EXPECT_LT(b, coarse.error[i][2] + a) << coarse.functions[i];
  }
}

TEST(Integrability, BoundedCoefficientsFinite) {
  const auto curve = static_cloud(400, 8);
  CoefficientField<1> c = CoefficientField<1>::constant(Mat<1>(0.5), Vec<1>(1.0));
  const auto k = isotropic_stable<1>(1.2);
  const auto rep = integrability_report(curve, c, k, {1.0, 2.0, 4.0, 8.0}, 0.8);
  ASSERT_EQ(rep.size(), 4u);
  for (const auto& e : rep) {
    EXPECT_FALSE(e.diverged());
    EXPECT_GT(e.local_terms, 0.0);
    EXPECT_GT(e.tail_terms, 0.0);
  }
  // Stationary curve: int_0^T of a constant.
  const double g = small_jump_moment(k, 0.0, Vec<1>(0.0)).value;
  EXPECT_NEAR(rep[3].local_terms, 0.8 * (0.5 + 1.0 + g), 1e-9);
  EXPECT_NEAR(rep[3].tail_terms, 0.8 * 2.0 * tail_mass(k, 0.0, Vec<1>(0.0), 0.5).value, 1e-6);
}

TEST(Integrability, NoJumpsNoTail) {
  const auto rep = integrability_report(static_cloud(100, 4), CoefficientField<1>::constant(Mat<1>(1.0), Vec<1>(0.0)),
                                        zero_kernel<1>(), {2.0}, 0.4);
  EXPECT_EQ(rep[0].tail_terms, 0.0);
}
