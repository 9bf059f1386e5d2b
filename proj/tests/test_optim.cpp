#include "test_util.hpp"
#include "vaeconv/optim.hpp"

#include <gtest/gtest.h>

using namespace vaeconv;
using namespace vaeconv::testing;

TEST(Adam, FirstStepMagnitude) {
  // zero state, no bias correction: 0.1 * (0.1 * 2) / sqrt(0.001 * 4)
  const auto [s, p] = step(make_adam(1, 0.1, 0.9, 0.999, 0.0), Vec64::Zero(1), Vec64::Constant(1, 2.0));
  EXPECT_NEAR(p[0], 0.1 * (0.1 * 2) / std::sqrt(0.001 * 4), 1e-12);
  EXPECT_NEAR(p[0], 0.316228, 1e-6);
  EXPECT_EQ(s.k, 1);
  // sign follows the gradient (ascent)
  EXPECT_LT(step(make_adam(1, 0.1, 0.9, 0.999, 0.0), Vec64::Zero(1), Vec64::Constant(1, -2.0)).second[0], 0.0);
}

TEST(Adam, ConstantGradientUpdateOracle) {
  // no bias correction: update_k = gamma_k (1 - b1^k) / sqrt(1 - b2^k)
  OptimState s = make_adam(1, 0.01, 0.9, 0.999, 0.0);
  Vec64 p = Vec64::Zero(1);
  for (int k = 1; k <= 200; ++k) {
    const double before = p[0];
    step_inplace(s, p, Vec64::Constant(1, 3.0));
    const double oracle = 0.01 / std::sqrt(double(k)) * (1 - std::pow(0.9, k)) / std::sqrt(1 - std::pow(0.999, k));
    EXPECT_NEAR(p[0] - before, oracle, 1e-14) << k;
  }
}

TEST(Adam, LargeDeltaIsScaledSgd) {
  OptimState a = make_adam(3, 0.5, 0.0, 1e-12, 1e6);
  OptimState g = make_sgd(3, 0.5 / std::sqrt(1e6));
  Vec64 pa = Vec64::Zero(3), pg = Vec64::Zero(3);
  for (int k = 0; k < 50; ++k) {
    const Vec64 grad = randn(3, k);
    step_inplace(a, pa, grad);
    step_inplace(g, pg, grad);
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(pa[i], pg[i], 0.01 * std::abs(pg[i]));
}

TEST(Sgd, AscentStep) {
  const auto [s, p] = step(make_sgd(2, 0.5), Vec64::Ones(2), Vec64::Constant(2, 2.0));
  EXPECT_EQ(p, Vec64::Constant(2, 2.0));
  const auto [s2, p2] = step(s, p, Vec64::Constant(2, 2.0));
  EXPECT_NEAR(p2[0], 2.0 + 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Schedule, Examples) {
  EXPECT_DOUBLE_EQ(step_size(1e-3, 1), 1e-3);
  EXPECT_DOUBLE_EQ(step_size(1e-3, 100), 1e-4);
  EXPECT_DOUBLE_EQ(make_schedule(2.0)(4), 1.0);
  EXPECT_THROW(step_size(1e-3, 0), std::invalid_argument);
  EXPECT_THROW(step_size(0.0, 1), std::invalid_argument);
  EXPECT_THROW(make_schedule(-1.0), std::invalid_argument);
}

TEST(Schedule, SquaredSumBound) {
  for (double C : {1e-3, 0.1, 3.0}) {
    double s = 0;
    for (long n = 1; n <= 100000; ++n) {
      s += step_size(C, n) * step_size(C, n);
      if (n % 997 == 0 || n < 50) EXPECT_LE(s, C * C * (1 + std::log(double(n))) * (1 + 1e-14)) << n;
    }
  }
}

TEST(Optim, NonFiniteGradientNamesCoordinate) {
  Vec64 g = Vec64::Ones(4);
  g[2] = std::nan("");
  try {
    step(make_adam(4, 0.1), Vec64::Zero(4), g);
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 2"), std::string::npos);
  }
  g[2] = 1.0;
  g[0] = INFINITY;
  EXPECT_THROW(step(make_sgd(4, 0.1), Vec64::Zero(4), g), std::domain_error);
}

TEST(Optim, Validation) {
  EXPECT_THROW(make_adam(2, 0.1, 0.99, 0.5), std::invalid_argument);  // beta1 >= sqrt(beta2)
  EXPECT_THROW(make_adam(2, 0.1, 0.9, 1.0), std::invalid_argument);
  EXPECT_THROW(make_adam(2, 0.0), std::invalid_argument);
  EXPECT_THROW(make_adam(2, 0.1, 0.9, 0.999, -1.0), std::invalid_argument);
  EXPECT_THROW(step(make_sgd(2, 0.1), Vec64::Zero(2), Vec64::Zero(3)), std::invalid_argument);
}

TEST(Optim, StepIsPure) {
  const OptimState s0 = make_adam(3, 0.1);
  const Vec64 p0 = randn(3, 1), g = randn(3, 2);
  const auto [s1, p1] = step(s0, p0, g);
  const auto [s1b, p1b] = step(s0, p0, g);
  EXPECT_EQ(p1, p1b);
  EXPECT_EQ(s1.m, s1b.m);
  EXPECT_EQ(s1.v, s1b.v);
  EXPECT_EQ(s0.k, 0);
  EXPECT_EQ(s0.m, Vec64::Zero(3));
  // replay from a saved state reproduces the trajectory
  OptimState a = s0;
  Vec64 pa = p0;
  for (int k = 0; k < 20; ++k) step_inplace(a, pa, randn(3, 10 + k));
  OptimState b = s0;
  Vec64 pb = p0;
  for (int k = 0; k < 10; ++k) step_inplace(b, pb, randn(3, 10 + k));
  OptimState saved = b;
  Vec64 ps = pb;
  for (int k = 10; k < 20; ++k) step_inplace(saved, ps, randn(3, 10 + k));
  EXPECT_EQ(ps, pa);
}

TEST(Optim, AdamStepBoundedByRate) {
  // |update_i| <= gamma_k (1 - b1^k)/sqrt(1 - b2) for any gradient sequence
  OptimState s = make_adam(5, 0.2);
  Vec64 p = Vec64::Zero(5);
  for (int k = 1; k <= 300; ++k) {
    const Vec64 before = p;
    step_inplace(s, p, randn(5, k, k % 7 == 0 ? 1e3 : 1.0));
    const double cap = step_size(0.2, k) * (1 - std::pow(0.9, k)) / std::sqrt(1 - 0.999);
    EXPECT_LE((p - before).cwiseAbs().maxCoeff(), cap * (1 + 1e-12));
  }
}
