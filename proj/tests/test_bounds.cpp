#include "test_util.hpp"
#include "vaeconv/bounds.hpp"
#include "vaeconv/estimators.hpp"

#include <gtest/gtest.h>

using namespace vaeconv;
using namespace vaeconv::testing;

namespace {
DataMoments moments(double m2, double m4, double mx = std::numeric_limits<double>::infinity()) {
  DataMoments d;
  d.m2 = m2;
  d.m4 = m4;
  d.max_norm = mx;
  return d;
}
}  // namespace

TEST(Bounds, ChiMoments) {
  EXPECT_NEAR(chi_moment(2, 2), 2.0, 1e-14);
  EXPECT_NEAR(chi_moment(3, 4), 15.0, 1e-12);  // d(d+2)
  EXPECT_NEAR(chi_moment(1, 1), std::sqrt(2.0 / std::numbers::pi), 1e-15);
  EXPECT_NEAR(chi_moment(2, 1), std::sqrt(std::numbers::pi / 2.0), 1e-15);
}

TEST(Bounds, LeadingConstantsOneLayerEach) {
  // one layer per network: no hidden layers
  const DeepGaussianVae m = small_deep(3, 2, {}, {}, Activation::tanh(), 1, 1.0);
  const SmoothnessReport r = compute_bounds(m, moments(3, 15), 1);
  EXPECT_EQ(r.N_dd, 1);
  EXPECT_EQ(r.N_ed, 1);
  EXPECT_DOUBLE_EQ(r.C_S_leading, 4.0);
  EXPECT_DOUBLE_EQ(r.C_PW_leading, 4.0);
}

TEST(Bounds, LeadingConstantsRecomputeAndScaleInA) {
  const DeepGaussianVae m1 = small_deep(3, 2, {4}, {4}, Activation::tanh(), 1, 0.7);
  const DeepGaussianVae m2 = small_deep(3, 2, {4}, {4}, Activation::tanh(), 1, 1.4);
  const auto r1 = compute_bounds(m1, moments(3, 15), 1), r2 = compute_bounds(m2, moments(3, 15), 1);
  EXPECT_DOUBLE_EQ(r1.C_S_leading, 4.0 * 2 * std::pow(0.7, 2));
  EXPECT_DOUBLE_EQ(r1.C_PW_leading, 2.0 * 4 * std::pow(0.7, 6));
  EXPECT_NEAR(r2.C_S_leading / r1.C_S_leading, 4.0, 1e-12);
}

TEST(Bounds, FiniteAndPositive) {
  for (auto act : {Activation::tanh(), Activation::softplus(), Activation::celu(1.0), Activation::sigmoid()}) {
    const DeepGaussianVae m = small_deep(3, 2, {4}, {5}, act, 2, 1.0);
    const auto r = compute_bounds(m, moments(3, 15, 6), 4);
    for (const auto* b : {&r.L_S, &r.L_PW}) {
      ASSERT_TRUE(b->available());
      EXPECT_TRUE(std::isfinite(*b->value));
      EXPECT_GT(*b->value, 0);
    }
    EXPECT_FALSE(r.L_BBVI.available());
  }
}

TEST(Bounds, ReluAndUnboundedUnavailable) {
  const auto r = compute_bounds(small_deep(3, 2, {4}, {4}, Activation::relu(), 1, 1.0), moments(3, 15), 1);
  EXPECT_FALSE(r.L_S.available());
  EXPECT_NE(r.L_PW.str().find("ReLU"), std::string::npos);
  const auto u = compute_bounds(small_deep(3, 2, {4}, {4}, Activation::tanh(), 1), moments(3, 15), 1);
  EXPECT_FALSE(u.L_PW.available());
  EXPECT_EQ(u.L_PW.str().rfind("unavailable(", 0), 0u);
  EXPECT_THROW(compute_bounds(small_deep(3, 2, {4}, {4}, Activation::tanh(), 1, 1.0), moments(NAN, 1), 1),
               std::invalid_argument);
}

TEST(Bounds, IwaeTermOrdering) {
  DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), 3, 1.0);
  m.clamps.C_sigma = 0.3;
  m.clamps.c_sigma = 0.05;
  m.clamps.C_mu = 1.0;
  m.clamps.C_G = 2.0;
  const DataMoments dm = moments(3, 15, 5);
  const auto r1 = compute_bounds(m, dm, 1);
  EXPECT_EQ(*r1.L_K.value, *r1.L_PW.value);
  double prev = INFINITY;
  for (int K : {2, 3, 5, 10, 100, 10000, 100000000}) {
    const auto r = compute_bounds(m, dm, K);
    ASSERT_TRUE(r.L_K.available()) << r.L_K.str();
    EXPECT_LE(*r.L_K.value, prev);
    EXPECT_GE(*r.L_K.value, *r.L_PW.value);
    prev = *r.L_K.value;
  }
  // excess over L_PW decays like 1/K, so it vanishes as K grows
  const double e10 = *compute_bounds(m, dm, 10).L_K.value - *r1.L_PW.value;
  const double e1000 = *compute_bounds(m, dm, 1000).L_K.value - *r1.L_PW.value;
  EXPECT_NEAR(e1000 * 100.0 / e10, 1.0, 1e-9);
  // preconditions of the weight-ratio term
  EXPECT_FALSE(compute_bounds(m, moments(3, 15), 2).L_K.available());
  m.clamps.C_sigma = 0.5;
  EXPECT_FALSE(compute_bounds(m, dm, 2).L_K.available());
}

TEST(Bounds, PureFunction) {
  const DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), 4, 1.0);
  const auto a = compute_bounds(m, moments(3, 15), 1), b = compute_bounds(m, moments(3, 15), 1);
  EXPECT_EQ(*a.L_S.value, *b.L_S.value);
  EXPECT_EQ(*a.L_PW.value, *b.L_PW.value);
}

TEST(Bounds, BbviTargetSmoothness) {
  const DeepGaussianVae m = small_deep(1, 2, {4}, {4}, Activation::tanh(), 5, 1.0);
  Vec64 mu = Vec64::Zero(2), var = Vec64::Constant(2, 0.5);
  const auto t = gaussian_target(mu, var);
  const auto r = compute_bounds(m, moments(1, 3), 1, t.get());
  ASSERT_TRUE(r.L_BBVI.available());
  EXPECT_GT(*r.L_BBVI.value, 0.0);
  const auto bt = banana_target(0.5, 1.0);
  EXPECT_FALSE(compute_bounds(m, moments(1, 3), 1, bt.get()).L_BBVI.available());
}

TEST(Audit, IdenticalPairIsZero) {
  const auto r = audit_smoothness([](const Vec64& p) { return p; },
                                  [](int) { return std::make_pair(Vec64::Ones(3), Vec64::Ones(3)); }, 0.0, 5);
  EXPECT_EQ(r.max_ratio, 0.0);
  EXPECT_TRUE(r.pass());
  EXPECT_THROW(audit_smoothness([](const Vec64& p) { return p; }, [](int) { return std::make_pair(Vec64(), Vec64()); },
                                1.0, 0),
               std::invalid_argument);
}

TEST(Audit, LinearVaePerBlock) {
  const auto batch = rand_batch(20, 4, 1, 2.0);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    LinearVae a = init_linear(4, 2, 1.0, 0.5, RngKey(10, t));
    a.log_d = randn(2, t, 0.5);
    a.log_d = a.log_d.cwiseMax(std::log(a.c_d));
    LinearVae b = a;
    const double r = 0.01 + 0.5 * (t % 7);
    switch (t % 5) {
      case 0: b.W1 += randm(4, 2, t + 1, r); break;
      case 1: b.b1 += randn(4, t + 1, r); break;
      case 2: b.W2 += randm(2, 4, t + 1, r); break;
      case 3: b.b2 += randn(2, t + 1, r); break;
      default: b.log_d = (b.log_d + randn(2, t + 1, r)).cwiseMax(std::log(b.c_d)); break;
    }
    const LinearSmoothness L = linear_smoothness(a, b, batch);
    const LinearGrad ga = grad_linear_blocks(a, batch), gb = grad_linear_blocks(b, batch);
    double num = 0, den = 0, bound = 0;
    switch (t % 5) {
      case 0: num = (ga.W1 - gb.W1).norm(), den = (a.W1 - b.W1).norm(), bound = L.W1; break;
      case 1: num = (ga.b1 - gb.b1).norm(), den = (a.b1 - b.b1).norm(), bound = L.b1; break;
      case 2: num = (ga.W2 - gb.W2).norm(), den = (a.W2 - b.W2).norm(), bound = L.W2; break;
      case 3: num = (ga.b2 - gb.b2).norm(), den = (a.b2 - b.b2).norm(), bound = L.b2; break;
      default: num = (ga.D - gb.D).norm(), den = (a.d() - b.d()).norm(), bound = L.D; break;
    }
    if (den > 0 && num / den > bound * (1 + 1e-12)) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Audit, SmallRadiusHessianSlice) {
  // 2-parameter slice through a deep model: local Lipschitz ratio vs finite-difference Hessian norm
  const DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), 6, 1.0);
  const auto batch = rand_batch(4, 3, 6);
  const RngKey key(3);
  const Vec64 p0 = m.flatten();
  const int i0 = 1, i1 = m.theta_size() + 2;
  auto grad2 = [&](const Vec64& u) {
    DeepGaussianVae q = m;
    Vec64 p = p0;
    p[i0] += u[0];
    p[i1] += u[1];
    q.assign(p);
    const Vec64 g = pathwise_grad(q, Objective::elbo(), batch, 8, key, false, {false}).flat();
    Vec64 out(2);
    out << g[i0], g[i1];
    return out;
  };
  Mat64 H(2, 2);
  const double h = 1e-4;
  for (int j = 0; j < 2; ++j) {
    Vec64 e = Vec64::Zero(2);
    e[j] = h;
    H.col(j) = (grad2(e) - grad2(-e)) / (2 * h);
  }
  const double hn = spectral_norm(H);
  double mx = 0;
  for (int t = 0; t < 50; ++t) {
    const Vec64 d = randn(2, t, 1e-6);
    mx = std::max(mx, (grad2(d) - grad2(Vec64::Zero(2))).norm() / d.norm());
  }
  EXPECT_LE(mx, hn * (1 + 1e-3));
  EXPECT_GT(mx, 0.2 * hn);
}

TEST(Audit, DeepPairsStayInBall) {
  const DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), 7, 0.8);
  for (int t = 0; t < 100; ++t) {
    const auto [p, q] = sample_deep_pair(m, 0.3, RngKey(t));
    DeepGaussianVae a = m;
    a.assign(p);
    EXPECT_LE(param_norm_inf(a.decoder), 0.8 + 1e-12);
    EXPECT_LE(param_norm_inf(a.encoder), 0.8 + 1e-12);
    EXPECT_LE((p - q).norm(), 0.3 + 1e-12);
  }
}
