#include "kalman.hpp"
#include "test_util.hpp"
#include "vaeconv/seqvae.hpp"

#include <gtest/gtest.h>

using namespace vaeconv;
using namespace vaeconv::testing;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Ssm scalar_ssm(double A, double C, double tm2, double tg2) {
  return linear_ssm(Mat64::Constant(1, 1, A), Mat64::Constant(1, 1, C), tm2, tg2);
}

BackwardVariational rand_backward(int dz, int T, bool shared, std::uint64_t seed) {
  Clamps cl;
  cl.c_sigma = 0.05;
  cl.C_sigma = 5.0;
  cl.C_mu = 6.0;
  BackwardVariational q = init_backward(dz, T, shared, {3}, Activation::tanh(), cl, true, RngKey(seed));
  q.terminal_raw = randn(2 * dz, seed + 7, 0.5);
  return q;
}

Vec64 stacked(const Ssm& s, const BackwardVariational& q) {
  Vec64 v(s.theta_size() + q.phi_size());
  v << s.flatten(), q.flatten();
  return v;
}

}  // namespace

TEST(Simulate, SingleStep) {
  const Ssm s = make_ssm(2, 3, {4}, Activation::tanh(), 5.0, 0.5, 0.5, RngKey(1));
  const Trajectory tr = simulate(s, 0, RngKey(2));
  EXPECT_EQ(tr.z.rows(), 1);
  EXPECT_EQ(tr.x.rows(), 1);
  EXPECT_EQ(tr.x.cols(), 3);
  EXPECT_EQ(simulate(s, 5, RngKey(2)).x, simulate(s, 5, RngKey(2)).x);
  EXPECT_THROW(simulate(s, -1, RngKey(2)), std::invalid_argument);
}

TEST(Simulate, DegenerateNoise) {
  const Ssm s = scalar_ssm(0.0, 1.0, 1e-12, 0.1);  // tau_m = 1e-6
  const Trajectory tr = simulate(s, 50, RngKey(3));
  EXPECT_LT(tr.z.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Simulate, Ar1StationaryVariance) {
  const Ssm s = scalar_ssm(0.5, 1.0, 0.7, 0.1);
  const Trajectory tr = simulate(s, 100000, RngKey(4));
  const double m = tr.z.mean();
  const double v = (tr.z.array() - m).square().mean();
  EXPECT_NEAR(v / (0.7 / 0.75), 1.0, 0.05);
}

TEST(Simulate, StateClampHolds) {
  const Ssm s = make_ssm(2, 2, {8}, Activation::tanh(), 2.0, 1e-6, 0.1, RngKey(5));
  Ssm big = s;
  for (auto& l : big.trans.layers) l.W *= 50.0;
  const Trajectory tr = simulate(big, 200, RngKey(6));
  for (int t = 1; t <= 200; ++t) EXPECT_LE(tr.z.row(t).cwiseAbs().maxCoeff(), 2.0 + 0.01);
}

TEST(SeqElbo, SingleStepReduction) {
  const Ssm s = scalar_ssm(0.8, 1.3, 0.6, 0.4);
  BackwardVariational q = rand_backward(1, 0, true, 1);
  q.clamp_heads = false;
  Mat64 x(1, 1);
  x << 0.7;
  const SeqNoise eps{Vec64::Constant(1, 0.3)};
  const double mu = q.terminal_raw[0], lv = q.terminal_raw[1];
  const double z = mu + std::exp(0.5 * lv) * 0.3;
  const double prior = -0.5 * std::log(2 * std::numbers::pi * 0.6) - z * z / 1.2;
  const double emis = -0.5 * std::log(2 * std::numbers::pi * 0.4) - (0.7 - 1.3 * z) * (0.7 - 1.3 * z) / 0.8;
  const double lq = -0.5 * (lv + kLog2Pi + 0.09);
  EXPECT_NEAR(seq_term(s, q, x, eps, false).value, prior + emis - lq, 1e-13);
}

TEST(SeqElbo, BelowKalmanEvidence) {
  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double A = 0.3 + 0.05 * (trial % 10), C = 0.5 + 0.1 * (trial % 7);
    const Ssm s = scalar_ssm(A, C, 0.5, 0.3);
    const Trajectory tr = simulate(s, 6, RngKey(100, trial));
    const double le = kalman_filter(A, C, 0.5, 0.3, tr.x).log_evidence;
    const BackwardVariational q = rand_backward(1, 6, trial % 2, trial);
    std::vector<double> v;
    for (int l = 0; l < 200; ++l) v.push_back(seq_term(s, q, tr.x, seq_noise(RngKey(trial), l, 6, 1), false).value);
    const Ms ms = mean_sd(v);
    bad += ms.mean > le + 3 * ms.se;
  }
  EXPECT_EQ(bad, 0);
}

TEST(SeqElbo, ExactBackwardGivesEvidence) {
  for (int trial = 0; trial < 10; ++trial) {
    const double A = 0.7, C = 1.1, tm2 = 0.5, tg2 = 0.2;
    const Ssm s = scalar_ssm(A, C, tm2, tg2);
    const Trajectory tr = simulate(s, 10, RngKey(7, trial));
    const KalmanResult kf = kalman_filter(A, C, tm2, tg2, tr.x);
    const BackwardVariational q = exact_backward(A, tm2, kf);
    // log w is constant under the exact posterior, so every draw gives the evidence
    for (int l = 0; l < 20; ++l)
      EXPECT_NEAR(seq_term(s, q, tr.x, seq_noise(RngKey(trial), l, 10, 1), false).value, kf.log_evidence, 1e-9);
  }
}

TEST(SeqGrad, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const int dz = 1 + seed % 2, T = 1 + seed % 4;
    const Ssm s = make_ssm(dz, 2, {3}, Activation::tanh(), 3.0, 0.6, 0.4, RngKey(seed));
    const BackwardVariational q = rand_backward(dz, T, seed % 2 == 0, seed + 10);
    const Trajectory tr = simulate(s, T, RngKey(seed + 20));
    const RngKey key(seed + 30);
    const GradEstimate g = seq_pathwise_grad(s, q, tr.x, 3, key);
    const Vec64 fd = finite_diff_grad(
        [&](const Vec64& p) {
          Ssm s2 = s;
          BackwardVariational q2 = q;
          s2.assign(p.head(s.theta_size()));
          q2.assign(p.tail(q.phi_size()));
          return seq_elbo(s2, q2, tr.x, 3, key);
        },
        stacked(s, q));
    EXPECT_LT(rel_error(g.flat(), fd), 1e-4) << "seed " << seed;
  }
}

TEST(SeqGrad, SingleStepUnusedNetsGetZero) {
  const Ssm s = make_ssm(2, 2, {3}, Activation::tanh(), 3.0, 0.6, 0.4, RngKey(1));
  const BackwardVariational q = rand_backward(2, 0, true, 2);
  ASSERT_EQ(q.nets.size(), 1u);
  Mat64 x = randm(1, 2, 3);
  const GradEstimate g = seq_pathwise_grad(s, q, x, 4, RngKey(4));
  EXPECT_EQ(g.flat_phi.tail(q.nets[0].num_params()).norm(), 0.0);
  EXPECT_EQ(g.flat_theta.head(s.trans.num_params()).norm(), 0.0);
  EXPECT_GT(g.flat_phi.head(4).norm(), 0.0);
}

TEST(SeqGrad, SingleStepEqualsStaticVae) {
  // unit prior variance, encoder with constant output = terminal raw
  const Ssm s = make_ssm(2, 3, {4}, Activation::tanh(), 3.0, 1.0, 0.4, RngKey(2));
  const BackwardVariational q = rand_backward(2, 0, true, 3);
  DeepGaussianVae m;
  m.dx = 3;
  m.dz = 2;
  m.c2 = 0.4;
  m.clamps = q.clamps;
  m.decoder = s.emit;
  m.encoder.layers.push_back({Mat64::Zero(4, 3), q.terminal_raw, Activation::identity()});
  m.encoder.a = m.decoder.a = std::numeric_limits<double>::infinity();
  const Vec64 x = randn(3, 5);
  const SeqNoise eps{randn(2, 6)};
  const SeqTerm st = seq_term(s, q, x.transpose(), eps, true);
  const SampleTerm vt = sample_term(m, Objective::elbo(), x, eps[0], TermMode::Sampled);
  EXPECT_NEAR(st.value, vt.log_w, 1e-12);
  EXPECT_LT((st.grad_theta.tail(s.emit.num_params()) - vt.grad.head(m.theta_size())).norm(), 1e-12);
  // encoder bias gradient is the terminal gradient
  EXPECT_LT((st.grad_phi.head(4) - vt.grad.tail(4)).norm(), 1e-12);
}

TEST(SeqTrain, RecordsAndDeterminism) {
  const Ssm truth = scalar_ssm(0.6, 1.0, 0.5, 0.3);
  std::vector<Mat64> data;
  for (int i = 0; i < 3; ++i) data.push_back(simulate(truth, 5, RngKey(9, i)).x);
  auto run = [&] {
    Ssm s = make_ssm(1, 1, {3}, Activation::tanh(), 5.0, 0.5, 0.3, RngKey(1));
    BackwardVariational q = rand_backward(1, 5, true, 2);
    SeqTrainOptions o;
    o.iterations = 50;
    o.eval_every = 10;
    o.eval_mc = 8;
    return train_seq(s, q, data, o, RngKey(3));
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 6u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].iter, long(10 * i));
    EXPECT_EQ(a[i].grad_norm_sq, b[i].grad_norm_sq);
    EXPECT_GE(a[i].grad_norm_sq, 0.0);
  }
}
