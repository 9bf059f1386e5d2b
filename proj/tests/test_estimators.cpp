#include "test_util.hpp"
#include "vaeconv/estimators.hpp"

#include <gtest/gtest.h>

using namespace vaeconv;
using namespace vaeconv::testing;

namespace {

// log_q(z|x) + 3 under a fixed copy of the model, so log w is constant
class ShiftedQ : public LogTarget {
 public:
  explicit ShiftedQ(DeepGaussianVae m) : m_(std::move(m)) {}
  double log_p(const Vec64& x, const Vec64& z, Vec64* g) const override {
    const EncoderOut e = encode(m_, x);
    if (g) *g = -(z - e.mu).cwiseQuotient(e.logvar.array().exp().matrix());
    return log_q(m_, x, z) + 3.0;
  }
  std::string name() const override { return "shifted_q"; }

 private:
  DeepGaussianVae m_;
};

// mean and SE per coordinate of a set of vectors
std::pair<Vec64, Vec64> coord_stats(const std::vector<Vec64>& v) {
  const int d = v[0].size();
  Vec64 m = Vec64::Zero(d), s = Vec64::Zero(d);
  for (const auto& x : v) m += x;
  m /= v.size();
  for (const auto& x : v) s += (x - m).cwiseAbs2();
  s = (s / (v.size() - 1.0) / v.size()).cwiseSqrt();
  return {m, s};
}

double frozen_objective(const DeepGaussianVae& m, const Objective& obj, const std::vector<Vec64>& batch, int K,
                        const RngKey& key, bool sampled_kl) {
  double acc = 0;
  for (int i = 0; i < (int)batch.size(); ++i) {
    std::vector<Vec64> eps;
    for (int l = 0; l < K; ++l) eps.push_back(noise_for(key, i, l, m.dz));
    if (obj.kind == ObjectiveKind::Iwae) {
      acc += iwae_objective(m, batch[i], eps);
    } else if (sampled_kl) {
      const EncoderOut en = encode(m, batch[i]);
      for (const auto& e : eps) {
        const Vec64 z = en.mu + (0.5 * en.logvar).array().exp().matrix().cwiseProduct(e);
        acc += (log_lik(m, batch[i], z) + obj.kl_weight() * (log_prior(z) - log_q(m, batch[i], z))) / K;
      }
    } else {
      acc += elbo_deep(m, batch[i], eps, obj.kl_weight());
    }
  }
  return acc / batch.size();
}

}  // namespace

TEST(Estimators, NoiseIsKeyedAndPrefixShared) {
  const RngKey k(5);
  EXPECT_EQ(noise_for(k, 2, 3, 4), noise_for(k, 2, 3, 4));
  EXPECT_NE(noise_for(k, 2, 3, 4), noise_for(k, 3, 2, 4));
  EXPECT_NE(noise_for(k, 2, 3, 4), noise_for(RngKey(6), 2, 3, 4));
}

TEST(Estimators, PathwiseMatchesFrozenNoiseFiniteDifferences) {
  const std::vector<Activation> acts{Activation::tanh(), Activation::softplus(), Activation::celu(1.0)};
  for (std::uint64_t s = 0; s < 12; ++s) {
    const DeepGaussianVae m = small_deep(3, 2, {5}, {4, 3}, acts[s % 3], s);
    const auto batch = rand_batch(3, 3, s);
    const RngKey key(s + 100);
    for (bool sampled : {false, true}) {
      const Objective obj = Objective::beta_elbo(0.5 + s % 3);
      const GradEstimate g = pathwise_grad(m, obj, batch, 2, key, sampled);
      const Vec64 fd = finite_diff_grad(
          [&](const Vec64& p) {
            DeepGaussianVae q = m;
            q.assign(p);
            return frozen_objective(q, obj, batch, 2, key, sampled);
          },
          m.flatten());
      EXPECT_LT(rel_error(g.flat(), fd), 1e-5) << "seed " << s << " sampled " << sampled;
    }
  }
}

TEST(Estimators, IwaeMatchesFrozenNoiseFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), s + 30);
    const auto batch = rand_batch(2, 3, s + 30);
    const RngKey key(s);
    const int K = 1 + s % 5;
    const GradEstimate g = iwae_grad(m, batch, K, key);
    const Vec64 fd = finite_diff_grad(
        [&](const Vec64& p) {
          DeepGaussianVae q = m;
          q.assign(p);
          return frozen_objective(q, Objective::iwae(K), batch, K, key, true);
        },
        m.flatten());
    EXPECT_LT(rel_error(g.flat(), fd), 1e-5) << "seed " << s;
    EXPECT_NEAR(g.objective, frozen_objective(m, Objective::iwae(K), batch, K, key, true), 1e-12);
  }
}

TEST(Estimators, IwaeKOneIdenticalToSampledPathwise) {
  const DeepGaussianVae m = small_deep(4, 2, {6}, {6}, Activation::tanh(), 3);
  const auto batch = rand_batch(5, 4, 3);
  const GradEstimate a = iwae_grad(m, batch, 1, RngKey(9));
  const GradEstimate b = pathwise_grad(m, Objective::elbo(), batch, 1, RngKey(9), true);
  EXPECT_EQ(a.flat(), b.flat());
  EXPECT_EQ(a.objective, b.objective);
}

TEST(Estimators, TermsLayoutAndMean) {
  const DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), 4);
  const auto batch = rand_batch(2, 3, 4);
  for (int which = 0; which < 3; ++which) {
    GradEstimate g = which == 0   ? pathwise_grad(m, Objective::elbo(), batch, 3, RngKey(1))
                     : which == 1 ? score_grad(m, Objective::elbo(), batch, 3, RngKey(1))
                                  : iwae_grad(m, batch, 3, RngKey(1));
    ASSERT_EQ(g.per_sample_terms.size(), 6u);
    Vec64 mean = Vec64::Zero(g.flat().size());
    for (const auto& t : g.per_sample_terms) mean += t;
    mean /= 6.0;
    EXPECT_LT((mean - g.flat()).norm(), 1e-12 * (1 + g.flat().norm()));
  }
  // row-major (i, l): term 1 of the pathwise estimate is element 0, sample 1
  const GradEstimate g = pathwise_grad(m, Objective::elbo(), batch, 3, RngKey(1));
  const SampleTerm t = sample_term(m, Objective::elbo(), batch[0], noise_for(RngKey(1), 0, 1, 2), TermMode::Analytic);
  EXPECT_EQ(g.per_sample_terms[1], t.grad);
  EstimatorOptions no;
  no.keep_terms = false;
  EXPECT_TRUE(pathwise_grad(m, Objective::elbo(), batch, 3, RngKey(1), false, no).per_sample_terms.empty());
}

TEST(Estimators, ScorePhiMeanZeroForConstantLogWeight) {
  const DeepGaussianVae m = small_deep(2, 2, {3}, {3}, Activation::tanh(), 5);
  const Objective obj = Objective::bbvi(std::make_shared<ShiftedQ>(m));
  const auto batch = rand_batch(1, 2, 5);
  EXPECT_NEAR(log_weight(m, batch[0], randn(2, 1), obj.target.get()), 3.0, 1e-12);
  const GradEstimate g = score_grad(m, obj, batch, 20000, RngKey(2));
  const auto [mean, se] = coord_stats(g.per_sample_terms);
  for (int j = m.theta_size(); j < mean.size(); ++j) EXPECT_LT(std::abs(mean[j]), 4 * se[j] + 1e-14) << j;
  EXPECT_EQ(g.flat_theta.norm(), 0.0);
}

TEST(Estimators, ScoreAndPathwiseAgreeInMean) {
  const DeepGaussianVae m = small_deep(2, 1, {3}, {3}, Activation::tanh(), 6);
  const auto batch = rand_batch(1, 2, 6);
  const int n = 100000;
  const GradEstimate s = score_grad(m, Objective::elbo(), batch, n, RngKey(1));
  const GradEstimate p = pathwise_grad(m, Objective::elbo(), batch, n, RngKey(2), true);
  const auto [ms, ss] = coord_stats(s.per_sample_terms);
  const auto [mp, sp] = coord_stats(p.per_sample_terms);
  for (int j = 0; j < ms.size(); ++j) {
    const double se = std::sqrt(ss[j] * ss[j] + sp[j] * sp[j]);
    EXPECT_LT(std::abs(ms[j] - mp[j]), 3.5 * se + 1e-12) << j;
  }
}

TEST(Estimators, AnalyticAndSampledKlAgreeInMean) {
  const DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), 7);
  const auto batch = rand_batch(1, 3, 7);
  const int n = 50000;
  const GradEstimate a = pathwise_grad(m, Objective::elbo(), batch, n, RngKey(3), false);
  const GradEstimate b = pathwise_grad(m, Objective::elbo(), batch, n, RngKey(4), true);
  const auto [ma, sa] = coord_stats(a.per_sample_terms);
  const auto [mb, sb] = coord_stats(b.per_sample_terms);
  for (int j = 0; j < ma.size(); ++j)
    EXPECT_LT(std::abs(ma[j] - mb[j]), 3.5 * std::sqrt(sa[j] * sa[j] + sb[j] * sb[j]) + 1e-12) << j;
}

TEST(Estimators, BbviLinearGaussianStationaryAtTarget) {
  // encoder with zero weights: q(z) = N(b_mu, exp(b_lv)); target N(mu*, v*)
  DeepGaussianVae m = small_deep(1, 2, {2}, {2}, Activation::tanh(), 8);
  m.clamps.c_sigma = 0.1;
  m.clamps.C_sigma = 10.0;
  for (auto& l : m.encoder.layers) {
    l.W.setZero();
    l.b.setZero();
  }
  Vec64 mu(2), var(2);
  mu << 0.0, 0.0;
  var << 1.0, 1.0;
  const Objective obj = Objective::bbvi(gaussian_target(mu, var));
  const GradEstimate g = pathwise_grad(m, obj, {Vec64::Zero(1)}, 20000, RngKey(1));
  const auto [mean, se] = coord_stats(g.per_sample_terms);
  for (int j = m.theta_size(); j < mean.size(); ++j) EXPECT_LT(std::abs(mean[j]), 4 * se[j] + 1e-14) << j;
  // a shifted target moves the mean gradient away from zero
  mu << 1.0, -1.0;
  const Objective off = Objective::bbvi(gaussian_target(mu, var));
  EXPECT_GT(pathwise_grad(m, off, {Vec64::Zero(1)}, 2000, RngKey(1)).flat_phi.norm(), 0.5);
}

TEST(Estimators, DeterministicAcrossThreads) {
  const DeepGaussianVae m = small_deep(4, 2, {8}, {8}, Activation::tanh(), 9);
  const auto batch = rand_batch(16, 4, 9);
  std::vector<Vec64> ref;
  for (int t : {1, 2, 4}) {
    set_num_threads(t);
    std::vector<Vec64> got{pathwise_grad(m, Objective::elbo(), batch, 4, RngKey(7)).flat(),
                           score_grad(m, Objective::elbo(), batch, 4, RngKey(7)).flat(),
                           iwae_grad(m, batch, 4, RngKey(7)).flat()};
    if (ref.empty()) ref = got;
    for (int i = 0; i < 3; ++i) EXPECT_EQ(got[i], ref[i]) << "threads " << t;
  }
  set_num_threads(1);
}

TEST(Estimators, ExceptionsPropagateFromWorkers) {
  const DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), 10);
  EXPECT_THROW(pathwise_grad(m, Objective::elbo(), {Vec64::Zero(2)}, 1, RngKey(1)), std::invalid_argument);
  EXPECT_THROW(pathwise_grad(m, Objective::elbo(), {}, 1, RngKey(1)), std::invalid_argument);
  EXPECT_THROW(iwae_grad(m, rand_batch(1, 3, 1), 0, RngKey(1)), std::invalid_argument);
}

TEST(Estimators, GradLinearMatchesBlocks) {
  const LinearVae m = init_linear(4, 2, 0.8, 0.5, RngKey(1));
  const auto batch = rand_batch(6, 4, 1);
  const GradEstimate g = grad_linear(m, batch);
  const LinearGrad b = grad_linear_blocks(m, batch);
  EXPECT_EQ(g.flat_phi.tail(2), b.D);
  EXPECT_EQ(g.kind, EstimatorKind::Exact);
  EXPECT_EQ(g.flat().size(), m.flatten_d().size());
  EXPECT_DOUBLE_EQ(g.objective, elbo_linear_mean(m, batch));
}

// ---- SNR ----

TEST(Snr, DeterministicIsInfinite) {
  const LinearVae m = init_linear(3, 2, 0.8, 0.5, RngKey(1));
  std::vector<GradEstimate> es(30, grad_linear(m, rand_batch(4, 3, 1)));
  const Snr s = snr_measure(es);
  EXPECT_TRUE(std::isinf(s.theta));
  EXPECT_TRUE(std::isinf(s.phi));
}

TEST(Snr, RequiresThirtyEstimates) {
  const LinearVae m = init_linear(3, 2, 0.8, 0.5, RngKey(1));
  std::vector<GradEstimate> es(29, grad_linear(m, rand_batch(4, 3, 1)));
  EXPECT_THROW(snr_measure(es), std::invalid_argument);
  es.push_back(es[0]);
  EXPECT_NO_THROW(snr_measure(es));
}

TEST(Snr, KnownRatio) {
  // theta block: coords with mean 2, sd 1 (exactly, by construction of a balanced sample)
  std::vector<GradEstimate> es;
  for (int r = 0; r < 40; ++r) {
    GradEstimate g;
    g.flat_theta = Vec64::Constant(1, 2.0 + (r % 2 ? 1.0 : -1.0));
    g.flat_phi = Vec64::Constant(1, r % 2 ? 1.0 : -1.0);
    es.push_back(g);
  }
  const Snr s = snr_measure(es);
  const double sd = std::sqrt(40.0 / 39.0);
  EXPECT_NEAR(s.theta, 2.0 / sd, 1e-12);
  EXPECT_NEAR(s.phi, 0.0, 1e-15);
}

TEST(Snr, ThetaRisesWithK) {
  const DeepGaussianVae m = small_deep(3, 2, {4}, {4}, Activation::tanh(), 11);
  const auto batch = rand_batch(4, 3, 11);
  auto snr_at = [&](int K) {
    std::vector<GradEstimate> es;
    for (int r = 0; r < 100; ++r) es.push_back(iwae_grad(m, batch, K, RngKey(12, r), {false}));
    return snr_measure(es);
  };
  const Snr a = snr_at(1), b = snr_at(32);
  EXPECT_GT(b.theta, a.theta);
}
