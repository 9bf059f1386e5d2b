#include "vaeconv/estimators.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vaeconv {

namespace {
int g_threads = 1;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

Vec64 GradEstimate::flat() const {
  Vec64 out(flat_theta.size() + flat_phi.size());
  out << flat_theta, flat_phi;
  return out;
}

Vec64 noise_for(const RngKey& key, int i, int l, int dz) {
  const std::uint64_t s = (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint32_t>(l);
  return gauss_sample(key.with_tag(Purpose::Noise).with_sample(s), dz);
}

SampleTerm sample_term(const DeepGaussianVae& m, const Objective& obj, const Vec64& x, const Vec64& eps,
                       TermMode mode) {
  const bool bbvi = obj.kind == ObjectiveKind::Bbvi;
  const double beta = obj.kl_weight();
  const int dz = m.dz;
  const int nt = m.theta_size();

  const EncoderOut e = encode(m, x);
  const Vec64 sd = (0.5 * e.logvar).array().exp();
  const Vec64 z = e.mu + sd.cwiseProduct(eps);

  SampleTerm out;
  out.grad = Vec64::Zero(nt + m.phi_size());

  // sampled part: log p(x|z) (VAE) or log target (BBVI), with its z-gradient
  double lp_s = 0.0;
  Vec64 dz_s;
  if (bbvi) {
    lp_s = obj.target->log_p(x, z, &dz_s);
  } else {
    ForwardTrace tr;
    const Vec64 g = forward(m.decoder, z, &tr);
    const Vec64 r = x - g;
    lp_s = -r.squaredNorm() / (2.0 * m.c2) - 0.5 * m.dx * std::log(2.0 * std::numbers::pi * m.c2);
    Vec64 dth;
    backprop(m.decoder, tr, r / m.c2, &dth, mode == TermMode::Score ? nullptr : &dz_s);
    out.grad.head(nt) = dth;
  }
  const double lq = -0.5 * (e.logvar.sum() + dz * kLog2Pi + eps.squaredNorm());
  const double lprior = bbvi ? 0.0 : log_prior(z);
  out.log_w = lp_s + beta * (lprior - lq);

  Vec64 dmu(dz), dl(dz);
  switch (mode) {
    case TermMode::Analytic: {
      if (bbvi) {
        const double ent = 0.5 * (e.logvar.sum() + dz * (kLog2Pi + 1.0));
        out.value = lp_s + beta * ent;
        dmu = dz_s;
        dl = 0.5 * dz_s.cwiseProduct(eps).cwiseProduct(sd) + Vec64::Constant(dz, 0.5 * beta);
      } else {
        out.value = lp_s - beta * kl_diag_gauss(e.mu, e.logvar);
        dmu = dz_s - beta * e.mu;
        dl = 0.5 * dz_s.cwiseProduct(eps).cwiseProduct(sd) -
             0.5 * beta * (e.logvar.array().exp() - 1.0).matrix();
      }
      break;
    }
    case TermMode::Sampled: {
      out.value = out.log_w;
      // total derivative of log w through z = mu + sd * eps, plus the direct -log q terms
      Vec64 dzt = dz_s + beta * eps.cwiseQuotient(sd);
      if (!bbvi) dzt -= beta * z;
      dmu = dzt - beta * eps.cwiseQuotient(sd);
      dl = 0.5 * dzt.cwiseProduct(eps).cwiseProduct(sd) +
           0.5 * beta * (Vec64::Ones(dz) - eps.cwiseProduct(eps));
      break;
    }
    case TermMode::Score: {
      out.value = out.log_w;
      // grad_phi log q at fixed z
      dmu = out.log_w * eps.cwiseQuotient(sd);
      dl = out.log_w * 0.5 * (eps.cwiseProduct(eps) - Vec64::Ones(dz));
      break;
    }
  }
  if (bbvi) out.grad.head(nt).setZero();

  Vec64 up(2 * dz);
  up.head(dz) = dmu.cwiseProduct(act_d1(m.mu_head(), Vec64(e.raw.head(dz))));
  up.tail(dz) = dl.cwiseProduct(act_d1(m.logvar_head(), Vec64(e.raw.tail(dz))));
  Vec64 dph;
  backprop(m.encoder, e.trace, up, &dph, nullptr);
  out.grad.tail(m.phi_size()) = dph;
  return out;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errs(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(g_threads)
#endif
  for (int j = 0; j < n; ++j) {
    try {
      fn(j);
    } catch (...) {
      errs[j] = std::current_exception();
    }
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

namespace {

void check_args(const DeepGaussianVae& m, const std::vector<Vec64>& batch, int K) {
  if (K < 1) throw std::invalid_argument("estimator: K must be >= 1");
  if (batch.empty()) throw std::invalid_argument("estimator: empty batch");
  for (const auto& x : batch)
    if (x.size() != m.dx) throw std::invalid_argument("estimator: data dimension mismatch");
}

GradEstimate reduce(const DeepGaussianVae& m, std::vector<SampleTerm>& terms, int B, int K, EstimatorKind kind,
                    bool keep) {
  const int n = B * K;
  Vec64 acc = Vec64::Zero(m.theta_size() + m.phi_size());
  double obj = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += terms[j].grad;
    obj += terms[j].value;
  }
  acc /= static_cast<double>(n);
  GradEstimate g;
  g.flat_theta = acc.head(m.theta_size());
  g.flat_phi = acc.tail(m.phi_size());
  g.B = B;
  g.K = K;
  g.kind = kind;
  g.objective = obj / static_cast<double>(n);
  if (keep) {
    g.per_sample_terms.reserve(n);
    for (auto& t : terms) g.per_sample_terms.push_back(std::move(t.grad));
  }
  return g;
}

GradEstimate plain(const DeepGaussianVae& m, const Objective& obj, const std::vector<Vec64>& batch, int K,
                   const RngKey& key, TermMode mode, EstimatorKind kind, const EstimatorOptions& opt) {
  check_args(m, batch, K);
  const int B = static_cast<int>(batch.size());
  std::vector<SampleTerm> terms(B * K);
  parallel_for(B * K, [&](int j) {
    const int i = j / K, l = j % K;
    terms[j] = sample_term(m, obj, batch[i], noise_for(key, i, l, m.dz), mode);
  });
  return reduce(m, terms, B, K, kind, opt.keep_terms);
}

}  // namespace

GradEstimate score_grad(const DeepGaussianVae& m, const Objective& obj, const std::vector<Vec64>& batch, int K,
                        const RngKey& key, const EstimatorOptions& opt) {
  return plain(m, obj, batch, K, key, TermMode::Score, EstimatorKind::Score, opt);
}

GradEstimate pathwise_grad(const DeepGaussianVae& m, const Objective& obj, const std::vector<Vec64>& batch, int K,
                           const RngKey& key, bool sampled, const EstimatorOptions& opt) {
  return plain(m, obj, batch, K, key, sampled ? TermMode::Sampled : TermMode::Analytic,
               sampled ? EstimatorKind::PathwiseSampled : EstimatorKind::Pathwise, opt);
}

GradEstimate iwae_grad(const DeepGaussianVae& m, const std::vector<Vec64>& batch, int K, const RngKey& key,
                       const EstimatorOptions& opt) {
  check_args(m, batch, K);
  const int B = static_cast<int>(batch.size());
  const Objective obj = Objective::elbo();
  std::vector<SampleTerm> terms(B * K);
  parallel_for(B * K, [&](int j) {
    const int i = j / K, l = j % K;
    terms[j] = sample_term(m, obj, batch[i], noise_for(key, i, l, m.dz), TermMode::Sampled);
  });
  for (int i = 0; i < B; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < K; ++l) mx = std::max(mx, terms[i * K + l].log_w);
    if (!std::isfinite(mx)) throw std::domain_error("degenerate importance weights");
    double s = 0.0;
    for (int l = 0; l < K; ++l) s += std::exp(terms[i * K + l].log_w - mx);
    const double obj_i = mx + std::log(s / K);
    // stored term K * w~_l * g_l so that the plain mean over (i, l) is the IWAE gradient
    for (int l = 0; l < K; ++l) {
      SampleTerm& t = terms[i * K + l];
      const double wt = std::exp(t.log_w - mx) / s;
      if (K > 1) t.grad *= K * wt;
      t.value = obj_i;
    }
  }
  return reduce(m, terms, B, K, EstimatorKind::Iwae, opt.keep_terms);
}

GradEstimate estimate(const DeepGaussianVae& m, const Objective& obj, EstimatorKind kind,
                      const std::vector<Vec64>& batch, int K, const RngKey& key, const EstimatorOptions& opt) {
  if (obj.kind == ObjectiveKind::Iwae || kind == EstimatorKind::Iwae) return iwae_grad(m, batch, K, key, opt);
  switch (kind) {
    case EstimatorKind::Score: return score_grad(m, obj, batch, K, key, opt);
    case EstimatorKind::PathwiseSampled: return pathwise_grad(m, obj, batch, K, key, true, opt);
    default: return pathwise_grad(m, obj, batch, K, key, false, opt);
  }
}

GradEstimate grad_linear(const LinearVae& m, const std::vector<Vec64>& batch) {
  const LinearGrad g = grad_linear_blocks(m, batch);
  GradEstimate out;
  out.flat_theta.resize(m.theta_size());
  out.flat_theta << Eigen::Map<const Vec64>(g.W1.data(), g.W1.size()), g.b1;
  out.flat_phi.resize(m.phi_size());
  out.flat_phi << Eigen::Map<const Vec64>(g.W2.data(), g.W2.size()), g.b2, g.D;
  out.B = static_cast<int>(batch.size());
  out.K = 1;
  out.kind = EstimatorKind::Exact;
  out.objective = elbo_linear_mean(m, batch);
  return out;
}

namespace {

double block_snr(const std::vector<GradEstimate>& es, bool theta) {
  const Vec64& first = theta ? es[0].flat_theta : es[0].flat_phi;
  const int d = static_cast<int>(first.size());
  if (d == 0) return 0.0;
  const double n = static_cast<double>(es.size());
  Vec64 mean = Vec64::Zero(d);
  for (const auto& e : es) mean += theta ? e.flat_theta : e.flat_phi;
  mean /= n;
  Vec64 var = Vec64::Zero(d);
  for (const auto& e : es) var += ((theta ? e.flat_theta : e.flat_phi) - mean).cwiseAbs2();
  var /= (n - 1.0);
  double s = 0.0;
  for (int j = 0; j < d; ++j) {
    if (var[j] == 0.0) {
      if (mean[j] != 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    const double r = std::abs(mean[j]) / std::sqrt(var[j]);
    s += r * r;
  }
  if (var.isZero(0.0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(s);
}

}  // namespace

Snr snr_measure(const std::vector<GradEstimate>& estimates) {
  if (estimates.size() < 30) throw std::invalid_argument("snr_measure: need at least 30 estimates");
  return {block_snr(estimates, true), block_snr(estimates, false)};
}

}  // namespace vaeconv
