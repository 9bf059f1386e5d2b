#include "vaeconv/models.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vaeconv {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

// ---------------- Linear VAE ----------------

void LinearVae::apply_floor() {
  const double lf = std::log(c_d);
  for (int i = 0; i < log_d.size(); ++i) log_d[i] = std::max(log_d[i], lf);
}

Vec64 LinearVae::flatten_d() const {
  Vec64 out(theta_size() + phi_size());
  int k = 0;
  auto put = [&](const double* p, Eigen::Index n) {
    out.segment(k, n) = Eigen::Map<const Vec64>(p, n);
    k += static_cast<int>(n);
  };
  put(W1.data(), W1.size());
  put(b1.data(), b1.size());
  put(W2.data(), W2.size());
  put(b2.data(), b2.size());
  const Vec64 dd = d();
  put(dd.data(), dd.size());
  return out;
}

void LinearVae::assign_d(const Vec64& flat) {
  Vec64 tmp = flat;
  const int n = dz();
  for (int i = 0; i < n; ++i) tmp[tmp.size() - n + i] = std::log(flat[tmp.size() - n + i]);
  assign_log(tmp);
}

Vec64 LinearVae::flatten_log() const {
  Vec64 out = flatten_d();
  out.tail(dz()) = log_d;
  return out;
}

void LinearVae::assign_log(const Vec64& flat) {
  int k = 0;
  auto get = [&](double* p, Eigen::Index n) {
    Eigen::Map<Vec64>(p, n) = flat.segment(k, n);
    k += static_cast<int>(n);
  };
  get(W1.data(), W1.size());
  get(b1.data(), b1.size());
  get(W2.data(), W2.size());
  get(b2.data(), b2.size());
  get(log_d.data(), log_d.size());
}

LinearVae init_linear(int dx, int dz, double c2, double scale, const RngKey& key) {
  if (dx < 1 || dz < 1 || !(c2 > 0)) throw std::invalid_argument("init_linear: bad dimensions or c2");
  CounterStream rs(key.with_tag(Purpose::Init));
  LinearVae m;
  m.c2 = c2;
  m.W1 = Mat64(dx, dz);
  m.W2 = Mat64(dz, dx);
  m.b1 = Vec64(dx);
  m.b2 = Vec64(dz);
  for (int i = 0; i < m.W1.size(); ++i) m.W1.data()[i] = scale * rs.normal();
  for (int i = 0; i < m.W2.size(); ++i) m.W2.data()[i] = scale * rs.normal();
  for (int i = 0; i < dx; ++i) m.b1[i] = scale * rs.normal();
  for (int i = 0; i < dz; ++i) m.b2[i] = scale * rs.normal();
  m.log_d = Vec64::Zero(dz);
  return m;
}

LinearVae linear_optimum(const Mat64& S, const Vec64& mean, int dz, double c2, double scale, const RngKey& key) {
  const int dx = static_cast<int>(S.rows());
  if (S.cols() != dx || mean.size() != dx || dz < 1 || !(c2 > 0)) throw std::invalid_argument("linear_optimum: bad shapes");
  const Eigen::MatrixXd Sd = S;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sd);
  LinearVae m;
  m.c2 = c2;
  m.W1 = Mat64::Zero(dx, dz);
  // eigenvalues ascending; take the top dz above c2
  for (int j = 0; j < dz && j < dx; ++j) {
    const double lam = es.eigenvalues()[dx - 1 - j];
    if (lam > c2) m.W1.col(j) = std::sqrt(lam - c2) * es.eigenvectors().col(dx - 1 - j);
  }
  m.b1 = mean;
  Vec64 mdiag(dz);
  for (int j = 0; j < dz; ++j) mdiag[j] = m.W1.col(j).squaredNorm() + c2;
  m.W2 = mdiag.cwiseInverse().asDiagonal() * m.W1.transpose();
  m.b2 = -m.W2 * mean;
  m.log_d = (c2 * mdiag.cwiseInverse()).array().log();
  if (scale > 0) {
    CounterStream rs(key.with_tag(Purpose::Init));
    for (int i = 0; i < m.W1.size(); ++i) m.W1.data()[i] += scale * rs.normal();
    for (int i = 0; i < m.W2.size(); ++i) m.W2.data()[i] += scale * rs.normal();
    for (int i = 0; i < dx; ++i) m.b1[i] += scale * rs.normal();
    for (int i = 0; i < dz; ++i) m.b2[i] += scale * rs.normal();
    for (int i = 0; i < dz; ++i) m.log_d[i] += scale * rs.normal();
  }
  return m;
}

double kl_linear(const LinearVae& m, const Vec64& x) {
  const Vec64 mu = m.W2 * x + m.b2;
  const Vec64 dd = m.d();
  return 0.5 * (-m.log_d.sum() + mu.squaredNorm() + dd.sum() - m.dz());
}

double recon_linear(const LinearVae& m, const Vec64& x) {
  const Vec64 mu = m.W2 * x + m.b2;
  const Vec64 dd = m.d();
  // tr(W1 D W1^T) = sum_j D_j |col_j(W1)|^2
  double tr = 0.0;
  for (int j = 0; j < m.dz(); ++j) tr += dd[j] * m.W1.col(j).squaredNorm();
  const Vec64 r = m.W1 * mu + m.b1 - x;
  return (-tr - r.squaredNorm()) / (2.0 * m.c2) - 0.5 * m.dx() * std::log(2.0 * std::numbers::pi * m.c2);
}

double elbo_linear(const LinearVae& m, const Vec64& x) { return recon_linear(m, x) - kl_linear(m, x); }

double elbo_linear_mean(const LinearVae& m, const std::vector<Vec64>& batch) {
  double s = 0.0;
  for (const auto& x : batch) s += elbo_linear(m, x);
  return s / static_cast<double>(batch.size());
}

LinearGrad grad_linear_blocks(const LinearVae& m, const std::vector<Vec64>& batch) {
  if (batch.empty()) throw std::invalid_argument("grad_linear: empty batch");
  const Vec64 dd = m.d();
  for (int j = 0; j < dd.size(); ++j) {
    if (dd[j] < m.c_d * (1.0 - 1e-12)) {
      throw std::domain_error("grad_linear: D entry " + std::to_string(j) + " below floor c_D");
    }
  }
  const int dx = m.dx(), dz = m.dz();
  const double ic2 = 1.0 / m.c2;
  const Mat64 wtw = m.W1.transpose() * m.W1;
  LinearGrad g{Mat64::Zero(dx, dz), Mat64::Zero(dz, dx), Vec64::Zero(dx), Vec64::Zero(dz), Vec64::Zero(dz)};
  for (const auto& x : batch) {
    const Vec64 mu = m.W2 * x + m.b2;
    const Vec64 xb = x - m.b1;
    g.W1 += ic2 * (xb * mu.transpose() - m.W1 * mu * mu.transpose());
    const Vec64 t = ic2 * (m.W1.transpose() * xb - wtw * mu) - mu;
    g.W2 += t * x.transpose();
    g.b2 += t;
    g.b1 += ic2 * (xb - m.W1 * mu);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  g.W1 *= inv;
  g.W2 *= inv;
  g.b1 *= inv;
  g.b2 *= inv;
  // -W1 D / c2 does not depend on x
  g.W1 -= ic2 * m.W1 * dd.asDiagonal();
  for (int j = 0; j < dz; ++j) g.D[j] = 0.5 * (1.0 / dd[j] - 1.0 - wtw(j, j) * ic2);
  return g;
}

double LinearSmoothness::total() const { return std::max({W1, W2, b1, b2, D}); }

LinearSmoothness linear_smoothness(const LinearVae& m, const LinearVae& m2, const std::vector<Vec64>& batch) {
  const int dz = m.dz(), dx = m.dx();
  Eigen::MatrixXd emm = Eigen::MatrixXd::Zero(dz, dz);
  Eigen::MatrixXd exx = Eigen::MatrixXd::Zero(dx, dx);
  for (const auto& x : batch) {
    const Vec64 mu = m.W2 * x + m.b2;
    emm += mu * mu.transpose();
    exx += x * x.transpose();
  }
  emm /= static_cast<double>(batch.size());
  exx /= static_cast<double>(batch.size());
  const double ic2 = 1.0 / m.c2;
  const Mat64 a = m.W1.transpose() * m.W1 + m.c2 * Mat64::Identity(dz, dz);
  const double na = spectral_norm(a);
  LinearSmoothness s;
  s.W1 = ic2 * (m.d().maxCoeff() + spectral_norm(emm));
  s.W2 = ic2 * na * spectral_norm(exx);
  s.b1 = ic2;
  s.b2 = ic2 * na;
  s.D = 0.5 * (1.0 / m.d().minCoeff()) * (1.0 / m2.d().minCoeff());
  return s;
}

// ---------------- Deep Gaussian VAE ----------------

Activation DeepGaussianVae::mu_head() const {
  const double r = clamps.C_mu / std::sqrt(static_cast<double>(dz));
  return Activation::soft_clip(-r, r, clamps.s);
}

Activation DeepGaussianVae::logvar_head() const {
  return Activation::soft_clip(std::log(clamps.c_sigma), std::log(clamps.C_sigma), clamps.s);
}

Vec64 DeepGaussianVae::flatten() const {
  Vec64 out(theta_size() + phi_size());
  out << decoder.flatten(), encoder.flatten();
  return out;
}

void DeepGaussianVae::assign(const Vec64& flat) {
  decoder.assign(flat, 0);
  encoder.assign(flat, theta_size());
}

void DeepGaussianVae::project() {
  decoder = project_norm(decoder);
  encoder = project_norm(encoder);
}

DeepGaussianVae init_deep(const DeepArch& arch, const RngKey& key) {
  DeepGaussianVae m;
  m.dx = arch.dx;
  m.dz = arch.dz;
  m.c2 = arch.c2;
  m.clamps = arch.clamps;
  if (!(m.c2 > 0)) throw std::invalid_argument("c2 must be positive");
  if (!(m.clamps.c_sigma > 0) || !(m.clamps.c_sigma <= m.clamps.C_sigma)) {
    throw std::invalid_argument("clamps need 0 < c_sigma <= C_sigma");
  }
  std::vector<int> dw{arch.dz};
  dw.insert(dw.end(), arch.dec_hidden.begin(), arch.dec_hidden.end());
  dw.push_back(arch.dx);
  const double g = m.clamps.C_G / std::sqrt(static_cast<double>(arch.dx));
  m.decoder = init_mlp(dw, arch.hidden, Activation::soft_clip(-g, g, m.clamps.s), arch.a, key.fork(1));
  std::vector<int> ew{arch.dx};
  ew.insert(ew.end(), arch.enc_hidden.begin(), arch.enc_hidden.end());
  ew.push_back(2 * arch.dz);
  m.encoder = init_mlp(ew, arch.hidden, Activation::identity(), arch.a, key.fork(2));
  return m;
}

EncoderOut encode(const DeepGaussianVae& m, const Vec64& x) {
  EncoderOut o;
  o.raw = forward(m.encoder, x, &o.trace);
  o.mu = act(m.mu_head(), Vec64(o.raw.head(m.dz)));
  o.logvar = act(m.logvar_head(), Vec64(o.raw.tail(m.dz)));
  return o;
}

namespace {

class GaussianTarget : public LogTarget {
 public:
  GaussianTarget(Vec64 mean, Vec64 var) : mean_(std::move(mean)), var_(std::move(var)) {}
  double log_p(const Vec64&, const Vec64& z, Vec64* g) const override {
    const Vec64 r = (z - mean_).cwiseQuotient(var_);
    if (g) *g = -r;
    return -0.5 * ((z - mean_).dot(r) + var_.array().log().sum() + z.size() * kLog2Pi);
  }
  std::string name() const override { return "gaussian"; }
  std::optional<double> smoothness() const override { return 1.0 / var_.minCoeff(); }

 private:
  Vec64 mean_, var_;
};

class MixtureTarget : public LogTarget {
 public:
  MixtureTarget(std::vector<double> w, std::vector<Vec64> mu, std::vector<Vec64> var)
      : mu_(std::move(mu)), var_(std::move(var)) {
    double s = 0.0;
    for (double v : w) s += v;
    for (double v : w) logw_.push_back(std::log(v / s));
  }
  double log_p(const Vec64&, const Vec64& z, Vec64* g) const override {
    const size_t n = mu_.size();
    std::vector<double> lc(n);
    for (size_t c = 0; c < n; ++c) {
      const Vec64 d = z - mu_[c];
      lc[c] = logw_[c] - 0.5 * (d.dot(d.cwiseQuotient(var_[c])) + var_[c].array().log().sum() + z.size() * kLog2Pi);
    }
    double mx = lc[0];
    for (double v : lc) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : lc) s += std::exp(v - mx);
    const double lp = mx + std::log(s);
    if (g) {
      g->setZero(z.size());
      for (size_t c = 0; c < n; ++c) *g -= std::exp(lc[c] - lp) * (z - mu_[c]).cwiseQuotient(var_[c]);
    }
    return lp;
  }
  std::string name() const override { return "mixture"; }
  // Hessian = -sum_c r_c S_c^{-1} + Cov_r(grad_c); with a shared S the covariance part is bounded by
  // max_{c,d} |S^{-1}(mu_c - mu_d)|^2 / 4.
  std::optional<double> smoothness() const override {
    for (const auto& v : var_)
      if (v != var_[0]) return std::nullopt;
    const Vec64 inv = var_[0].cwiseInverse();
    double spread = 0.0;
    for (size_t c = 0; c < mu_.size(); ++c)
      for (size_t d = 0; d < mu_.size(); ++d)
        spread = std::max(spread, (mu_[c] - mu_[d]).cwiseProduct(inv).squaredNorm());
    return inv.maxCoeff() + 0.25 * spread;
  }

 private:
  std::vector<double> logw_;
  std::vector<Vec64> mu_, var_;
};

class BananaTarget : public LogTarget {
 public:
  BananaTarget(double b, double s) : b_(b), s_(s) {}
  double log_p(const Vec64&, const Vec64& z, Vec64* g) const override {
    if (z.size() < 2) throw std::invalid_argument("banana target needs d_z >= 2");
    const double z1 = z[0];
    const double r = z[1] - b_ * (z1 * z1 - s_ * s_);
    double lp = -0.5 * (z1 * z1 / (s_ * s_)) - std::log(s_) - 0.5 * r * r - kLog2Pi;
    for (int i = 2; i < z.size(); ++i) lp -= 0.5 * (z[i] * z[i] + kLog2Pi);
    if (g) {
      *g = -z;
      (*g)[0] = -z1 / (s_ * s_) + r * 2.0 * b_ * z1;
      (*g)[1] = -r;
    }
    return lp;
  }
  std::string name() const override { return "banana"; }

 private:
  double b_, s_;
};

}  // namespace

std::shared_ptr<LogTarget> gaussian_target(const Vec64& mean, const Vec64& var) {
  return std::make_shared<GaussianTarget>(mean, var);
}

std::shared_ptr<LogTarget> mixture_target(const std::vector<double>& weights, const std::vector<Vec64>& means,
                                          const std::vector<Vec64>& vars) {
  if (weights.empty() || weights.size() != means.size() || means.size() != vars.size()) {
    throw std::invalid_argument("mixture_target: inconsistent components");
  }
  return std::make_shared<MixtureTarget>(weights, means, vars);
}

std::shared_ptr<LogTarget> banana_target(double b, double s) { return std::make_shared<BananaTarget>(b, s); }

Objective Objective::beta_elbo(double beta) {
  Objective o;
  o.kind = ObjectiveKind::BetaElbo;
  o.beta = beta;
  o.validate();
  return o;
}

Objective Objective::iwae(int K) {
  Objective o;
  o.kind = ObjectiveKind::Iwae;
  o.K = K;
  o.validate();
  return o;
}

Objective Objective::bbvi(std::shared_ptr<LogTarget> t) {
  Objective o;
  o.kind = ObjectiveKind::Bbvi;
  o.target = std::move(t);
  o.validate();
  return o;
}

void Objective::validate() const {
  if (!(beta > 0)) throw std::invalid_argument("objective: beta must be > 0");
  if (K < 1) throw std::invalid_argument("objective: K must be >= 1");
  if (kind == ObjectiveKind::Bbvi && !target) throw std::invalid_argument("objective: BBVI needs a target");
}

double kl_diag_gauss(const Vec64& mu, const Vec64& logvar) {
  return 0.5 * (mu.squaredNorm() + (logvar.array().exp() - logvar.array() - 1.0).sum());
}

double log_prior(const Vec64& z) { return -0.5 * (z.squaredNorm() + z.size() * kLog2Pi); }

double log_lik(const DeepGaussianVae& m, const Vec64& x, const Vec64& z) {
  const Vec64 g = forward(m.decoder, z);
  return -(x - g).squaredNorm() / (2.0 * m.c2) - 0.5 * m.dx * std::log(2.0 * std::numbers::pi * m.c2);
}

double log_joint(const DeepGaussianVae& m, const Vec64& x, const Vec64& z) {
  return log_lik(m, x, z) + log_prior(z);
}

double log_q(const DeepGaussianVae& m, const Vec64& x, const Vec64& z) {
  const EncoderOut e = encode(m, x);
  const Vec64 d = z - e.mu;
  return -0.5 * (e.logvar.sum() + m.dz * kLog2Pi + d.dot(d.cwiseProduct((-e.logvar).array().exp().matrix())));
}

double density_bound_alpha(const DeepGaussianVae& m, const Vec64& x, const Vec64& z) {
  const Clamps& c = m.clamps;
  const double tp = 2.0 * std::numbers::pi;
  const double zz = z.squaredNorm();
  const double aq = 0.5 * m.dz * std::max(std::abs(std::log(tp * c.C_sigma)), std::abs(std::log(tp * c.c_sigma))) +
                    (zz + c.C_mu * c.C_mu) / c.c_sigma;
  const double ap = 0.5 * m.dx * std::abs(std::log(tp * m.c2)) + (x.squaredNorm() + c.C_G * c.C_G) / m.c2 +
                    0.5 * m.dz * kLog2Pi + 0.5 * zz;
  return std::max(aq, ap);
}

double elbo_deep(const DeepGaussianVae& m, const Vec64& x, const std::vector<Vec64>& eps, double beta) {
  if (eps.empty()) throw std::invalid_argument("elbo_deep: need at least one noise draw");
  const EncoderOut e = encode(m, x);
  const Vec64 sd = (0.5 * e.logvar).array().exp();
  double rec = 0.0;
  for (const auto& ep : eps) {
    if (ep.size() != m.dz) throw std::invalid_argument("elbo_deep: noise dimension mismatch");
    rec += log_lik(m, x, e.mu + sd.cwiseProduct(ep));
  }
  return rec / static_cast<double>(eps.size()) - beta * kl_diag_gauss(e.mu, e.logvar);
}

namespace {

double log_weight_enc(const DeepGaussianVae& m, const EncoderOut& e, const Vec64& x, const Vec64& eps,
                      const LogTarget* target) {
  const Vec64 z = e.mu + (0.5 * e.logvar).array().exp().matrix().cwiseProduct(eps);
  const double lq = -0.5 * (e.logvar.sum() + m.dz * kLog2Pi + eps.squaredNorm());
  const double lp = target ? target->log_p(x, z, nullptr) : log_joint(m, x, z);
  return lp - lq;
}

}  // namespace

double log_weight(const DeepGaussianVae& m, const Vec64& x, const Vec64& eps, const LogTarget* target) {
  return log_weight_enc(m, encode(m, x), x, eps, target);
}

double log_mean_exp(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("log_mean_exp: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double a : v) mx = std::max(mx, a);
  if (mx == -std::numeric_limits<double>::infinity()) throw std::domain_error("degenerate importance weights");
  double s = 0.0;
  for (double a : v) s += std::exp(a - mx);
  return mx + std::log(s / static_cast<double>(v.size()));
}

double iwae_objective(const DeepGaussianVae& m, const Vec64& x, const std::vector<Vec64>& eps,
                      const LogTarget* target) {
  const EncoderOut e = encode(m, x);
  std::vector<double> lw;
  lw.reserve(eps.size());
  for (const auto& ep : eps) lw.push_back(log_weight_enc(m, e, x, ep, target));
  return log_mean_exp(lw);
}

double objective_value(const DeepGaussianVae& m, const Objective& obj, const Vec64& x,
                       const std::vector<Vec64>& eps) {
  switch (obj.kind) {
    case ObjectiveKind::Elbo: return elbo_deep(m, x, eps, 1.0);
    case ObjectiveKind::BetaElbo: return elbo_deep(m, x, eps, obj.beta);
    case ObjectiveKind::Iwae: return iwae_objective(m, x, eps, nullptr);
    case ObjectiveKind::Bbvi: {
      const EncoderOut e = encode(m, x);
      const Vec64 sd = (0.5 * e.logvar).array().exp();
      double s = 0.0;
      for (const auto& ep : eps) s += obj.target->log_p(x, e.mu + sd.cwiseProduct(ep), nullptr);
      const double entropy = 0.5 * (e.logvar.sum() + m.dz * (kLog2Pi + 1.0));
      return s / static_cast<double>(eps.size()) + entropy;
    }
  }
  return 0.0;
}

}  // namespace vaeconv
