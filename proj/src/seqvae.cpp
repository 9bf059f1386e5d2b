#include "vaeconv/seqvae.hpp"

#include <limits>

#include "vaeconv/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vaeconv {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

Vec64 Ssm::flatten() const {
  Vec64 out(theta_size());
  out << trans.flatten(), emit.flatten();
  return out;
}

void Ssm::assign(const Vec64& flat) {
  trans.assign(flat, 0);
  emit.assign(flat, trans.num_params());
}

Ssm linear_ssm(const Mat64& A, const Mat64& C, double tau_m2, double tau_g2) {
  if (!(tau_m2 > 0) || !(tau_g2 > 0)) throw std::invalid_argument("ssm: variances must be positive");
  Ssm s;
  s.dz = static_cast<int>(A.rows());
  s.dx = static_cast<int>(C.rows());
  s.tau_m2 = tau_m2;
  s.tau_g2 = tau_g2;
  s.trans.layers.push_back({A, Vec64::Zero(s.dz), Activation::identity()});
  s.emit.layers.push_back({C, Vec64::Zero(s.dx), Activation::identity()});
  return s;
}

Ssm make_ssm(int dz, int dx, const std::vector<int>& hidden, const Activation& act, double C_inf, double tau_m2,
             double tau_g2, const RngKey& key) {
  if (!(tau_m2 > 0) || !(tau_g2 > 0)) throw std::invalid_argument("ssm: variances must be positive");
  Ssm s;
  s.dz = dz;
  s.dx = dx;
  s.tau_m2 = tau_m2;
  s.tau_g2 = tau_g2;
  std::vector<int> w{dz};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(dz);
  s.trans = init_mlp(w, act, Activation::soft_clip(-C_inf, C_inf, 5.0), std::numeric_limits<double>::infinity(),
                     key.fork(11));
  w.back() = dx;
  s.emit = init_mlp(w, act, Activation::identity(), std::numeric_limits<double>::infinity(), key.fork(12));
  return s;
}

int BackwardVariational::phi_size() const {
  int n = static_cast<int>(terminal_raw.size());
  for (const auto& m : nets) n += m.num_params();
  return n;
}

Vec64 BackwardVariational::flatten() const {
  Vec64 out(phi_size());
  int k = 0;
  out.head(terminal_raw.size()) = terminal_raw;
  k += static_cast<int>(terminal_raw.size());
  for (const auto& m : nets) {
    const int n = m.num_params();
    out.segment(k, n) = m.flatten();
    k += n;
  }
  return out;
}

void BackwardVariational::assign(const Vec64& flat) {
  terminal_raw = flat.head(terminal_raw.size());
  int k = static_cast<int>(terminal_raw.size());
  for (auto& m : nets) {
    m.assign(flat, k);
    k += m.num_params();
  }
}

Activation BackwardVariational::mu_head() const {
  if (!clamp_heads) return Activation::identity();
  const double r = clamps.C_mu / std::sqrt(static_cast<double>(dz));
  return Activation::soft_clip(-r, r, clamps.s);
}

Activation BackwardVariational::logvar_head() const {
  if (!clamp_heads) return Activation::identity();
  return Activation::soft_clip(std::log(clamps.c_sigma), std::log(clamps.C_sigma), clamps.s);
}

BackwardVariational init_backward(int dz, int T, bool shared, const std::vector<int>& hidden, const Activation& act,
                                  const Clamps& clamps, bool clamp_heads, const RngKey& key) {
  if (T < 0) throw std::invalid_argument("backward family: T must be >= 0");
  BackwardVariational q;
  q.dz = dz;
  q.T = T;
  q.shared = shared;
  q.clamps = clamps;
  q.clamp_heads = clamp_heads;
  q.terminal_raw = Vec64::Zero(2 * dz);
  std::vector<int> w{dz};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(2 * dz);
  const int n = shared ? 1 : T;
  for (int t = 0; t < n; ++t) {
    q.nets.push_back(init_mlp(w, act, Activation::identity(), std::numeric_limits<double>::infinity(),
                              key.fork(100 + static_cast<std::uint64_t>(t))));
  }
  return q;
}

Trajectory simulate(const Ssm& s, int T, const RngKey& key) {
  if (T < 0) throw std::invalid_argument("simulate: T must be >= 0");
  Trajectory tr{Mat64(T + 1, s.dz), Mat64(T + 1, s.dx)};
  CounterStream rs(key.with_tag(Purpose::Simulate));
  const double sm = std::sqrt(s.tau_m2), sg = std::sqrt(s.tau_g2);
  Vec64 z(s.dz);
  for (int j = 0; j < s.dz; ++j) z[j] = sm * rs.normal();
  for (int t = 0; t <= T; ++t) {
    if (t > 0) {
      Vec64 mu = forward(s.trans, z);
      for (int j = 0; j < s.dz; ++j) z[j] = mu[j] + sm * rs.normal();
    }
    tr.z.row(t) = z.transpose();
    Vec64 mx = forward(s.emit, z);
    for (int j = 0; j < s.dx; ++j) tr.x(t, j) = mx[j] + sg * rs.normal();
  }
  return tr;
}

SeqNoise seq_noise(const RngKey& key, int sample, int T, int dz) {
  SeqNoise e;
  e.reserve(T + 1);
  for (int t = 0; t <= T; ++t) {
    const std::uint64_t lab = (static_cast<std::uint64_t>(sample) << 32) | static_cast<std::uint32_t>(t);
    e.push_back(gauss_sample(key.with_tag(Purpose::Noise).with_sample(lab), dz));
  }
  return e;
}

SeqTerm seq_term(const Ssm& s, const BackwardVariational& q, const Mat64& x, const SeqNoise& eps, bool want_grad) {
  const int T = static_cast<int>(x.rows()) - 1;
  const int dz = s.dz;
  if (T < 0 || static_cast<int>(eps.size()) != T + 1) throw std::invalid_argument("seq_term: noise length must be T+1");
  if (!q.shared && static_cast<int>(q.nets.size()) < T) throw std::invalid_argument("seq_term: too few backward nets");
  const Activation hm = q.mu_head(), hl = q.logvar_head();

  // backward sampling chain
  std::vector<Vec64> z(T + 1), raw(T + 1), sd(T + 1);
  std::vector<ForwardTrace> qtr(T);
  double logq = 0.0;
  auto place = [&](int t, const Vec64& r) {
    raw[t] = r;
    const Vec64 mu = act(hm, Vec64(r.head(dz)));
    const Vec64 l = act(hl, Vec64(r.tail(dz)));
    sd[t] = (0.5 * l).array().exp();
    z[t] = mu + sd[t].cwiseProduct(eps[t]);
    logq += -0.5 * (l.sum() + dz * kLog2Pi + eps[t].squaredNorm());
  };
  place(T, q.terminal_raw);
  for (int t = T - 1; t >= 0; --t) place(t, forward(q.net(t), z[t + 1], &qtr[t]));

  // model terms
  double lp = -0.5 * dz * std::log(2 * std::numbers::pi * s.tau_m2) - z[0].squaredNorm() / (2 * s.tau_m2);
  std::vector<ForwardTrace> mtr(T), gtr(T + 1);
  std::vector<Vec64> mres(T), gres(T + 1);
  for (int t = 0; t < T; ++t) {
    mres[t] = z[t + 1] - forward(s.trans, z[t], &mtr[t]);
    lp += -0.5 * dz * std::log(2 * std::numbers::pi * s.tau_m2) - mres[t].squaredNorm() / (2 * s.tau_m2);
  }
  for (int t = 0; t <= T; ++t) {
    gres[t] = Vec64(x.row(t).transpose()) - forward(s.emit, z[t], &gtr[t]);
    lp += -0.5 * s.dx * std::log(2 * std::numbers::pi * s.tau_g2) - gres[t].squaredNorm() / (2 * s.tau_g2);
  }
  SeqTerm out;
  out.value = lp - logq;
  if (!want_grad) return out;

  const int nm = s.trans.num_params();
  out.grad_theta = Vec64::Zero(s.theta_size());
  out.grad_phi = Vec64::Zero(q.phi_size());
  std::vector<int> net_off(q.nets.size());
  {
    int k = static_cast<int>(q.terminal_raw.size());
    for (size_t i = 0; i < q.nets.size(); ++i) {
      net_off[i] = k;
      k += q.nets[i].num_params();
    }
  }

  auto head_up = [&](int t, const Vec64& a) {
    Vec64 up(2 * dz);
    const Vec64 dmu = a;
    const Vec64 dl = 0.5 * a.cwiseProduct(eps[t]).cwiseProduct(sd[t]) + Vec64::Constant(dz, 0.5);
    up.head(dz) = dmu.cwiseProduct(act_d1(hm, Vec64(raw[t].head(dz))));
    up.tail(dz) = dl.cwiseProduct(act_d1(hl, Vec64(raw[t].tail(dz))));
    return up;
  };

  Vec64 a_prev;
  for (int t = 0; t <= T; ++t) {
    Vec64 a = t == 0 ? Vec64(-z[0] / s.tau_m2) : Vec64(-mres[t - 1] / s.tau_m2);
    Vec64 dth, din;
    if (t < T) {
      backprop(s.trans, mtr[t], mres[t] / s.tau_m2, &dth, &din);
      out.grad_theta.head(nm) += dth;
      a += din;
    }
    backprop(s.emit, gtr[t], gres[t] / s.tau_g2, &dth, &din);
    out.grad_theta.tail(s.emit.num_params()) += dth;
    a += din;
    if (t > 0) {
      // z_{t-1} and the entropy of q_{t-1|t} depend on z_t through step net t-1
      const int ni = q.shared ? 0 : t - 1;
      Vec64 dph;
      backprop(q.nets[ni], qtr[t - 1], head_up(t - 1, a_prev), &dph, &din);
      out.grad_phi.segment(net_off[ni], dph.size()) += dph;
      a += din;
    }
    a_prev = a;
  }
  out.grad_phi.head(2 * dz) += head_up(T, a_prev);
  return out;
}

double seq_elbo(const Ssm& s, const BackwardVariational& q, const Mat64& x, const std::vector<SeqNoise>& eps) {
  if (eps.empty()) throw std::invalid_argument("seq_elbo: need at least one draw");
  double acc = 0.0;
  for (const auto& e : eps) acc += seq_term(s, q, x, e, false).value;
  return acc / static_cast<double>(eps.size());
}

double seq_elbo(const Ssm& s, const BackwardVariational& q, const Mat64& x, int K, const RngKey& key) {
  std::vector<SeqNoise> eps;
  const int T = static_cast<int>(x.rows()) - 1;
  for (int l = 0; l < K; ++l) eps.push_back(seq_noise(key, l, T, s.dz));
  return seq_elbo(s, q, x, eps);
}

GradEstimate seq_pathwise_grad(const Ssm& s, const BackwardVariational& q, const Mat64& x, int K, const RngKey& key,
                               const EstimatorOptions& opt) {
  if (K < 1) throw std::invalid_argument("seq_pathwise_grad: K must be >= 1");
  const int T = static_cast<int>(x.rows()) - 1;
  std::vector<SeqTerm> terms(K);
  for (int l = 0; l < K; ++l) terms[l] = seq_term(s, q, x, seq_noise(key, l, T, s.dz), true);
  GradEstimate g;
  g.B = 1;
  g.K = K;
  g.kind = EstimatorKind::PathwiseSampled;
  g.flat_theta = Vec64::Zero(s.theta_size());
  g.flat_phi = Vec64::Zero(q.phi_size());
  for (auto& t : terms) {
    g.flat_theta += t.grad_theta;
    g.flat_phi += t.grad_phi;
    g.objective += t.value;
    if (opt.keep_terms) {
      Vec64 st(t.grad_theta.size() + t.grad_phi.size());
      st << t.grad_theta, t.grad_phi;
      g.per_sample_terms.push_back(std::move(st));
    }
  }
  g.flat_theta /= K;
  g.flat_phi /= K;
  g.objective /= K;
  return g;
}

std::vector<DiagnosticsRecord> train_seq(Ssm& s, BackwardVariational& q, const std::vector<Mat64>& data,
                                         const SeqTrainOptions& opt, const RngKey& key) {
  if (data.empty()) throw std::invalid_argument("train_seq: no trajectories");
  const int nt = s.theta_size();
  const int np = q.phi_size();
  Vec64 params(nt + np);
  params << s.flatten(), q.flatten();
  OptimState st = make_adam(static_cast<int>(params.size()), opt.C_gamma);
  std::vector<DiagnosticsRecord> recs;

  auto eval = [&](long it) {
    // full-data gradient with a fixed evaluation budget
    Vec64 g = Vec64::Zero(nt + np);
    double obj = 0.0;
    const RngKey ek = key.with_tag(Purpose::Eval).with_iter(static_cast<std::uint64_t>(it));
    for (size_t i = 0; i < data.size(); ++i) {
      const GradEstimate e = seq_pathwise_grad(s, q, data[i], opt.eval_mc, ek.fork(i), {false});
      if (opt.train_theta) g.head(nt) += e.flat_theta;
      if (opt.train_phi) g.tail(np) += e.flat_phi;
      obj += e.objective;
    }
    g /= static_cast<double>(data.size());
    DiagnosticsRecord r;
    r.iter = it;
    r.grad_norm_sq = g.squaredNorm();
    r.elbo_train = obj / static_cast<double>(data.size());
    r.elbo_test = r.elbo_train;
    r.est_var = r.snr_theta = r.snr_phi = std::numeric_limits<double>::quiet_NaN();
    r.lr = it > 0 ? step_size(opt.C_gamma, it) : 0.0;
    recs.push_back(r);
  };

  eval(0);
  for (long it = 1; it <= opt.iterations; ++it) {
    const Mat64& x = data[static_cast<size_t>((it - 1) % static_cast<long>(data.size()))];
    const GradEstimate e = seq_pathwise_grad(s, q, x, opt.K, key.with_iter(static_cast<std::uint64_t>(it)), {false});
    Vec64 g = Vec64::Zero(nt + np);
    if (opt.train_theta) g.head(nt) = e.flat_theta;
    if (opt.train_phi) g.tail(np) = e.flat_phi;
    step_inplace(st, params, g);
    s.assign(params.head(nt));
    q.assign(params.tail(np));
    if (it % opt.eval_every == 0 || it == opt.iterations) eval(it);
  }
  return recs;
}

}  // namespace vaeconv
