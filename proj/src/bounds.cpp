#include "vaeconv/bounds.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace vaeconv {

std::string BoundValue::str() const {
  if (value) {
    std::ostringstream os;
    os.precision(17);
    os << *value;
    return os.str();
  }
  return "unavailable(" + reason + ")";
}

double chi_moment(int dz, int j) {
  return std::exp(0.5 * j * std::log(2.0) + std::lgamma(0.5 * (dz + j)) - std::lgamma(0.5 * dz));
}

namespace {

// Polynomial in (X = |x|, R = |eps|) with nonnegative coefficients.
constexpr int kDeg = 9;
struct Poly {
  std::array<std::array<double, kDeg>, kDeg> c{};

  static Poly constant(double v) {
    Poly p;
    p.c[0][0] = v;
    return p;
  }
  static Poly X() {
    Poly p;
    p.c[1][0] = 1.0;
    return p;
  }
  static Poly R() {
    Poly p;
    p.c[0][1] = 1.0;
    return p;
  }
  Poly operator+(const Poly& o) const {
    Poly r = *this;
    for (int i = 0; i < kDeg; ++i)
      for (int j = 0; j < kDeg; ++j) r.c[i][j] += o.c[i][j];
    return r;
  }
  Poly operator*(const Poly& o) const {
    Poly r;
    for (int i = 0; i < kDeg; ++i)
      for (int j = 0; j < kDeg; ++j) {
        if (c[i][j] == 0.0) continue;
        for (int k = 0; k < kDeg; ++k)
          for (int l = 0; l < kDeg; ++l) {
            if (o.c[k][l] == 0.0) continue;
            if (i + k >= kDeg || j + l >= kDeg) throw std::logic_error("bound polynomial degree overflow");
            r.c[i + k][j + l] += c[i][j] * o.c[k][l];
          }
      }
    return r;
  }
  Poly operator*(double s) const {
    Poly r = *this;
    for (auto& row : r.c)
      for (auto& v : row) v *= s;
    return r;
  }
  Poly operator+(double s) const { return *this + constant(s); }
};

Poly operator*(double s, const Poly& p) { return p * s; }
Poly operator+(double s, const Poly& p) { return p + s; }

// Upper bounds on E|x|^i from the second and fourth moments (Lyapunov / Cauchy-Schwarz).
double x_moment(const DataMoments& dm, int i) {
  switch (i) {
    case 0: return 1.0;
    case 1: return std::sqrt(dm.m2);
    case 2: return dm.m2;
    case 3: return std::pow(dm.m4, 0.75);
    case 4: return dm.m4;
    default: {
      if (std::isfinite(dm.max_norm)) return dm.m4 * std::pow(dm.max_norm, i - 4);
      throw std::invalid_argument("bound needs E|x|^" + std::to_string(i) + " beyond the fourth moment");
    }
  }
}

double expect(const Poly& p, const DataMoments& dm, int dz) {
  double s = 0.0;
  for (int i = 0; i < kDeg; ++i)
    for (int j = 0; j < kDeg; ++j)
      if (p.c[i][j] != 0.0) s += p.c[i][j] * x_moment(dm, i) * chi_moment(dz, j);
  return s;
}

struct NetConsts {
  int N = 0;
  std::vector<double> M, L;
  double prodM() const {
    double r = 1.0;
    for (double v : M) r *= v;
    return r;
  }
  // sum_k L_k a^{shift+k} prod_{i<k} M_i^2 prod_{i>k} M_i
  double S(double a, int shift) const {
    double t = 0.0;
    for (int k = 0; k < N; ++k) {
      double term = L[k] * std::pow(a, shift + k + 1);
      for (int i = 0; i < k; ++i) term *= M[i] * M[i];
      for (int i = k + 1; i < N; ++i) term *= M[i];
      t += term;
    }
    return t;
  }
};

std::optional<NetConsts> net_consts(const MlpParams& p, const std::optional<ActConstants>& last) {
  NetConsts c;
  c.N = p.depth();
  for (int i = 0; i < c.N; ++i) {
    ActConstants k = (i + 1 == c.N && last) ? *last : constants(p.layers[i].act);
    if (!k.L) return std::nullopt;
    c.M.push_back(k.M);
    c.L.push_back(*k.L);
  }
  return c;
}

}  // namespace

std::optional<double> target_smoothness(const LogTarget& t) { return t.smoothness(); }

SmoothnessReport compute_bounds(const DeepGaussianVae& m, const DataMoments& dm, int K, const LogTarget* bbvi_target) {
  if (!std::isfinite(dm.m2) || !std::isfinite(dm.m4) || dm.m2 < 0 || dm.m4 < 0) {
    throw std::invalid_argument("compute_bounds: data moments must be finite and nonnegative");
  }
  if (K < 1) throw std::invalid_argument("compute_bounds: K must be >= 1");
  SmoothnessReport rep;
  const Clamps& cl = m.clamps;
  rep.a = std::max(m.decoder.a, m.encoder.a);
  rep.N_dd = m.decoder.depth();
  rep.N_ed = m.encoder.depth();
  rep.d_z = m.dz;
  rep.d_x = m.dx;
  rep.K = K;
  rep.c2 = m.c2;
  rep.clamps = cl;
  rep.moments = dm;

  const double a = rep.a;
  const int nmax = std::max(rep.N_dd, rep.N_ed);
  const int ntot = rep.N_dd + rep.N_ed;
  rep.C_S_leading = double(m.dz) * m.dz * nmax * std::pow(a, 2.0 * (nmax - 1));
  rep.C_PW_leading = double(m.dz) * ntot * std::pow(a, 2.0 * (ntot - 1));

  if (!std::isfinite(a)) {
    const auto u = BoundValue::unavailable("unbounded parameters (a infinite)");
    rep.L_S = rep.L_PW = rep.L_K = rep.L_BBVI = u;
    return rep;
  }
  // Encoder output heads are SoftClip(s): constants (1, s/4) on the final layer.
  const auto dec = net_consts(m.decoder, std::nullopt);
  const auto enc = net_consts(m.encoder, constants(Activation::soft_clip(-1, 1, cl.s)));
  if (!dec || !enc) {
    const auto u = BoundValue::unavailable("ReLU has no smoothness constant");
    rep.L_S = rep.L_PW = rep.L_K = rep.L_BBVI = u;
    return rep;
  }
  const int Nd = dec->N, Ne = enc->N;
  const double Pd = dec->prodM(), Pe = enc->prodM();
  const double c2 = m.c2, cs = cl.c_sigma, Cs = cl.C_sigma, Cm = cl.C_mu, CG = cl.C_G;
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const int dz = m.dz;

  const Poly X = Poly::X(), R = Poly::R();
  const Poly u = Cm + std::sqrt(Cs) * R;  // |z| <= C_mu + sqrt(C_Sigma) |eps|
  const Poly crec = X + CG;

  // ---- score-function constant ----
  {
    const Poly Ldd = (1.0 / c2) * (2.0 * std::pow(a, 2.0 * (Nd - 1)) * Pd * Pd * ((u + 1.0) * (u + 1.0)) +
                                   Nd * dec->S(a, Nd - 2) * (crec * (u * u + 1.0)));
    const Poly Me = std::pow(a, Ne - 1) * Pe * (X + 1.0);
    const Poly X2 = X * X;
    const Poly L2 = (Ne / cs) * enc->S(a, Ne - 2) * ((2.0 * (u * u) + 2.0 * Cm * Cm + u + Cm + cs) * X2) +
                    (Ne / cs) * std::pow(a, 2.0 * (Ne - 1)) * Pe * Pe *
                        ((2.0 * (u * u) + 2.0 * Cm * Cm + 3.0 * u + 3.0 * Cm + 1.0) * X2);
    const double aq0 = 0.5 * dz * std::max(std::abs(std::log(2 * std::numbers::pi * Cs)),
                                           std::abs(std::log(2 * std::numbers::pi * cs)));
    const double ap0 = 0.5 * m.dx * std::abs(std::log(2 * std::numbers::pi * c2)) + CG * CG / c2 + 0.5 * dz * log2pi;
    // max(alpha_q, alpha_p) <= alpha_q + alpha_p
    const Poly alpha = (aq0 + ap0) + (1.0 / cs) * (u * u + Cm * Cm) + (1.0 / c2) * X2 + 0.5 * (u * u);
    const Poly Led = 2.0 * (alpha * L2) + 3.0 * (Me * Me) + 4.0 * (alpha * (Me * Me));
    rep.L_S = BoundValue::of(expect(Ldd + Led, dm, dz));
  }

  // ---- pathwise pieces ----
  const Poly Lp = dec->S(a, Nd) * crec + std::pow(a, 2.0 * Nd) * Pd * Pd +
                  std::pow(a, 2.0 * Nd - 1) * Pd * Pd * (Cm * Cm + Cs * (R * R)) +
                  std::pow(a, Nd - 1) * Pd * crec + dec->S(a, Nd - 1) * (crec * u);
  const Poly Mpw = u * (1.0 + std::pow(a, Nd) * Pd * crec) + (1.0 / std::sqrt(cs)) * R;
  const double encA = std::pow(a, Ne - 1) * Pe;
  const Poly Lq = (1.0 / cs) + (0.5 * std::pow(cs, -1.5) * encA) * (R * X);
  const Poly gfac = 1.0 + (0.5 / std::sqrt(cs)) * R;
  const Poly Mg = encA * (gfac * X);
  const Poly Lg = (Ne * enc->S(a, Ne - 2)) * (gfac * (X * X + 1.0)) +
                  (0.25 * std::pow(cs, -1.5) * encA * encA) * (R * (X * X));
  const double lpw = expect(Lp + (Mg * Mg) * (Lp + 2.0 * Lq) + 3.0 * (Lg * Mpw) + 2.0 * (Mg * Lq), dm, dz) +
                     expect(Lp * Mg, dm, dz);
  rep.L_PW = BoundValue::of(lpw);

  // ---- IWAE: importance-ratio term ----
  if (K == 1) {
    rep.L_K = rep.L_PW;
  } else if (!std::isfinite(dm.max_norm)) {
    rep.L_K = BoundValue::unavailable("weight-ratio term needs bounded data (max_norm)");
  } else if (!(3.0 * Cs < 1.0)) {
    rep.L_K = BoundValue::unavailable("weight-ratio term diverges: E[r^3] infinite unless C_Sigma < 1/3");
  } else {
    const double xm = dm.max_norm;
    const double cr = xm + CG;
    // log densities of p(x,z) and q(z|x) at z = g(eps, phi), as functions of rho = |eps|
    auto log_ratio = [&](double rho) {
      const double zmax = Cm + std::sqrt(Cs) * rho;
      const double base_p = -0.5 * m.dx * std::log(2 * std::numbers::pi * c2) - 0.5 * dz * log2pi;
      const double up_p = base_p;
      const double lo_p = base_p - cr * cr / (2 * c2) - 0.5 * zmax * zmax;
      const double up_q = -0.5 * dz * std::log(2 * std::numbers::pi * cs) - 0.5 * rho * rho;
      const double lo_q = -0.5 * dz * std::log(2 * std::numbers::pi * Cs) - 0.5 * rho * rho;
      return std::max(up_p, up_q) - std::max(lo_p, lo_q);
    };
    auto Mof = [&](double rho) {
      return (Cm + std::sqrt(Cs) * rho) * (1.0 + std::pow(a, Nd) * Pd * cr) + rho / std::sqrt(cs);
    };
    // chi(dz) density in log form
    const double lnorm = (1.0 - 0.5 * dz) * std::log(2.0) - std::lgamma(0.5 * dz);
    const int n = 20000;
    const double hi = 80.0, h = hi / n;
    // Simpson's rule on log-scale terms, so intermediate exponents cannot overflow
    std::vector<double> lt;
    lt.reserve(2 * (n + 1));
    for (int i = 0; i <= n; ++i) {
      const double rho = i * h;
      if (rho == 0.0 && dz > 1) continue;
      const double ld = lnorm + (dz - 1) * std::log(std::max(rho, 1e-300)) - 0.5 * rho * rho;
      const double lr = log_ratio(rho);
      const double lw = std::log((i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0)) + std::log(Mof(rho));
      lt.push_back(lw + lr + ld);
      lt.push_back(lw + std::log(2.0) + 3.0 * lr + ld);
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : lt) mx = std::max(mx, v);
    double acc = 0.0;
    for (double v : lt) acc += std::exp(v - mx);
    const double log_extra = mx + std::log(acc * h / 3.0) - std::log(static_cast<double>(K));
    if (!std::isfinite(log_extra) || log_extra > 700.0) {
      rep.L_K = BoundValue::unavailable("weight-ratio term overflows double precision");
    } else {
      rep.L_K = BoundValue::of(lpw + std::exp(log_extra));
    }
  }

  // ---- BBVI ----
  if (!bbvi_target) {
    rep.L_BBVI = BoundValue::unavailable("no BBVI target");
  } else if (auto lt = target_smoothness(*bbvi_target)) {
    const Poly Mq = (1.0 / std::sqrt(cs)) * R;
    rep.L_BBVI = BoundValue::of(expect((Mg * Mg) * (*lt + 2.0 * Lq) + 3.0 * (Lg * Mq) + 2.0 * (Mg * Lq), dm, dz));
  } else {
    rep.L_BBVI = BoundValue::unavailable("target smoothness unknown");
  }
  return rep;
}

AuditResult audit_smoothness(const std::function<Vec64(const Vec64&)>& grad_fn,
                             const std::function<std::pair<Vec64, Vec64>(int)>& pair_sampler, double bound,
                             int trials, double rel_slack) {
  if (trials < 1) throw std::invalid_argument("audit_smoothness: trials must be >= 1");
  AuditResult r;
  r.bound = bound;
  r.trials = trials;
  for (int t = 0; t < trials; ++t) {
    const auto [p, q] = pair_sampler(t);
    const double dp = (p - q).norm();
    double ratio = 0.0;
    if (dp > 0) ratio = (grad_fn(p) - grad_fn(q)).norm() / dp;
    r.max_ratio = std::max(r.max_ratio, ratio);
    if (ratio > bound * (1.0 + rel_slack)) ++r.violations;
  }
  return r;
}

std::pair<Vec64, Vec64> sample_deep_pair(const DeepGaussianVae& m, double radius, const RngKey& key) {
  CounterStream rs(key.with_tag(Purpose::Audit));
  DeepGaussianVae a = m, b = m;
  Vec64 base = m.flatten();
  for (int i = 0; i < base.size(); ++i) base[i] = rs.normal() * 0.5 * std::max(1e-3, std::abs(base[i]) + 0.1);
  a.assign(base);
  a.project();
  Vec64 dir(base.size());
  for (int i = 0; i < dir.size(); ++i) dir[i] = rs.normal();
  dir.normalize();
  const double len = radius * rs.uniform();
  b.assign(a.flatten() + len * dir);
  b.project();
  return {a.flatten(), b.flatten()};
}

}  // namespace vaeconv
