#include "vaeconv/numerics.hpp"

#include <cmath>
#include <numbers>

namespace vaeconv {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t RngKey::digest() const {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
  h = splitmix64(h ^ tag);
  h = splitmix64(h ^ iter);
  h = splitmix64(h ^ sample);
  return h;
}

RngKey RngKey::fork(std::uint64_t label) const {
  return RngKey(splitmix64(digest() ^ splitmix64(label + 0x51ed27ULL)));
}

std::uint64_t CounterStream::next_u64() { return splitmix64(base_ ^ splitmix64(ctr_++)); }

double CounterStream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double CounterStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

Vec64 gauss_sample(const RngKey& key, int dim) {
  if (dim < 1) throw std::invalid_argument("gauss_sample: dim must be >= 1");
  CounterStream s(key);
  Vec64 out(dim);
  for (int i = 0; i < dim; ++i) out[i] = s.normal();
  return out;
}

double spectral_norm(const Mat64& m) {
  if (m.size() == 0) return 0.0;
  const Eigen::MatrixXd g = m.transpose() * m;
  Eigen::VectorXd v(g.cols());
  for (int i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.1 * i;
  v.normalize();
  double lam = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w = g * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / nw;
    const bool done = it > 0 && std::abs(next - lam) <= 1e-12 * std::abs(next);
    lam = next;
    if (done) break;
  }
  // Rayleigh quotient at the final vector
  lam = v.dot(g * v);
  return std::sqrt(std::max(lam, 0.0));
}

Vec64 finite_diff_grad(const std::function<double(const Vec64&)>& f, const Vec64& x, double h) {
  Vec64 g(x.size());
  Vec64 p = x;
  for (int i = 0; i < x.size(); ++i) {
    const double hi = h > 0 ? h : 1e-5 * std::max(1.0, std::abs(x[i]));
    p[i] = x[i] + hi;
    const double fp = f(p);
    p[i] = x[i] - hi;
    const double fm = f(p);
    p[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite value at probe coordinate " + std::to_string(i) +
                         (std::isfinite(fp) ? " (minus side)" : " (plus side)"));
    }
    g[i] = (fp - fm) / (2.0 * hi);
  }
  return g;
}

double rel_error(const Vec64& a, const Vec64& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

bool all_finite(const Vec64& v) { return v.allFinite(); }

}  // namespace vaeconv
