#include "vaeconv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vaeconv {

double random_iterate_metric(const std::vector<DiagnosticsRecord>& records) {
  if (records.empty()) throw std::invalid_argument("random_iterate_metric: no records");
  double s = 0.0;
  for (const auto& r : records) s += r.grad_norm_sq;
  return s / static_cast<double>(records.size());
}

namespace {

double r_squared(const std::vector<double>& y, const std::vector<double>& yhat) {
  double my = 0.0;
  for (double v : y) my += v;
  my /= static_cast<double>(y.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    ss_tot += (y[i] - my) * (y[i] - my);
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
}

}  // namespace

RateFit fit_rate_xy(const std::vector<double>& n, const std::vector<double>& y, long n0, long n1) {
  std::vector<double> lx, ly, lp;
  for (size_t i = 0; i < n.size(); ++i) {
    if (n[i] < n0 || n[i] > n1 || n[i] < 2) continue;
    if (!(y[i] > 0)) throw std::domain_error("fit_rate: nonpositive value at n=" + std::to_string(long(n[i])));
    lx.push_back(std::log(n[i]));
    ly.push_back(std::log(y[i]));
    lp.push_back(std::log(std::log(n[i]) / std::sqrt(n[i])));
  }
  if (lx.size() < 20) throw std::invalid_argument("fit_rate: need at least 20 records in the window");
  const double k = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= k;
  my /= k;
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  RateFit f;
  f.n0 = n0;
  f.n1 = n1;
  f.points = static_cast<int>(lx.size());
  const double slope = sxy / sxx;
  f.power_p = -slope;
  const double icpt = my - slope * mx;
  f.power_c = std::exp(icpt);
  std::vector<double> fit(lx.size());
  for (size_t i = 0; i < lx.size(); ++i) fit[i] = icpt + slope * lx[i];
  f.power_r2 = r_squared(ly, fit);
  // unit slope on log(log n / sqrt n): only the constant is free
  double off = 0.0;
  for (size_t i = 0; i < lx.size(); ++i) off += ly[i] - lp[i];
  off /= k;
  f.logsqrt_c = std::exp(off);
  for (size_t i = 0; i < lx.size(); ++i) fit[i] = off + lp[i];
  f.logsqrt_r2 = r_squared(ly, fit);
  return f;
}

RateFit fit_rate(const std::vector<DiagnosticsRecord>& records, long n0, long n1) {
  std::vector<double> n, y;
  for (const auto& r : records) {
    n.push_back(static_cast<double>(r.iter));
    y.push_back(r.grad_norm_sq);
  }
  return fit_rate_xy(n, y, n0, n1);
}

double estimator_variance(const std::vector<Vec64>& terms) {
  if (terms.size() < 2) throw std::invalid_argument("estimator_variance: need at least 2 terms");
  // shifted by the first term: exact zero for identical terms, less cancellation
  const Vec64& t0 = terms[0];
  Vec64 mean = Vec64::Zero(t0.size());
  for (const auto& t : terms) mean += t - t0;
  mean /= static_cast<double>(terms.size());
  double s = 0.0;
  for (const auto& t : terms) s += (t - t0 - mean).squaredNorm();
  return s / static_cast<double>(terms.size());
}

MeanSe mean_se(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("mean_se: need at least 2 values");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  s /= static_cast<double>(v.size() - 1);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace vaeconv
