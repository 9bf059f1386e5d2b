#include "vaeconv/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace vaeconv {

int DataSource::dim() const {
  switch (kind) {
    case SourceKind::LinearGaussianFactor: return dx;
    case SourceKind::GaussianMixture: return means.empty() ? 0 : static_cast<int>(means[0].size());
    case SourceKind::CsvFile: return static_cast<int>(read_csv(path).cols());
  }
  return 0;
}

DataMoments DataSource::moments() const {
  DataMoments dm;
  switch (kind) {
    case SourceKind::LinearGaussianFactor: {
      // x ~ N(0, S) with S = W W^T + noise I: E|x|^2 = tr S, E|x|^4 = (tr S)^2 + 2 tr(S^2)
      const Mat64 S = W * W.transpose() + noise * Mat64::Identity(dx, dx);
      const double tr = S.trace();
      dm.m2 = tr;
      dm.m4 = tr * tr + 2.0 * (S * S).trace();
      return dm;
    }
    case SourceKind::GaussianMixture: {
      double s = 0.0;
      for (double w : weights) s += w;
      for (size_t c = 0; c < weights.size(); ++c) {
        const double w = weights[c] / s;
        const double t = vars[c].sum() + means[c].squaredNorm();
        dm.m2 += w * t;
        dm.m4 += w * (t * t + 2.0 * vars[c].squaredNorm() + 4.0 * means[c].dot(vars[c].cwiseProduct(means[c])));
      }
      return dm;
    }
    case SourceKind::CsvFile: throw std::logic_error("CSV moments must be estimated from the loaded data");
  }
  return dm;
}

DataSource linear_gaussian_factor(const Mat64& W, double noise) {
  if (!(noise >= 0)) throw std::invalid_argument("linear factor: noise must be >= 0");
  DataSource s;
  s.kind = SourceKind::LinearGaussianFactor;
  s.W = W;
  s.dx = static_cast<int>(W.rows());
  s.dz = static_cast<int>(W.cols());
  s.noise = noise;
  return s;
}

DataSource random_linear_factor(int dx, int dz, double noise, const RngKey& key) {
  CounterStream rs(key.with_tag(Purpose::Data).with_sample(0xfac7));
  Mat64 W(dx, dz);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dz));
  for (int i = 0; i < W.size(); ++i) W.data()[i] = sd * rs.normal();
  return linear_gaussian_factor(W, noise);
}

DataSource gaussian_mixture(std::vector<double> weights, std::vector<Vec64> means, std::vector<Vec64> vars) {
  if (weights.empty() || weights.size() != means.size() || means.size() != vars.size()) {
    throw std::invalid_argument("gaussian mixture: inconsistent components");
  }
  DataSource s;
  s.kind = SourceKind::GaussianMixture;
  s.weights = std::move(weights);
  s.means = std::move(means);
  s.vars = std::move(vars);
  return s;
}

DataSource csv_source(std::string path) {
  DataSource s;
  s.kind = SourceKind::CsvFile;
  s.path = std::move(path);
  return s;
}

Dataset generate(const DataSource& src, int n, const RngKey& key) {
  if (src.kind == SourceKind::CsvFile) {
    Dataset all = read_csv(src.path);
    if (n <= 0 || n >= all.rows()) return all;
    return all.topRows(n);
  }
  if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
  const int d = src.dim();
  Dataset ds(n, d);
  double wsum = 0.0;
  for (double w : src.weights) wsum += w;
  for (int r = 0; r < n; ++r) {
    CounterStream rs(key.with_tag(Purpose::Data).with_sample(static_cast<std::uint64_t>(r)));
    if (src.kind == SourceKind::LinearGaussianFactor) {
      Vec64 z(src.dz);
      for (int j = 0; j < src.dz; ++j) z[j] = rs.normal();
      Vec64 x = src.W * z;
      const double sn = std::sqrt(src.noise);
      for (int j = 0; j < d; ++j) x[j] += sn * rs.normal();
      ds.row(r) = x.transpose();
    } else {
      double u = rs.uniform() * wsum;
      size_t c = 0;
      while (c + 1 < src.weights.size() && u > src.weights[c]) u -= src.weights[c++];
      for (int j = 0; j < d; ++j) ds(r, j) = src.means[c][j] + std::sqrt(src.vars[c][j]) * rs.normal();
    }
  }
  return ds;
}

std::vector<int> minibatch_indices(int n, int B, long iteration, const RngKey& key) {
  if (B < 1 || B > n) throw std::invalid_argument("minibatch: need 1 <= B <= n (B=" + std::to_string(B) + ", n=" + std::to_string(n) + ")");
  std::vector<int> idx;
  idx.reserve(B);
  if (B == n) {
    for (int i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  // Floyd's sampling without replacement
  CounterStream rs(key.with_tag(Purpose::Minibatch).with_iter(static_cast<std::uint64_t>(iteration)));
  std::set<int> chosen;
  for (int j = n - B; j < n; ++j) {
    const int t = static_cast<int>(rs.next_u64() % static_cast<std::uint64_t>(j + 1));
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  idx.assign(chosen.begin(), chosen.end());
  return idx;
}

std::vector<Vec64> rows(const Dataset& ds) {
  std::vector<Vec64> out;
  out.reserve(ds.rows());
  for (int r = 0; r < ds.rows(); ++r) out.push_back(ds.row(r).transpose());
  return out;
}

std::vector<Vec64> rows(const Dataset& ds, const std::vector<int>& idx) {
  std::vector<Vec64> out;
  out.reserve(idx.size());
  for (int r : idx) out.push_back(ds.row(r).transpose());
  return out;
}

std::vector<Vec64> minibatch(const Dataset& ds, int B, long iteration, const RngKey& key) {
  return rows(ds, minibatch_indices(static_cast<int>(ds.rows()), B, iteration, key));
}

Split split_train_test(const Dataset& ds, double test_frac) {
  const int n = static_cast<int>(ds.rows());
  int nt = static_cast<int>(std::floor(n * test_frac));
  if (test_frac > 0 && nt == 0 && n > 1) nt = 1;
  if (nt >= n) throw std::invalid_argument("split: test split would leave no training data");
  return {ds.topRows(n - nt), ds.bottomRows(nt)};
}

DataMoments estimate_moments(const Dataset& ds) {
  if (ds.rows() == 0) throw std::invalid_argument("estimate_moments: empty dataset");
  DataMoments dm;
  dm.max_norm = 0.0;
  for (int r = 0; r < ds.rows(); ++r) {
    const double q = ds.row(r).squaredNorm();
    dm.m2 += q;
    dm.m4 += q * q;
    dm.max_norm = std::max(dm.max_norm, std::sqrt(q));
  }
  dm.m2 /= static_cast<double>(ds.rows());
  dm.m4 /= static_cast<double>(ds.rows());
  return dm;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (int j = 0; j < ds.cols(); ++j) os << (j ? "," : "") << 'x' << j;
  os << '\n';
  for (int r = 0; r < ds.rows(); ++r) {
    for (int j = 0; j < ds.cols(); ++j) os << (j ? "," : "") << format_double(ds(r, j));
    os << '\n';
  }
}

Dataset read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const int d = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<double> vals;
  int nrows = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    int k = 0;
    while (p < end) {
      double v;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw std::runtime_error(path + ": bad number on row " + std::to_string(nrows + 1));
      vals.push_back(v);
      ++k;
      p = res.ptr;
      if (p < end && *p == ',') ++p;
    }
    if (k != d) throw std::runtime_error(path + ": row " + std::to_string(nrows + 1) + " has " + std::to_string(k) + " fields, expected " + std::to_string(d));
    ++nrows;
  }
  Dataset ds(nrows, d);
  for (int i = 0; i < nrows * d; ++i) ds.data()[i] = vals[i];
  return ds;
}

}  // namespace vaeconv
