#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace vaeconv {

using Vec64 = Eigen::VectorXd;
using Mat64 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Purpose tags keep unrelated random streams apart.
enum class Purpose : std::uint64_t {
  Generic = 0,
  Noise = 1,
  Minibatch = 2,
  Init = 3,
  Data = 4,
  Eval = 5,
  Audit = 6,
  Simulate = 7,
};

struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t iter = 0;
  std::uint64_t sample = 0;
  std::uint64_t tag = 0;

  RngKey() = default;
  RngKey(std::uint64_t s, std::uint64_t it = 0, std::uint64_t sm = 0, std::uint64_t tg = 0)
      : seed(s), iter(it), sample(sm), tag(tg) {}

  RngKey with_iter(std::uint64_t it) const { return {seed, it, sample, tag}; }
  RngKey with_sample(std::uint64_t s) const { return {seed, iter, s, tag}; }
  RngKey with_tag(Purpose p) const { return {seed, iter, sample, static_cast<std::uint64_t>(p)}; }
  // Derives a fresh seed; used to nest independent experiments under one key.
  RngKey fork(std::uint64_t label) const;

  std::uint64_t digest() const;
};

std::uint64_t splitmix64(std::uint64_t x);

// Draws are a pure function of (key digest, counter).
class CounterStream {
 public:
  explicit CounterStream(const RngKey& key) : base_(key.digest()) {}
  std::uint64_t next_u64();
  double uniform();  // in (0, 1]
  double normal();

 private:
  std::uint64_t base_;
  std::uint64_t ctr_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Vec64 gauss_sample(const RngKey& key, int dim);

double spectral_norm(const Mat64& m);

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// h <= 0 selects 1e-5 * max(1, |x_i|) per coordinate.
Vec64 finite_diff_grad(const std::function<double(const Vec64&)>& f, const Vec64& x, double h = 0.0);

double rel_error(const Vec64& a, const Vec64& b);

bool all_finite(const Vec64& v);

}  // namespace vaeconv
