#pragma once

#include "vaeconv/models.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>

namespace vaeconv {

struct DataMoments {
  double m2 = 0.0;  // E|x|^2
  double m4 = 0.0;  // E|x|^4
  double max_norm = std::numeric_limits<double>::infinity();  // sup |x|, needed for L_K only
};

struct BoundValue {
  std::optional<double> value;
  std::string reason;  // set when unavailable

  static BoundValue of(double v) { return {v, {}}; }
  static BoundValue unavailable(std::string why) { return {std::nullopt, std::move(why)}; }
  bool available() const { return value.has_value(); }
  std::string str() const;
};

struct SmoothnessReport {
  BoundValue L_S, L_PW, L_K, L_BBVI;
  double C_S_leading = 0.0;
  double C_PW_leading = 0.0;
  // inputs used
  double a = 0.0;
  int N_ed = 0, N_dd = 0, d_z = 0, d_x = 0, K = 1;
  double c2 = 0.0;
  Clamps clamps;
  DataMoments moments;
};

double chi_moment(int dz, int j);  // E|eps|^j, eps ~ N(0, I_dz)

SmoothnessReport compute_bounds(const DeepGaussianVae& m, const DataMoments& dm, int K,
                                const LogTarget* bbvi_target = nullptr);

// Smoothness of z -> log p(x, z) for the built-in targets when known.
std::optional<double> target_smoothness(const LogTarget& t);

struct AuditResult {
  double max_ratio = 0.0;
  double bound = 0.0;
  int violations = 0;
  int trials = 0;
  bool pass() const { return violations == 0; }
};

// Ratio |g(p) - g(p')| / |p - p'| over sampled pairs; identical pairs count as ratio 0.
AuditResult audit_smoothness(const std::function<Vec64(const Vec64&)>& grad_fn,
                             const std::function<std::pair<Vec64, Vec64>(int)>& pair_sampler, double bound,
                             int trials, double rel_slack = 0.0);

// Random pairs of deep-model parameter vectors inside the a-ball, at distance <= radius.
std::pair<Vec64, Vec64> sample_deep_pair(const DeepGaussianVae& m, double radius, const RngKey& key);

}  // namespace vaeconv
