#pragma once

#include "vaeconv/numerics.hpp"

#include <string>
#include <vector>

namespace vaeconv {

struct DiagnosticsRecord {
  long iter = 0;
  double elbo_train = 0.0;
  double elbo_test = 0.0;
  double grad_norm_sq = 0.0;
  double est_var = 0.0;
  double snr_theta = 0.0;
  double snr_phi = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct RateFit {
  long n0 = 0, n1 = 0;
  // y = c n^{-p}
  double power_c = 0.0, power_p = 0.0, power_r2 = 0.0;
  // y = c log(n) / sqrt(n)
  double logsqrt_c = 0.0, logsqrt_r2 = 0.0;
  int points = 0;
  std::string better() const { return logsqrt_r2 > power_r2 ? "log_over_sqrt" : "power"; }
};

double random_iterate_metric(const std::vector<DiagnosticsRecord>& records);
RateFit fit_rate(const std::vector<DiagnosticsRecord>& records, long n0, long n1);
// Same fit on raw (n, y) pairs.
RateFit fit_rate_xy(const std::vector<double>& n, const std::vector<double>& y, long n0, long n1);

// Mean squared deviation from the mean (divides by the number of terms).
double estimator_variance(const std::vector<Vec64>& per_sample_terms);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_se(const std::vector<double>& v);
double median(std::vector<double> v);

}  // namespace vaeconv
