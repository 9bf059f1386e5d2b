#pragma once

#include "vaeconv/numerics.hpp"

#include <functional>
#include <utility>

namespace vaeconv {

enum class OptimKind { Sgd, Adam };

struct OptimState {
  OptimKind kind = OptimKind::Adam;
  Vec64 m, v;
  long k = 0;
  double C_gamma = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, delta = 1e-8;

  void validate() const;
};

OptimState make_sgd(int dim, double C_gamma);
OptimState make_adam(int dim, double C_gamma, double beta1 = 0.9, double beta2 = 0.999, double delta = 1e-8);

// Ascent step (maximization). Returns the new state and parameters.
std::pair<OptimState, Vec64> step(const OptimState& state, const Vec64& params, const Vec64& grad);
// In-place variant used by training loops.
void step_inplace(OptimState& state, Vec64& params, const Vec64& grad);

std::function<double(long)> make_schedule(double C_gamma);
double step_size(double C_gamma, long n);

}  // namespace vaeconv
