#include "vaeconv/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vaeconv {

void OptimState::validate() const {
  if (!(C_gamma > 0)) throw std::invalid_argument("optimizer: C_gamma must be > 0");
  if (k < 0) throw std::invalid_argument("optimizer: negative iteration counter");
  if (kind == OptimKind::Adam) {
    if (!(beta1 >= 0 && beta1 < std::sqrt(beta2) && beta2 < 1)) {
      throw std::invalid_argument("optimizer: Adam needs 0 <= beta1 < sqrt(beta2) < 1");
    }
    if (!(delta >= 0)) throw std::invalid_argument("optimizer: delta must be >= 0");
  }
}

OptimState make_sgd(int dim, double C_gamma) {
  OptimState s;
  s.kind = OptimKind::Sgd;
  s.C_gamma = C_gamma;
  s.m = Vec64::Zero(dim);
  s.v = Vec64::Zero(dim);
  s.validate();
  return s;
}

OptimState make_adam(int dim, double C_gamma, double beta1, double beta2, double delta) {
  OptimState s;
  s.kind = OptimKind::Adam;
  s.C_gamma = C_gamma;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.delta = delta;
  s.m = Vec64::Zero(dim);
  s.v = Vec64::Zero(dim);
  s.validate();
  return s;
}

double step_size(double C_gamma, long n) {
  if (!(C_gamma > 0)) throw std::invalid_argument("schedule: C_gamma must be > 0");
  if (n < 1) throw std::invalid_argument("schedule: n must be >= 1");
  return C_gamma / std::sqrt(static_cast<double>(n));
}

std::function<double(long)> make_schedule(double C_gamma) {
  if (!(C_gamma > 0)) throw std::invalid_argument("schedule: C_gamma must be > 0");
  return [C_gamma](long n) { return step_size(C_gamma, n); };
}

void step_inplace(OptimState& s, Vec64& params, const Vec64& grad) {
  if (grad.size() != params.size()) throw std::invalid_argument("optimizer: grad/params size mismatch");
  for (int i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw std::domain_error("optimizer: non-finite gradient at coordinate " + std::to_string(i));
  }
  const double gamma = step_size(s.C_gamma, s.k + 1);
  if (s.kind == OptimKind::Sgd) {
    params += gamma * grad;
  } else {
    if (s.m.size() != grad.size()) {
      s.m = Vec64::Zero(grad.size());
      s.v = Vec64::Zero(grad.size());
    }
    s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
    s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
    for (int i = 0; i < grad.size(); ++i) {
      const double den = std::sqrt(s.v[i] + s.delta);
      if (den > 0) params[i] += gamma * s.m[i] / den;
    }
  }
  s.k += 1;
}

std::pair<OptimState, Vec64> step(const OptimState& state, const Vec64& params, const Vec64& grad) {
  OptimState s = state;
  Vec64 p = params;
  step_inplace(s, p, grad);
  return {std::move(s), std::move(p)};
}

}  // namespace vaeconv
