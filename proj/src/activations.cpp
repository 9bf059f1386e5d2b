#include "vaeconv/activations.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace vaeconv {

Activation Activation::celu(double alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("CELU requires alpha > 0");
  Activation a{ActKind::Celu};
  a.alpha = alpha;
  return a;
}

Activation Activation::soft_clip(double s1, double s2, double s) {
  if (!(s1 <= s2) || !(s > 0)) throw std::invalid_argument("SoftClip requires s1 <= s2 and s > 0");
  Activation a{ActKind::SoftClip};
  a.s1 = s1;
  a.s2 = s2;
  a.s = s;
  return a;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace {

// softplus(a) - softplus(b), grouped so that symmetric arguments cancel exactly
// softplus(a) - softplus(b) for a >= b, with a - b = width passed separately so the saturated
// branch does not pick up rounding from x
double softplus_diff(double a, double b, double width) {
  const double lin = b >= 0 ? width : (a <= 0 ? 0.0 : a);
  return lin + (std::log1p(std::exp(-std::abs(a))) - std::log1p(std::exp(-std::abs(b))));
}

double sig_d(double x) {
  const double p = sigmoid(x);
  return p * (1.0 - p);
}

}  // namespace

double act(const Activation& a, double x) {
  switch (a.kind) {
    case ActKind::Sigmoid: return sigmoid(x);
    case ActKind::Tanh: return std::tanh(x);
    case ActKind::Softplus: return softplus(x);
    case ActKind::Celu: return x >= 0 ? x : a.alpha * std::expm1(x / a.alpha);
    case ActKind::SoftClip: {
      auto raw = [&](double t) {
        return softplus_diff(a.s * (t - a.s1), a.s * (t - a.s2), a.s * (a.s2 - a.s1)) / a.s + a.s1;
      };
      // symmetric bounds: odd part only, so the midpoint maps to 0 exactly
      const double v = a.s1 == -a.s2 ? 0.5 * (raw(x) - raw(-x)) : raw(x);
      return std::min(std::max(v, a.s1), a.s2);
    }
    case ActKind::Identity: return x;
    case ActKind::Relu: return x > 0 ? x : 0.0;
  }
  return x;
}

double act_d1(const Activation& a, double x) {
  switch (a.kind) {
    case ActKind::Sigmoid: return sig_d(x);
    case ActKind::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActKind::Softplus: return sigmoid(x);
    case ActKind::Celu: return x >= 0 ? 1.0 : std::exp(x / a.alpha);
    case ActKind::SoftClip: return sigmoid(a.s * (x - a.s1)) - sigmoid(a.s * (x - a.s2));
    case ActKind::Identity: return 1.0;
    case ActKind::Relu: return x > 0 ? 1.0 : 0.0;
  }
  return 1.0;
}

double act_d2(const Activation& a, double x) {
  switch (a.kind) {
    case ActKind::Sigmoid: {
      const double p = sigmoid(x);
      return p * (1.0 - p) * (1.0 - 2.0 * p);
    }
    case ActKind::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case ActKind::Softplus: return sig_d(x);
    case ActKind::Celu: return x >= 0 ? 0.0 : std::exp(x / a.alpha) / a.alpha;
    case ActKind::SoftClip: return a.s * (sig_d(a.s * (x - a.s1)) - sig_d(a.s * (x - a.s2)));
    case ActKind::Identity: return 0.0;
    case ActKind::Relu: return 0.0;
  }
  return 0.0;
}

ActConstants constants(const Activation& a) {
  switch (a.kind) {
    case ActKind::Sigmoid: return {0.25, 0.25};
    case ActKind::Tanh: return {1.0, 1.0};
    case ActKind::Softplus: return {1.0, 0.25};
    case ActKind::Celu: return {1.0, 1.0 / a.alpha};
    case ActKind::SoftClip: return {1.0, a.s / 4.0};
    case ActKind::Identity: return {1.0, 0.0};
    case ActKind::Relu: return {1.0, std::nullopt};
  }
  return {1.0, std::nullopt};
}

Vec64 act(const Activation& a, const Vec64& x) {
  Vec64 y(x.size());
  for (int i = 0; i < x.size(); ++i) y[i] = act(a, x[i]);
  return y;
}

Vec64 act_d1(const Activation& a, const Vec64& x) {
  Vec64 y(x.size());
  for (int i = 0; i < x.size(); ++i) y[i] = act_d1(a, x[i]);
  return y;
}

std::string to_string(const Activation& a) {
  std::ostringstream os;
  os.precision(17);
  switch (a.kind) {
    case ActKind::Sigmoid: return "sigmoid";
    case ActKind::Tanh: return "tanh";
    case ActKind::Softplus: return "softplus";
    case ActKind::Identity: return "identity";
    case ActKind::Relu: return "relu";
    case ActKind::Celu: os << "celu:" << a.alpha; return os.str();
    case ActKind::SoftClip: os << "softclip:" << a.s1 << ':' << a.s2 << ':' << a.s; return os.str();
  }
  return "identity";
}

Activation parse_activation(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.empty()) throw std::invalid_argument("empty activation name");
  const std::string& n = parts[0];
  auto num = [&](size_t i) { return std::stod(parts.at(i)); };
  if (n == "sigmoid") return Activation::sigmoid();
  if (n == "tanh") return Activation::tanh();
  if (n == "softplus") return Activation::softplus();
  if (n == "identity") return Activation::identity();
  if (n == "relu") return Activation::relu();
  if (n == "celu") return Activation::celu(parts.size() > 1 ? num(1) : 1.0);
  if (n == "softclip") {
    if (parts.size() != 4) throw std::invalid_argument("softclip needs s1:s2:s");
    return Activation::soft_clip(num(1), num(2), num(3));
  }
  throw std::invalid_argument("unknown activation '" + text + "'");
}

}  // namespace vaeconv
