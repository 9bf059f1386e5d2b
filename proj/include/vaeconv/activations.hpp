#pragma once

#include "vaeconv/numerics.hpp"

#include <optional>
#include <string>

namespace vaeconv {

enum class ActKind { Sigmoid, Tanh, Softplus, Celu, SoftClip, Identity, Relu };

struct Activation {
  ActKind kind = ActKind::Identity;
  double alpha = 1.0;  // CELU
  double s1 = -1.0, s2 = 1.0, s = 5.0;  // SoftClip

  static Activation sigmoid() { return {ActKind::Sigmoid}; }
  static Activation tanh() { return {ActKind::Tanh}; }
  static Activation softplus() { return {ActKind::Softplus}; }
  static Activation identity() { return {ActKind::Identity}; }
  static Activation relu() { return {ActKind::Relu}; }
  static Activation celu(double alpha);
  static Activation soft_clip(double s1, double s2, double s);

  bool operator==(const Activation&) const = default;
};

struct ActConstants {
  double M = 0.0;
  // empty for ReLU: outside the smooth theory
  std::optional<double> L;
};

double act(const Activation& a, double x);
double act_d1(const Activation& a, double x);
double act_d2(const Activation& a, double x);
ActConstants constants(const Activation& a);

Vec64 act(const Activation& a, const Vec64& x);
Vec64 act_d1(const Activation& a, const Vec64& x);

double sigmoid(double x);
double softplus(double x);

std::string to_string(const Activation& a);
// Accepts "tanh", "celu:2", "softclip:-1:1:5", ...
Activation parse_activation(const std::string& text);

}  // namespace vaeconv
