#pragma once

#include "vaeconv/activations.hpp"
#include "vaeconv/numerics.hpp"

#include <limits>
#include <vector>

namespace vaeconv {

struct Layer {
  Mat64 W;
  Vec64 b;
  Activation act;
};

struct MlpParams {
  std::vector<Layer> layers;
  double a = std::numeric_limits<double>::infinity();

  int in_dim() const { return static_cast<int>(layers.front().W.cols()); }
  int out_dim() const { return static_cast<int>(layers.back().W.rows()); }
  int depth() const { return static_cast<int>(layers.size()); }
  int num_params() const;
  bool bounded() const { return std::isfinite(a); }

  // Canonical order: per layer, W row-major then b.
  Vec64 flatten() const;
  void assign(const Vec64& flat, int offset = 0);
};

struct ForwardTrace {
  Vec64 input;
  std::vector<Vec64> pre;   // u_i
  std::vector<Vec64> post;  // f_i(u_i)
};

struct MlpGrad {
  std::vector<Mat64> dW;
  std::vector<Vec64> db;
  Vec64 flatten() const;
};

Vec64 forward(const MlpParams& p, const Vec64& z, ForwardTrace* trace = nullptr);

MlpGrad backprop_params(const MlpParams& p, const ForwardTrace& tr, const Vec64& upstream);
Vec64 backprop_input(const MlpParams& p, const ForwardTrace& tr, const Vec64& upstream);
// Both at once; either output may be null.
void backprop(const MlpParams& p, const ForwardTrace& tr, const Vec64& upstream, Vec64* dparams_flat,
              Vec64* dinput);

double param_norm_inf(const MlpParams& p);
MlpParams project_norm(const MlpParams& p);

double lipschitz_bound(const MlpParams& p);
double smoothness_bound(const MlpParams& p);
double input_lipschitz_bound(const MlpParams& p);
double input_smoothness_bound(const MlpParams& p);

// widths = {in, h1, ..., out}; hidden layers use `hidden`, the last layer `last`.
MlpParams init_mlp(const std::vector<int>& widths, const Activation& hidden, const Activation& last, double a,
                   const RngKey& key);

}  // namespace vaeconv
