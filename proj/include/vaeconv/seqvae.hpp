#pragma once

#include "vaeconv/diagnostics.hpp"
#include "vaeconv/estimators.hpp"
#include "vaeconv/mlp.hpp"
#include "vaeconv/models.hpp"

#include <vector>

namespace vaeconv {

struct Ssm {
  MlpParams trans;  // mu^m: d_z -> d_z
  MlpParams emit;   // mu^g: d_z -> d_x
  double tau_m2 = 1.0;
  double tau_g2 = 1.0;
  int dz = 1, dx = 1;

  int theta_size() const { return trans.num_params() + emit.num_params(); }
  Vec64 flatten() const;
  void assign(const Vec64& flat);
};

// Linear SSM with identity activations: z' = A z + noise, x = C z + noise.
Ssm linear_ssm(const Mat64& A, const Mat64& C, double tau_m2, double tau_g2);
// Nonlinear SSM; transition output clamped to [-C_inf, C_inf] per coordinate.
Ssm make_ssm(int dz, int dx, const std::vector<int>& hidden, const Activation& act, double C_inf, double tau_m2,
             double tau_g2, const RngKey& key);

struct BackwardVariational {
  int dz = 1;
  int T = 0;
  bool shared = true;
  bool clamp_heads = true;
  Clamps clamps;
  Vec64 terminal_raw;            // 2 d_z raw (mean, log-variance) of q_T
  std::vector<MlpParams> nets;   // shared: one net; unshared: one per t = 0..T-1

  const MlpParams& net(int t) const { return nets[shared ? 0 : t]; }
  int phi_size() const;
  Vec64 flatten() const;
  void assign(const Vec64& flat);
  Activation mu_head() const;
  Activation logvar_head() const;
};

BackwardVariational init_backward(int dz, int T, bool shared, const std::vector<int>& hidden, const Activation& act,
                                  const Clamps& clamps, bool clamp_heads, const RngKey& key);

struct Trajectory {
  Mat64 z;  // (T+1) x d_z
  Mat64 x;  // (T+1) x d_x
};

Trajectory simulate(const Ssm& s, int T, const RngKey& key);

using SeqNoise = std::vector<Vec64>;  // eps_0 .. eps_T
SeqNoise seq_noise(const RngKey& key, int sample, int T, int dz);

struct SeqTerm {
  double value = 0.0;
  Vec64 grad_theta, grad_phi;
};
SeqTerm seq_term(const Ssm& s, const BackwardVariational& q, const Mat64& x, const SeqNoise& eps, bool want_grad);

double seq_elbo(const Ssm& s, const BackwardVariational& q, const Mat64& x, const std::vector<SeqNoise>& eps);
double seq_elbo(const Ssm& s, const BackwardVariational& q, const Mat64& x, int K, const RngKey& key);

GradEstimate seq_pathwise_grad(const Ssm& s, const BackwardVariational& q, const Mat64& x, int K, const RngKey& key,
                               const EstimatorOptions& opt = {});

struct SeqTrainOptions {
  long iterations = 1000;
  double C_gamma = 0.01;
  int K = 1;
  bool train_theta = true;
  bool train_phi = true;
  long eval_every = 100;
  int eval_mc = 64;
};

// Adam on the sequential ELBO averaged over the given trajectories (one per iteration, cycled).
std::vector<DiagnosticsRecord> train_seq(Ssm& s, BackwardVariational& q, const std::vector<Mat64>& data,
                                         const SeqTrainOptions& opt, const RngKey& key);

}  // namespace vaeconv
