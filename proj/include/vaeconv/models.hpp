#pragma once

#include "vaeconv/mlp.hpp"
#include "vaeconv/numerics.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vaeconv {

// ---- Linear Gaussian VAE ----

struct LinearVae {
  Mat64 W1;  // d_x x d_z
  Vec64 b1;
  double c2 = 1.0;
  Mat64 W2;  // d_z x d_x
  Vec64 b2;
  Vec64 log_d;  // D = diag(exp(log_d))
  double c_d = 1e-4;

  int dx() const { return static_cast<int>(W1.rows()); }
  int dz() const { return static_cast<int>(W1.cols()); }
  Vec64 d() const { return log_d.array().exp(); }
  void apply_floor();

  // theta = (W1, b1); phi = (W2, b2, D). D-space coordinates.
  int theta_size() const { return dx() * dz() + dx(); }
  int phi_size() const { return dz() * dx() + 2 * dz(); }
  Vec64 flatten_d() const;
  void assign_d(const Vec64& flat);
  // Same as above with log D in the last block (optimizer coordinates).
  Vec64 flatten_log() const;
  void assign_log(const Vec64& flat);
};

LinearVae init_linear(int dx, int dz, double c2, double scale, const RngKey& key);
// Maximizer of the expected ELBO for data with mean `mean` and covariance S (principal subspace solution),
// plus N(0, scale^2) perturbations of every coordinate (log D for the variances).
LinearVae linear_optimum(const Mat64& S, const Vec64& mean, int dz, double c2, double scale, const RngKey& key);

double kl_linear(const LinearVae& m, const Vec64& x);
double recon_linear(const LinearVae& m, const Vec64& x);
double elbo_linear(const LinearVae& m, const Vec64& x);
double elbo_linear_mean(const LinearVae& m, const std::vector<Vec64>& batch);

struct LinearGrad {
  Mat64 W1, W2;
  Vec64 b1, b2, D;
};
LinearGrad grad_linear_blocks(const LinearVae& m, const std::vector<Vec64>& batch);

// Per-block smoothness constants of the closed-form ELBO; E[xx^T] and E[mu mu^T] come from `batch`.
struct LinearSmoothness {
  double W1, W2, b1, b2, D;
  double total() const;
};
LinearSmoothness linear_smoothness(const LinearVae& m, const LinearVae& m2, const std::vector<Vec64>& batch);

// ---- Deep Gaussian VAE ----

struct Clamps {
  double C_mu = 10.0;
  double C_G = 10.0;
  double c_sigma = 1e-3;
  double C_sigma = 10.0;
  double s = 5.0;
};

struct DeepGaussianVae {
  MlpParams decoder;  // d_z -> d_x, bounded final activation
  MlpParams encoder;  // d_x -> 2 d_z, identity final layer, heads applied in mu_head/logvar_head
  double c2 = 1.0;
  Clamps clamps;
  int dx = 0, dz = 0;

  Activation mu_head() const;
  Activation logvar_head() const;
  int theta_size() const { return decoder.num_params(); }
  int phi_size() const { return encoder.num_params(); }
  Vec64 flatten() const;
  void assign(const Vec64& flat);
  void project();
};

struct DeepArch {
  int dx = 2, dz = 1;
  std::vector<int> dec_hidden{8};
  std::vector<int> enc_hidden{8};
  Activation hidden = Activation::tanh();
  double c2 = 1.0;
  double a = std::numeric_limits<double>::infinity();
  Clamps clamps;
};

DeepGaussianVae init_deep(const DeepArch& arch, const RngKey& key);

struct EncoderOut {
  Vec64 raw, mu, logvar;
  ForwardTrace trace;
};
EncoderOut encode(const DeepGaussianVae& m, const Vec64& x);

// Fixed-target log-density for BBVI: log p(x, z) with its z-gradient.
class LogTarget {
 public:
  virtual ~LogTarget() = default;
  virtual double log_p(const Vec64& x, const Vec64& z, Vec64* grad_z) const = 0;
  virtual std::string name() const = 0;
  // sup of the z-Hessian operator norm when known
  virtual std::optional<double> smoothness() const { return std::nullopt; }
};

std::shared_ptr<LogTarget> gaussian_target(const Vec64& mean, const Vec64& var);
// weights need not be normalized
std::shared_ptr<LogTarget> mixture_target(const std::vector<double>& weights, const std::vector<Vec64>& means,
                                          const std::vector<Vec64>& vars);
// z1 ~ N(0, s^2), z2 | z1 ~ N(b (z1^2 - s^2), 1); other coordinates standard normal
std::shared_ptr<LogTarget> banana_target(double b, double s);

enum class ObjectiveKind { Elbo, BetaElbo, Iwae, Bbvi };

struct Objective {
  ObjectiveKind kind = ObjectiveKind::Elbo;
  double beta = 1.0;
  int K = 1;
  std::shared_ptr<LogTarget> target;  // Bbvi only

  static Objective elbo() { return {}; }
  static Objective beta_elbo(double beta);
  static Objective iwae(int K);
  static Objective bbvi(std::shared_ptr<LogTarget> t);
  double kl_weight() const { return kind == ObjectiveKind::BetaElbo ? beta : 1.0; }
  void validate() const;
};

double kl_diag_gauss(const Vec64& mu, const Vec64& logvar);
double log_prior(const Vec64& z);
double log_lik(const DeepGaussianVae& m, const Vec64& x, const Vec64& z);

double log_joint(const DeepGaussianVae& m, const Vec64& x, const Vec64& z);
double log_q(const DeepGaussianVae& m, const Vec64& x, const Vec64& z);
double density_bound_alpha(const DeepGaussianVae& m, const Vec64& x, const Vec64& z);

// MC reconstruction over the supplied eps plus analytic KL (scaled by beta).
double elbo_deep(const DeepGaussianVae& m, const Vec64& x, const std::vector<Vec64>& eps, double beta = 1.0);
// log w = log p(x,z) - log q(z|x) at z = mu + sigma * eps; BBVI target replaces log p when given.
double log_weight(const DeepGaussianVae& m, const Vec64& x, const Vec64& eps, const LogTarget* target = nullptr);
double iwae_objective(const DeepGaussianVae& m, const Vec64& x, const std::vector<Vec64>& eps,
                      const LogTarget* target = nullptr);
double log_mean_exp(const std::vector<double>& v);

// Objective value for a single data point with the given noise draws.
double objective_value(const DeepGaussianVae& m, const Objective& obj, const Vec64& x, const std::vector<Vec64>& eps);

}  // namespace vaeconv
