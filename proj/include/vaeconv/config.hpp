#pragma once

#include "vaeconv/checkpoint.hpp"
#include "vaeconv/estimators.hpp"
#include "vaeconv/models.hpp"
#include "vaeconv/optim.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vaeconv {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class Family { Linear, Deep, Seq };

struct RunConfig {
  struct Model {
    Family family = Family::Deep;
    int d_x = 4, d_z = 2;
    std::vector<int> dec_hidden{16}, enc_hidden{16};
    std::string activation = "tanh";
    double s = 5.0;
    double c2 = 1.0;
    Clamps clamps;
    double a = std::numeric_limits<double>::infinity();
    double init_scale = 0.1;  // linear family only
    std::string init = "random";  // linear family: random | optimum
  } model;
  struct Obj {
    std::string kind = "elbo";
    double beta = 1.0;
    int K = 1;
    Json target;  // bbvi
  } objective;
  std::string estimator = "pathwise";
  struct Opt {
    std::string kind = "adam";
    double C_gamma = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, delta = 1e-8;
  } optim;
  struct Data {
    Json source = Json{{"kind", "linear_factor"}, {"noise", 0.1}};
    int n = 2000;
    std::uint64_t seed = 0;
    double test_frac = 0.2;
  } data;
  struct Train {
    long iterations = 1000;
    std::optional<double> epochs;
    int B = 16;
    int K_train = 1;
    int threads = 1;
  } train;
  struct Diag {
    long eval_every = 100;
    int eval_mc = 256;
    int eval_batch = 32;
    int snr_reps = 0;
    long fit_n0 = 0, fit_n1 = 0;  // 0 = whole run
    bool wall_clock = false;
    // heldout: exact/MC gradient on the held-out batch; train: gradient over the full training split (exact for
    // linear, fixed-noise MC with eval_mc draws per row for deep); population: exact moment-matched gradient
    // (linear family with a linear_factor source).
    std::string grad_ref = "heldout";
  } diag;
  struct Seq {
    int T = 10;
    int n_traj = 8;
    double C_inf = 5.0;
    double tau_m2 = 0.5, tau_g2 = 0.5;
    bool shared = true;
  } seq;
  int sweep_seeds = 1;

  Objective make_objective() const;
  EstimatorKind estimator_kind() const;
  Activation hidden_activation() const;
  Json echo() const;
};

// Throws ConfigError with the offending field path.
RunConfig parse_config(const Json& j);
RunConfig load_config(const std::string& path);
// Applies "axis=value" overrides used by sweeps (beta, K, activation, BK).
void apply_axis(RunConfig& cfg, const std::string& axis, const std::string& value);

}  // namespace vaeconv
