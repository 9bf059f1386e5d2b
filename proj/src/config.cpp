#include "vaeconv/config.hpp"

#include "vaeconv/data.hpp"

#include <cmath>
#include <set>

namespace vaeconv {

namespace {

void check_keys(const Json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
  }
}

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

template <class T>
void read(const Json& j, const std::string& path, const std::string& key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError(join(path, key), std::string("wrong type (") + e.what() + ")");
  }
}

void positive(double v, const std::string& path) {
  if (!(v > 0) || !std::isfinite(v)) throw ConfigError(path, "must be a positive finite number");
}

}  // namespace

Objective RunConfig::make_objective() const {
  Objective o;
  if (objective.kind == "elbo") {
    o.kind = ObjectiveKind::Elbo;
  } else if (objective.kind == "beta") {
    o.kind = ObjectiveKind::BetaElbo;
    o.beta = objective.beta;
  } else if (objective.kind == "iwae") {
    o.kind = ObjectiveKind::Iwae;
    o.K = objective.K;
  } else if (objective.kind == "bbvi") {
    o.kind = ObjectiveKind::Bbvi;
    const Json& t = objective.target;
    const std::string k = t.value("kind", "gaussian");
    if (k == "gaussian") {
      Vec64 mean = Vec64::Zero(model.d_z), var = Vec64::Ones(model.d_z);
      if (t.contains("mean")) for (int i = 0; i < model.d_z; ++i) mean[i] = t.at("mean").at(i).get<double>();
      if (t.contains("var")) for (int i = 0; i < model.d_z; ++i) var[i] = t.at("var").at(i).get<double>();
      o.target = gaussian_target(mean, var);
    } else if (k == "banana") {
      o.target = banana_target(t.value("b", 0.5), t.value("s", 1.0));
    } else if (k == "mixture") {
      std::vector<double> w;
      std::vector<Vec64> mu, var;
      for (const auto& c : t.at("components")) {
        w.push_back(c.value("weight", 1.0));
        Vec64 m(model.d_z), v(model.d_z);
        for (int i = 0; i < model.d_z; ++i) {
          m[i] = c.at("mean").at(i).get<double>();
          v[i] = c.contains("var") ? c.at("var").at(i).get<double>() : 1.0;
        }
        mu.push_back(m);
        var.push_back(v);
      }
      o.target = mixture_target(w, mu, var);
    }
  }
  return o;
}

EstimatorKind RunConfig::estimator_kind() const {
  if (estimator == "score") return EstimatorKind::Score;
  if (estimator == "pathwise-sampled") return EstimatorKind::PathwiseSampled;
  if (estimator == "iwae") return EstimatorKind::Iwae;
  return EstimatorKind::Pathwise;
}

Activation RunConfig::hidden_activation() const { return parse_activation(model.activation); }

RunConfig parse_config(const Json& j) {
  RunConfig c;
  check_keys(j, "", {"model", "objective", "estimator", "optim", "data", "train", "diag", "seq", "sweep_seeds"});

  if (j.contains("model")) {
    const Json& m = j["model"];
    const std::string p = "model";
    check_keys(m, p, {"family", "d_x", "d_z", "dec_hidden", "enc_hidden", "activation", "s", "c2", "clamps", "a",
                      "init_scale", "init"});
    read(m, p, "init", c.model.init);
    std::string fam = "deep";
    read(m, p, "family", fam);
    if (fam == "linear") c.model.family = Family::Linear;
    else if (fam == "deep") c.model.family = Family::Deep;
    else if (fam == "seq") c.model.family = Family::Seq;
    else throw ConfigError("model.family", "must be linear, deep or seq");
    read(m, p, "d_x", c.model.d_x);
    read(m, p, "d_z", c.model.d_z);
    read(m, p, "dec_hidden", c.model.dec_hidden);
    read(m, p, "enc_hidden", c.model.enc_hidden);
    read(m, p, "activation", c.model.activation);
    read(m, p, "s", c.model.s);
    read(m, p, "c2", c.model.c2);
    read(m, p, "init_scale", c.model.init_scale);
    if (m.contains("a") && !m["a"].is_null()) read(m, p, "a", c.model.a);
    if (m.contains("clamps")) {
      const Json& k = m["clamps"];
      check_keys(k, "model.clamps", {"C_mu", "C_G", "c_sigma", "C_sigma"});
      read(k, "model.clamps", "C_mu", c.model.clamps.C_mu);
      read(k, "model.clamps", "C_G", c.model.clamps.C_G);
      read(k, "model.clamps", "c_sigma", c.model.clamps.c_sigma);
      read(k, "model.clamps", "C_sigma", c.model.clamps.C_sigma);
    }
  }
  c.model.clamps.s = c.model.s;
  if (c.model.d_x < 1) throw ConfigError("model.d_x", "must be >= 1");
  if (c.model.d_z < 1) throw ConfigError("model.d_z", "must be >= 1");
  positive(c.model.s, "model.s");
  positive(c.model.c2, "model.c2");
  if (!(c.model.init_scale >= 0)) throw ConfigError("model.init_scale", "must be >= 0");
  if (c.model.init != "random" && c.model.init != "optimum") throw ConfigError("model.init", "must be random or optimum");
  positive(c.model.clamps.C_mu, "model.clamps.C_mu");
  positive(c.model.clamps.C_G, "model.clamps.C_G");
  positive(c.model.clamps.c_sigma, "model.clamps.c_sigma");
  positive(c.model.clamps.C_sigma, "model.clamps.C_sigma");
  if (c.model.clamps.c_sigma > c.model.clamps.C_sigma) throw ConfigError("model.clamps.c_sigma", "must be <= C_sigma");
  if (!(c.model.a > 0)) throw ConfigError("model.a", "must be positive or null");
  for (size_t i = 0; i < c.model.dec_hidden.size(); ++i)
    if (c.model.dec_hidden[i] < 1) throw ConfigError("model.dec_hidden[" + std::to_string(i) + "]", "must be >= 1");
  for (size_t i = 0; i < c.model.enc_hidden.size(); ++i)
    if (c.model.enc_hidden[i] < 1) throw ConfigError("model.enc_hidden[" + std::to_string(i) + "]", "must be >= 1");
  try {
    (void)parse_activation(c.model.activation);
  } catch (const std::exception& e) {
    throw ConfigError("model.activation", e.what());
  }

  if (j.contains("objective")) {
    const Json& o = j["objective"];
    check_keys(o, "objective", {"kind", "beta", "K", "target"});
    read(o, "objective", "kind", c.objective.kind);
    read(o, "objective", "beta", c.objective.beta);
    read(o, "objective", "K", c.objective.K);
    if (o.contains("target")) {
      c.objective.target = o["target"];
      check_keys(c.objective.target, "objective.target", {"kind", "mean", "var", "b", "s", "components"});
    }
  }
  if (c.objective.kind != "elbo" && c.objective.kind != "beta" && c.objective.kind != "iwae" &&
      c.objective.kind != "bbvi") {
    throw ConfigError("objective.kind", "must be elbo, beta, iwae or bbvi");
  }
  positive(c.objective.beta, "objective.beta");
  if (c.objective.K < 1) throw ConfigError("objective.K", "must be >= 1");
  if (c.objective.kind == "bbvi") {
    if (c.model.family != Family::Deep) throw ConfigError("objective.kind", "bbvi needs the deep family");
    const std::string tk = c.objective.target.is_object() ? c.objective.target.value("kind", "gaussian") : "gaussian";
    if (tk != "gaussian" && tk != "banana" && tk != "mixture") throw ConfigError("objective.target.kind", "unknown target");
    if (tk == "banana" && c.model.d_z < 2) throw ConfigError("objective.target.kind", "banana needs d_z >= 2");
  }

  read(j, "", "estimator", c.estimator);
  if (c.estimator != "pathwise" && c.estimator != "pathwise-sampled" && c.estimator != "score" &&
      c.estimator != "iwae") {
    throw ConfigError("estimator", "must be score, pathwise, pathwise-sampled or iwae");
  }

  if (j.contains("optim")) {
    const Json& o = j["optim"];
    check_keys(o, "optim", {"kind", "C_gamma", "beta1", "beta2", "delta"});
    read(o, "optim", "kind", c.optim.kind);
    read(o, "optim", "C_gamma", c.optim.C_gamma);
    read(o, "optim", "beta1", c.optim.beta1);
    read(o, "optim", "beta2", c.optim.beta2);
    read(o, "optim", "delta", c.optim.delta);
  }
  if (c.optim.kind != "adam" && c.optim.kind != "sgd") throw ConfigError("optim.kind", "must be adam or sgd");
  positive(c.optim.C_gamma, "optim.C_gamma");
  if (c.optim.kind == "adam" && !(c.optim.beta1 >= 0 && c.optim.beta1 < std::sqrt(c.optim.beta2) && c.optim.beta2 < 1)) {
    throw ConfigError("optim.beta1", "Adam needs 0 <= beta1 < sqrt(beta2) < 1");
  }
  if (!(c.optim.delta >= 0)) throw ConfigError("optim.delta", "must be >= 0");

  if (j.contains("data")) {
    const Json& d = j["data"];
    check_keys(d, "data", {"source", "n", "seed", "test_frac"});
    if (d.contains("source")) c.data.source = d["source"];
    read(d, "data", "n", c.data.n);
    read(d, "data", "seed", c.data.seed);
    read(d, "data", "test_frac", c.data.test_frac);
  }
  {
    const Json& s = c.data.source;
    check_keys(s, "data.source", {"kind", "noise", "W", "d_z", "components", "path"});
    const std::string k = s.value("kind", "");
    if (k != "linear_factor" && k != "mixture" && k != "csv") {
      throw ConfigError("data.source.kind", "must be linear_factor, mixture or csv");
    }
    if (k == "csv" && !s.contains("path")) throw ConfigError("data.source.path", "required for csv sources");
    if (k == "mixture" && !s.contains("components")) throw ConfigError("data.source.components", "required for mixtures");
    if (k == "linear_factor" && s.contains("noise") && !(s["noise"].is_number() && s["noise"].get<double>() >= 0)) {
      throw ConfigError("data.source.noise", "must be a nonnegative number");
    }
  }
  if (c.data.n < 2) throw ConfigError("data.n", "must be >= 2");
  if (!(c.data.test_frac >= 0 && c.data.test_frac < 1)) throw ConfigError("data.test_frac", "must be in [0, 1)");

  if (j.contains("train")) {
    const Json& t = j["train"];
    check_keys(t, "train", {"iterations", "epochs", "B", "K_train", "threads"});
    read(t, "train", "iterations", c.train.iterations);
    if (t.contains("epochs")) {
      double e = 0;
      read(t, "train", "epochs", e);
      if (!(e >= 0)) throw ConfigError("train.epochs", "must be >= 0");
      c.train.epochs = e;
    }
    read(t, "train", "B", c.train.B);
    read(t, "train", "K_train", c.train.K_train);
    read(t, "train", "threads", c.train.threads);
  }
  if (c.train.iterations < 0) throw ConfigError("train.iterations", "must be >= 0");
  if (c.train.B < 1) throw ConfigError("train.B", "must be >= 1");
  if (c.train.K_train < 1) throw ConfigError("train.K_train", "must be >= 1");
  if (c.train.threads < 1) throw ConfigError("train.threads", "must be >= 1");
  {
    const int ntrain = c.data.n - static_cast<int>(std::floor(c.data.n * c.data.test_frac));
    if (c.model.family != Family::Seq && c.train.B > ntrain) {
      throw ConfigError("train.B", "exceeds the training split size " + std::to_string(ntrain));
    }
    if (c.train.epochs) {
      c.train.iterations = static_cast<long>(std::llround(ntrain * *c.train.epochs / c.train.B));
    }
  }

  if (j.contains("diag")) {
    const Json& d = j["diag"];
    check_keys(d, "diag", {"eval_every", "eval_mc", "eval_batch", "snr_reps", "fit_window", "wall_clock", "grad_ref"});
    read(d, "diag", "grad_ref", c.diag.grad_ref);
    read(d, "diag", "eval_every", c.diag.eval_every);
    read(d, "diag", "eval_mc", c.diag.eval_mc);
    read(d, "diag", "eval_batch", c.diag.eval_batch);
    read(d, "diag", "snr_reps", c.diag.snr_reps);
    read(d, "diag", "wall_clock", c.diag.wall_clock);
    if (d.contains("fit_window")) {
      std::vector<long> w;
      read(d, "diag", "fit_window", w);
      if (w.size() != 2 || w[0] < 0 || w[1] < w[0]) throw ConfigError("diag.fit_window", "expected [n0, n1] with n0 <= n1");
      c.diag.fit_n0 = w[0];
      c.diag.fit_n1 = w[1];
    }
  }
  if (c.diag.eval_every < 1) throw ConfigError("diag.eval_every", "must be >= 1");
  if (c.diag.eval_mc < 1) throw ConfigError("diag.eval_mc", "must be >= 1");
  if (c.diag.eval_batch < 1) throw ConfigError("diag.eval_batch", "must be >= 1");
  if (c.diag.grad_ref != "heldout" && c.diag.grad_ref != "population" && c.diag.grad_ref != "train")
    throw ConfigError("diag.grad_ref", "must be heldout, train or population");
  if (c.diag.grad_ref == "train" && c.model.family == Family::Seq)
    throw ConfigError("diag.grad_ref", "train is not available for the seq family");
  if (c.diag.grad_ref == "population" &&
      (c.model.family != Family::Linear || c.data.source.value("kind", "") != "linear_factor"))
    throw ConfigError("diag.grad_ref", "population needs the linear family and a linear_factor source");
  if (c.model.init == "optimum" &&
      (c.model.family != Family::Linear || c.data.source.value("kind", "") != "linear_factor"))
    throw ConfigError("model.init", "optimum needs the linear family and a linear_factor source");
  if (c.diag.snr_reps != 0 && c.diag.snr_reps < 30) throw ConfigError("diag.snr_reps", "must be 0 or >= 30");

  if (j.contains("seq")) {
    const Json& s = j["seq"];
    check_keys(s, "seq", {"T", "n_traj", "C_inf", "tau_m2", "tau_g2", "shared"});
    read(s, "seq", "T", c.seq.T);
    read(s, "seq", "n_traj", c.seq.n_traj);
    read(s, "seq", "C_inf", c.seq.C_inf);
    read(s, "seq", "tau_m2", c.seq.tau_m2);
    read(s, "seq", "tau_g2", c.seq.tau_g2);
    read(s, "seq", "shared", c.seq.shared);
  }
  if (c.seq.T < 0) throw ConfigError("seq.T", "must be >= 0");
  if (c.seq.n_traj < 1) throw ConfigError("seq.n_traj", "must be >= 1");
  positive(c.seq.C_inf, "seq.C_inf");
  positive(c.seq.tau_m2, "seq.tau_m2");
  positive(c.seq.tau_g2, "seq.tau_g2");

  read(j, "", "sweep_seeds", c.sweep_seeds);
  if (c.sweep_seeds < 1) throw ConfigError("sweep_seeds", "must be >= 1");
  return c;
}

RunConfig load_config(const std::string& path) {
  Json j;
  try {
    j = load_json(path);
  } catch (const std::exception& e) {
    throw ConfigError("<file>", e.what());
  }
  return parse_config(j);
}

Json RunConfig::echo() const {
  static const char* fam[] = {"linear", "deep", "seq"};
  Json j;
  j["model"] = {{"family", fam[static_cast<int>(model.family)]},
                {"d_x", model.d_x},
                {"d_z", model.d_z},
                {"dec_hidden", model.dec_hidden},
                {"enc_hidden", model.enc_hidden},
                {"activation", model.activation},
                {"s", model.s},
                {"c2", model.c2},
                {"clamps",
                 {{"C_mu", model.clamps.C_mu},
                  {"C_G", model.clamps.C_G},
                  {"c_sigma", model.clamps.c_sigma},
                  {"C_sigma", model.clamps.C_sigma}}},
                {"a", std::isfinite(model.a) ? Json(model.a) : Json(nullptr)},
                {"init_scale", model.init_scale},
                {"init", model.init}};
  j["objective"] = {{"kind", objective.kind}, {"beta", objective.beta}, {"K", objective.K}};
  if (!objective.target.is_null()) j["objective"]["target"] = objective.target;
  j["estimator"] = estimator;
  j["optim"] = {{"kind", optim.kind},
                {"C_gamma", optim.C_gamma},
                {"beta1", optim.beta1},
                {"beta2", optim.beta2},
                {"delta", optim.delta}};
  j["data"] = {{"source", data.source}, {"n", data.n}, {"seed", data.seed}, {"test_frac", data.test_frac}};
  j["train"] = {{"iterations", train.iterations}, {"B", train.B}, {"K_train", train.K_train}, {"threads", train.threads}};
  j["diag"] = {{"eval_every", diag.eval_every}, {"eval_mc", diag.eval_mc},   {"eval_batch", diag.eval_batch},
               {"snr_reps", diag.snr_reps},     {"wall_clock", diag.wall_clock}, {"grad_ref", diag.grad_ref}};
  if (diag.fit_n1 > 0) j["diag"]["fit_window"] = {diag.fit_n0, diag.fit_n1};
  j["seq"] = {{"T", seq.T},           {"n_traj", seq.n_traj}, {"C_inf", seq.C_inf},
              {"tau_m2", seq.tau_m2}, {"tau_g2", seq.tau_g2}, {"shared", seq.shared}};
  j["sweep_seeds"] = sweep_seeds;
  return j;
}

void apply_axis(RunConfig& cfg, const std::string& axis, const std::string& value) {
  try {
    if (axis == "beta") {
      cfg.objective.kind = "beta";
      cfg.objective.beta = std::stod(value);
      positive(cfg.objective.beta, "objective.beta");
    } else if (axis == "K") {
      const int k = std::stoi(value);
      if (k < 1) throw ConfigError("objective.K", "must be >= 1");
      if (cfg.objective.kind == "iwae") cfg.objective.K = k;
      cfg.train.K_train = k;
    } else if (axis == "activation") {
      (void)parse_activation(value);
      cfg.model.activation = value;
    } else if (axis == "BK") {
      const auto x = value.find('x');
      if (x == std::string::npos) throw ConfigError("sweep.BK", "values look like 4x4");
      cfg.train.B = std::stoi(value.substr(0, x));
      cfg.train.K_train = std::stoi(value.substr(x + 1));
      if (cfg.objective.kind == "iwae") cfg.objective.K = cfg.train.K_train;
      if (cfg.train.B < 1 || cfg.train.K_train < 1) throw ConfigError("sweep.BK", "B and K must be >= 1");
    } else {
      throw ConfigError("sweep", "unknown axis '" + axis + "' (beta, K, activation, BK)");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("sweep." + axis, std::string("bad value '") + value + "' (" + e.what() + ")");
  }
}

}  // namespace vaeconv
