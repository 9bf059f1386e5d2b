#include "vaeconv/runner.hpp"

#include "vaeconv/bounds.hpp"
#include "vaeconv/checkpoint.hpp"
#include "vaeconv/estimators.hpp"
#include "vaeconv/optim.hpp"
#include "vaeconv/seqvae.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace vaeconv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// fork labels under the run seed
enum : std::uint64_t { kForkW = 11, kForkData = 12, kForkInit = 13, kForkTrain = 14, kForkEval = 15, kForkSeqQ = 16 };

Vec64 json_vec(const Json& j, int dim, const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) {
    throw ConfigError(path, "expected an array of length " + std::to_string(dim));
  }
  Vec64 v(dim);
  for (int i = 0; i < dim; ++i) v[i] = j[i].get<double>();
  return v;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

Json jnum(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json bound_json(const BoundValue& b) {
  if (b.available()) return Json{{"value", jnum(*b.value)}};
  return Json{{"value", nullptr}, {"reason", b.reason}};
}

Json report_json(const SmoothnessReport& r) {
  return Json{{"L_S", bound_json(r.L_S)},
              {"L_PW", bound_json(r.L_PW)},
              {"L_K", bound_json(r.L_K)},
              {"L_BBVI", bound_json(r.L_BBVI)},
              {"C_S_leading", jnum(r.C_S_leading)},
              {"C_PW_leading", jnum(r.C_PW_leading)},
              {"a", jnum(r.a)},
              {"N_ed", r.N_ed},
              {"N_dd", r.N_dd},
              {"d_z", r.d_z},
              {"d_x", r.d_x},
              {"K", r.K},
              {"c2", r.c2},
              {"moments", {{"m2", r.moments.m2}, {"m4", r.moments.m4}, {"max_norm", jnum(r.moments.max_norm)}}}};
}

Json fit_json(const std::optional<RateFit>& f, const std::string& why) {
  if (!f) return Json{{"available", false}, {"reason", why}};
  return Json{{"available", true},
              {"window", {f->n0, f->n1}},
              {"points", f->points},
              {"power", {{"c", jnum(f->power_c)}, {"p", jnum(f->power_p)}, {"r2", jnum(f->power_r2)}}},
              {"log_over_sqrt", {{"c", jnum(f->logsqrt_c)}, {"r2", jnum(f->logsqrt_r2)}}},
              {"better", f->better()}};
}

std::vector<Vec64> head_rows(const Dataset& ds, int k) {
  std::vector<int> idx;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(ds.rows())); ++i) idx.push_back(i);
  return rows(ds, idx);
}

// 2 d_x points whose empirical first and second moments equal those of N(0, S). The linear ELBO is
// quadratic in x, so its batch-mean gradient over these points is the exact population gradient.
std::vector<Vec64> sigma_points(const DataSource& src) {
  const Mat64 S = src.W * src.W.transpose() + src.noise * Mat64::Identity(src.dx, src.dx);
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw std::runtime_error("sigma points: covariance not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  std::vector<Vec64> pts;
  const double r = std::sqrt(static_cast<double>(src.dx));
  for (int j = 0; j < src.dx; ++j) {
    pts.push_back(r * L.col(j));
    pts.push_back(-r * L.col(j));
  }
  return pts;
}

struct Clock {
  bool on;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    if (!on) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
};

bool eval_point(long k, long n, long every) { return k == 0 || k == n || k % every == 0; }

void check_finite(double v, const char* what, long k) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what + " at iteration " + std::to_string(k));
}

// ---- linear family ----

struct LinearRun {
  LinearVae model;
  std::vector<DiagnosticsRecord> records;
};

void train_linear(const RunConfig& cfg, const DataSource& src, const Split& sp, LinearRun& lr, RunResult& res,
                  bool quiet) {
  const RngKey root(cfg.data.seed);
  const long n = cfg.train.iterations;
  const int B = cfg.train.B;
  std::vector<Vec64> held;
  if (cfg.diag.grad_ref == "population") held = sigma_points(src);
  else if (cfg.diag.grad_ref == "train" || sp.test.rows() == 0) held = rows(sp.train);
  else held = rows(sp.test);
  const std::vector<Vec64> tr_eval = head_rows(sp.train, cfg.diag.eval_batch);
  const std::vector<Vec64> te_eval =
      sp.test.rows() > 0 ? head_rows(sp.test, cfg.diag.eval_batch) : tr_eval;
  const RngKey mb_key = root.fork(kForkTrain).with_tag(Purpose::Minibatch);
  const RngKey ev_key = root.fork(kForkEval).with_tag(Purpose::Eval);
  LinearVae& m = lr.model;
  OptimState st = cfg.optim.kind == "adam"
                      ? make_adam(m.theta_size() + m.phi_size(), cfg.optim.C_gamma, cfg.optim.beta1, cfg.optim.beta2,
                                  cfg.optim.delta)
                      : make_sgd(m.theta_size() + m.phi_size(), cfg.optim.C_gamma);
  Clock clock{cfg.diag.wall_clock};

  auto evaluate = [&](long k) {
    DiagnosticsRecord r;
    r.iter = k;
    r.elbo_train = elbo_linear_mean(m, tr_eval);
    r.elbo_test = elbo_linear_mean(m, te_eval);
    check_finite(r.elbo_train, "objective", k);
    r.grad_norm_sq = grad_linear(m, held).flat().squaredNorm();
    const std::vector<Vec64> batch = minibatch(sp.train, B, k, mb_key);
    if (B >= 2) {
      std::vector<Vec64> terms;
      for (const auto& x : batch) terms.push_back(grad_linear(m, {x}).flat());
      r.est_var = estimator_variance(terms);
    } else {
      r.est_var = kNaN;
    }
    if (cfg.diag.snr_reps >= 30) {
      std::vector<GradEstimate> ests;
      for (int j = 0; j < cfg.diag.snr_reps; ++j) {
        ests.push_back(grad_linear(m, minibatch(sp.train, B, k, ev_key.fork(static_cast<std::uint64_t>(j)))));
      }
      const Snr s = snr_measure(ests);
      r.snr_theta = s.theta;
      r.snr_phi = s.phi;
    } else {
      r.snr_theta = r.snr_phi = kNaN;
    }
    r.lr = k > 0 ? step_size(cfg.optim.C_gamma, k) : 0.0;
    r.wall_ms = clock.ms();
    lr.records.push_back(r);
    res.last_good_iter = k;
    if (!quiet) std::cerr << "iter " << k << " elbo_test " << r.elbo_test << " grad_norm_sq " << r.grad_norm_sq << '\n';
  };

  evaluate(0);
  Vec64 params = m.flatten_log();
  const int dzdim = m.dz();
  for (long k = 1; k <= n; ++k) {
    // minibatch for the step producing iterate k
    const std::vector<Vec64> batch = minibatch(sp.train, B, k - 1, mb_key.with_sample(1));
    Vec64 g = grad_linear(m, batch).flat();
    // chain rule into log-D coordinates
    const Vec64 d = m.d();
    g.tail(dzdim) = g.tail(dzdim).cwiseProduct(d);
    step_inplace(st, params, g);
    m.assign_log(params);
    m.apply_floor();
    params = m.flatten_log();
    if (eval_point(k, n, cfg.diag.eval_every)) evaluate(k);
  }
}

// ---- deep family ----

std::vector<Vec64> eval_noise(const RngKey& key, int i, int from, int count, int dz) {
  std::vector<Vec64> e;
  e.reserve(count);
  for (int l = from; l < from + count; ++l) e.push_back(noise_for(key, i, l, dz));
  return e;
}

double eval_objective(const DeepGaussianVae& m, const Objective& obj, const std::vector<Vec64>& batch,
                      const RngKey& key, int mc) {
  double total = 0.0;
  const int K = obj.kind == ObjectiveKind::Iwae ? obj.K : 1;
  const int reps = obj.kind == ObjectiveKind::Iwae ? std::max(1, mc / K) : 1;
  std::vector<double> per(batch.size());
  parallel_for(static_cast<int>(batch.size()), [&](int i) {
    double s = 0.0;
    if (obj.kind == ObjectiveKind::Iwae) {
      for (int r = 0; r < reps; ++r) s += objective_value(m, obj, batch[i], eval_noise(key, i, r * K, K, m.dz));
      s /= reps;
    } else {
      s = objective_value(m, obj, batch[i], eval_noise(key, i, 0, mc, m.dz));
    }
    per[i] = s;
  });
  for (double v : per) total += v;
  return total / static_cast<double>(batch.size());
}

Vec64 eval_gradient(const DeepGaussianVae& m, const Objective& obj, const std::vector<Vec64>& batch,
                    const RngKey& key, int mc) {
  EstimatorOptions o{false};
  if (obj.kind == ObjectiveKind::Iwae) {
    const int reps = std::max(1, mc / obj.K);
    Vec64 g = Vec64::Zero(m.theta_size() + m.phi_size());
    for (int r = 0; r < reps; ++r) g += iwae_grad(m, batch, obj.K, key.fork(static_cast<std::uint64_t>(r)), o).flat();
    return g / static_cast<double>(reps);
  }
  return pathwise_grad(m, obj, batch, mc, key, false, o).flat();
}

void train_deep(const RunConfig& cfg, const Split& sp, DeepGaussianVae& m, const Objective& obj,
                std::vector<DiagnosticsRecord>& recs, RunResult& res, bool quiet) {
  const RngKey root(cfg.data.seed);
  const long n = cfg.train.iterations;
  const int B = cfg.train.B;
  const int K = obj.kind == ObjectiveKind::Iwae ? obj.K : cfg.train.K_train;
  const EstimatorKind kind = cfg.estimator_kind();
  const std::vector<Vec64> held =
      sp.test.rows() > 0 ? head_rows(sp.test, cfg.diag.eval_batch) : head_rows(sp.train, cfg.diag.eval_batch);
  const std::vector<Vec64> grad_rows = cfg.diag.grad_ref == "train" ? rows(sp.train) : held;
  const std::vector<Vec64> tr_eval = head_rows(sp.train, cfg.diag.eval_batch);
  const RngKey mb_key = root.fork(kForkTrain).with_tag(Purpose::Minibatch);
  const RngKey noise_key = root.fork(kForkTrain).with_tag(Purpose::Noise);
  const RngKey ev_key = root.fork(kForkEval).with_tag(Purpose::Eval);
  const bool project = std::isfinite(cfg.model.a);
  OptimState st = cfg.optim.kind == "adam"
                      ? make_adam(m.theta_size() + m.phi_size(), cfg.optim.C_gamma, cfg.optim.beta1, cfg.optim.beta2,
                                  cfg.optim.delta)
                      : make_sgd(m.theta_size() + m.phi_size(), cfg.optim.C_gamma);
  Clock clock{cfg.diag.wall_clock};
  // BBVI optimizes phi only
  const bool phi_only = obj.kind == ObjectiveKind::Bbvi;

  auto evaluate = [&](long k) {
    DiagnosticsRecord r;
    r.iter = k;
    // common evaluation noise across iterations
    r.elbo_train = eval_objective(m, obj, tr_eval, ev_key.with_sample(1), cfg.diag.eval_mc);
    r.elbo_test = eval_objective(m, obj, held, ev_key.with_sample(2), cfg.diag.eval_mc);
    check_finite(r.elbo_test, "objective", k);
    Vec64 g = eval_gradient(m, obj, grad_rows, ev_key.with_sample(3), cfg.diag.eval_mc);
    if (phi_only) g.head(m.theta_size()).setZero();
    r.grad_norm_sq = g.squaredNorm();
    check_finite(r.grad_norm_sq, "gradient norm", k);
    const std::vector<Vec64> batch = minibatch(sp.train, B, k, mb_key);
    if (B * K >= 2) {
      const GradEstimate e = estimate(m, obj, kind, batch, K, ev_key.with_iter(k).with_sample(4), {true});
      r.est_var = estimator_variance(e.per_sample_terms);
    } else {
      r.est_var = kNaN;
    }
    if (cfg.diag.snr_reps >= 30) {
      std::vector<GradEstimate> ests;
      for (int j = 0; j < cfg.diag.snr_reps; ++j) {
        ests.push_back(estimate(m, obj, kind, batch, K, ev_key.with_iter(k).with_sample(5).fork(j), {false}));
      }
      const Snr s = snr_measure(ests);
      r.snr_theta = phi_only ? kNaN : s.theta;
      r.snr_phi = s.phi;
    } else {
      r.snr_theta = r.snr_phi = kNaN;
    }
    r.lr = k > 0 ? step_size(cfg.optim.C_gamma, k) : 0.0;
    r.wall_ms = clock.ms();
    recs.push_back(r);
    res.last_good_iter = k;
    if (!quiet) std::cerr << "iter " << k << " elbo_test " << r.elbo_test << " grad_norm_sq " << r.grad_norm_sq << '\n';
  };

  evaluate(0);
  Vec64 params = m.flatten();
  for (long k = 1; k <= n; ++k) {
    const std::vector<Vec64> batch = minibatch(sp.train, B, k - 1, mb_key.with_sample(1));
    const GradEstimate e = estimate(m, obj, kind, batch, K, noise_key.with_iter(k), {false});
    check_finite(e.objective, "objective", k);
    Vec64 g = e.flat();
    if (phi_only) g.head(m.theta_size()).setZero();
    step_inplace(st, params, g);
    m.assign(params);
    if (project) {
      m.project();
      params = m.flatten();
    }
    if (eval_point(k, n, cfg.diag.eval_every)) evaluate(k);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << text;
}

}  // namespace

DataSource make_source(const RunConfig& cfg) {
  const Json& s = cfg.data.source;
  const std::string kind = s.value("kind", "");
  const int dx = cfg.model.d_x;
  if (kind == "linear_factor") {
    const double noise = s.value("noise", 0.1);
    if (s.contains("W")) {
      const Json& W = s["W"];
      if (!W.is_array() || static_cast<int>(W.size()) != dx || W.empty() || !W[0].is_array()) {
        throw ConfigError("data.source.W", "expected d_x rows");
      }
      const int dz = static_cast<int>(W[0].size());
      Mat64 M(dx, dz);
      for (int i = 0; i < dx; ++i) M.row(i) = json_vec(W[i], dz, "data.source.W[" + std::to_string(i) + "]");
      return linear_gaussian_factor(M, noise);
    }
    const int dz = s.value("d_z", cfg.model.d_z);
    if (dz < 1) throw ConfigError("data.source.d_z", "must be >= 1");
    return random_linear_factor(dx, dz, noise, RngKey(cfg.data.seed).fork(kForkW).with_tag(Purpose::Data));
  }
  if (kind == "mixture") {
    std::vector<double> w;
    std::vector<Vec64> mu, var;
    const Json& comps = s["components"];
    if (!comps.is_array() || comps.empty()) throw ConfigError("data.source.components", "expected a nonempty array");
    for (size_t c = 0; c < comps.size(); ++c) {
      const std::string p = "data.source.components[" + std::to_string(c) + "]";
      w.push_back(comps[c].value("weight", 1.0));
      if (!(w.back() > 0)) throw ConfigError(p + ".weight", "must be positive");
      if (!comps[c].contains("mean")) throw ConfigError(p + ".mean", "required");
      mu.push_back(json_vec(comps[c]["mean"], dx, p + ".mean"));
      var.push_back(comps[c].contains("var") ? json_vec(comps[c]["var"], dx, p + ".var") : Vec64(Vec64::Ones(dx)));
    }
    return gaussian_mixture(w, mu, var);
  }
  return csv_source(s.value("path", ""));
}

Dataset make_dataset(const RunConfig& cfg) {
  const DataSource src = make_source(cfg);
  if (src.kind == SourceKind::CsvFile) {
    Dataset d = read_csv(src.path);
    if (d.cols() != cfg.model.d_x) {
      throw ConfigError("model.d_x", "CSV has " + std::to_string(d.cols()) + " columns");
    }
    return d;
  }
  return generate(src, cfg.data.n, RngKey(cfg.data.seed).fork(kForkData).with_tag(Purpose::Data));
}

std::string records_csv(const std::vector<DiagnosticsRecord>& records) {
  std::ostringstream os;
  os << "iter,elbo_train,elbo_test,grad_norm_sq,est_var,snr_theta,snr_phi,lr,wall_ms\n";
  for (const auto& r : records) {
    os << r.iter << ',' << num(r.elbo_train) << ',' << num(r.elbo_test) << ',' << num(r.grad_norm_sq) << ','
       << num(r.est_var) << ',' << num(r.snr_theta) << ',' << num(r.snr_phi) << ',' << num(r.lr) << ','
       << num(r.wall_ms) << '\n';
  }
  return os.str();
}

void write_records(const std::vector<DiagnosticsRecord>& records, const std::string& path) {
  write_text(path, records_csv(records));
}

RunResult run(const RunConfig& cfg, const std::string& out_dir, bool quiet) {
  RunResult res;
  set_num_threads(cfg.train.threads);
  const RngKey root(cfg.data.seed);
  Json params_json;
  Json smooth = nullptr;

  try {
    if (cfg.model.family == Family::Seq) {
      const Activation act = cfg.hidden_activation();
      const Ssm truth = make_ssm(cfg.model.d_z, cfg.model.d_x, cfg.model.dec_hidden, act, cfg.seq.C_inf,
                                 cfg.seq.tau_m2, cfg.seq.tau_g2, root.fork(kForkData).with_tag(Purpose::Data));
      std::vector<Mat64> trajs;
      for (int j = 0; j < cfg.seq.n_traj; ++j) {
        trajs.push_back(simulate(truth, cfg.seq.T, root.fork(kForkData).with_tag(Purpose::Simulate).with_sample(j)).x);
      }
      Ssm model = make_ssm(cfg.model.d_z, cfg.model.d_x, cfg.model.dec_hidden, act, cfg.seq.C_inf, cfg.seq.tau_m2,
                           cfg.seq.tau_g2, root.fork(kForkInit).with_tag(Purpose::Init));
      BackwardVariational q = init_backward(cfg.model.d_z, cfg.seq.T, cfg.seq.shared, cfg.model.enc_hidden, act,
                                            cfg.model.clamps, true, root.fork(kForkSeqQ).with_tag(Purpose::Init));
      SeqTrainOptions o;
      o.iterations = cfg.train.iterations;
      o.C_gamma = cfg.optim.C_gamma;
      o.K = cfg.train.K_train;
      o.eval_every = cfg.diag.eval_every;
      o.eval_mc = cfg.diag.eval_mc;
      res.records = train_seq(model, q, trajs, o, root.fork(kForkTrain).with_tag(Purpose::Noise));
      res.last_good_iter = res.records.empty() ? -1 : res.records.back().iter;
      for (const auto& r : res.records) check_finite(r.elbo_train, "objective", r.iter);
      params_json = to_json(model, q);
      smooth = Json{{"available", false}, {"reason", "no smoothness constants for the sequential family"}};
    } else {
      const Dataset ds = make_dataset(cfg);
      const Split sp = split_train_test(ds, cfg.data.test_frac);
      if (cfg.train.B > sp.train.rows()) throw ConfigError("train.B", "exceeds the training split size");
      if (cfg.model.family == Family::Linear) {
        LinearRun lr;
        const RngKey ik = root.fork(kForkInit).with_tag(Purpose::Init);
        if (cfg.model.init == "optimum") {
          const DataSource src = make_source(cfg);
          const Mat64 S = src.W * src.W.transpose() + src.noise * Mat64::Identity(src.dx, src.dx);
          lr.model = linear_optimum(S, Vec64::Zero(src.dx), cfg.model.d_z, cfg.model.c2, cfg.model.init_scale, ik);
        } else {
          lr.model = init_linear(cfg.model.d_x, cfg.model.d_z, cfg.model.c2, cfg.model.init_scale, ik);
        }
        try {
          train_linear(cfg, make_source(cfg), sp, lr, res, quiet);
        } catch (...) {
          res.records = std::move(lr.records);
          throw;
        }
        res.records = std::move(lr.records);
        params_json = to_json(lr.model);
        const LinearSmoothness ls = linear_smoothness(lr.model, lr.model, rows(sp.train));
        smooth = Json{{"family", "linear"},
                      {"blocks", {{"W1", ls.W1}, {"b1", ls.b1}, {"W2", ls.W2}, {"b2", ls.b2}, {"D", ls.D}}},
                      {"total", ls.total()}};
      } else {
        DeepArch arch;
        arch.dx = cfg.model.d_x;
        arch.dz = cfg.model.d_z;
        arch.dec_hidden = cfg.model.dec_hidden;
        arch.enc_hidden = cfg.model.enc_hidden;
        arch.hidden = cfg.hidden_activation();
        arch.c2 = cfg.model.c2;
        arch.a = cfg.model.a;
        arch.clamps = cfg.model.clamps;
        DeepGaussianVae m = init_deep(arch, root.fork(kForkInit).with_tag(Purpose::Init));
        const Objective obj = cfg.make_objective();
        obj.validate();
        try {
          train_deep(cfg, sp, m, obj, res.records, res, quiet);
        } catch (...) {
          params_json = to_json(m, obj);
          throw;
        }
        params_json = to_json(m, obj);
        const int K = obj.kind == ObjectiveKind::Iwae ? obj.K : cfg.train.K_train;
        smooth = report_json(compute_bounds(m, estimate_moments(sp.train), K, obj.target.get()));
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    res.aborted = true;
    res.error = e.what();
  }

  std::string why;
  if (!res.records.empty()) {
    const long last = res.records.back().iter;
    long n0 = cfg.diag.fit_n0, n1 = cfg.diag.fit_n1;
    if (n1 == 0) {
      n0 = std::max<long>(1, last / 10);
      n1 = last;
    }
    try {
      res.fit = fit_rate(res.records, n0, n1);
    } catch (const std::exception& e) {
      why = e.what();
    }
  } else {
    why = "no records";
  }

  res.summary = Json{{"status", res.aborted ? "aborted" : "ok"},
                     {"last_good_iter", res.last_good_iter},
                     {"rate_fit", fit_json(res.fit, why)},
                     {"smoothness", smooth},
                     {"params_path", params_json.is_null() ? Json(nullptr) : Json("params.json")},
                     {"config", cfg.echo()}};
  if (res.aborted) res.summary["error"] = res.error;
  if (!res.records.empty()) {
    const auto& f = res.records.back();
    res.summary["random_iterate_metric"] = jnum(random_iterate_metric(res.records));
    res.summary["final"] = {{"iter", f.iter}, {"elbo_test", jnum(f.elbo_test)}, {"grad_norm_sq", jnum(f.grad_norm_sq)}};
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_records(res.records, out_dir + "/records.csv");
    if (!params_json.is_null()) save_json(params_json, out_dir + "/params.json");
    save_json(res.summary, out_dir + "/summary.json");
  }
  return res;
}

SweepResult sweep(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values,
                  const std::string& out_dir, bool quiet) {
  if (values.empty()) throw ConfigError("sweep", "axis needs at least one value");
  std::vector<RunConfig> cfgs;
  for (const auto& v : values) {
    RunConfig c = base;
    apply_axis(c, axis, v);
    cfgs.push_back(c);
  }
  SweepResult out;
  out.values = values;
  for (size_t vi = 0; vi < values.size(); ++vi) {
    std::vector<double> g, e;
    for (int s = 0; s < base.sweep_seeds; ++s) {
      RunConfig c = cfgs[vi];
      c.data.seed = base.data.seed + static_cast<std::uint64_t>(s);
      const std::string dir =
          out_dir.empty() ? std::string() : out_dir + "/" + axis + "=" + values[vi] + "/seed=" + std::to_string(s);
      SweepRow row;
      row.axis = axis;
      row.value = values[vi];
      row.seed = s;
      try {
        const RunResult r = run(c, dir, quiet);
        row.ok = !r.aborted;
        row.error = r.error;
        if (!r.records.empty()) {
          row.final_iter = r.records.back().iter;
          row.grad_norm_sq = r.records.back().grad_norm_sq;
          row.elbo_test = r.records.back().elbo_test;
          row.random_iterate = random_iterate_metric(r.records);
        }
      } catch (const std::exception& ex) {
        row.ok = false;
        row.error = ex.what();
      }
      if (row.ok) {
        g.push_back(row.grad_norm_sq);
        e.push_back(row.elbo_test);
      }
      if (!quiet) {
        std::cerr << axis << '=' << values[vi] << " seed " << s << (row.ok ? " ok" : " failed: " + row.error) << '\n';
      }
      out.rows.push_back(row);
    }
    out.median_grad_norm_sq.push_back(g.empty() ? kNaN : median(g));
    out.median_elbo_test.push_back(e.empty() ? kNaN : median(e));
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ostringstream os;
    os << "axis,value,seed,status,final_iter,grad_norm_sq,elbo_test,random_iterate\n";
    for (const auto& r : out.rows) {
      os << r.axis << ',' << r.value << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << r.final_iter << ','
         << num(r.grad_norm_sq) << ',' << num(r.elbo_test) << ',' << num(r.random_iterate) << '\n';
    }
    write_text(out_dir + "/sweep.csv", os.str());
    std::ostringstream ms;
    ms << "axis,value,median_grad_norm_sq,median_elbo_test\n";
    for (size_t i = 0; i < values.size(); ++i) {
      ms << axis << ',' << values[i] << ',' << num(out.median_grad_norm_sq[i]) << ',' << num(out.median_elbo_test[i])
         << '\n';
    }
    write_text(out_dir + "/sweep_summary.csv", ms.str());
  }
  return out;
}

}  // namespace vaeconv
