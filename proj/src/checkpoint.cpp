#include "vaeconv/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace vaeconv {

namespace {

constexpr int kVersion = 1;

Json mat_json(const Mat64& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Json vec_json(const Vec64& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Mat64 mat_from(const Json& j) {
  const int r = static_cast<int>(j.size());
  const int c = r ? static_cast<int>(j[0].size()) : 0;
  Mat64 m(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(j[i].size()) != c) throw std::runtime_error("checkpoint: ragged matrix");
    for (int k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

Vec64 vec_from(const Json& j) {
  Vec64 v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

Json clamps_json(const Clamps& c) {
  return {{"C_mu", c.C_mu}, {"C_G", c.C_G}, {"c_sigma", c.c_sigma}, {"C_sigma", c.C_sigma}, {"s", c.s}};
}

Clamps clamps_from(const Json& j) {
  Clamps c;
  c.C_mu = j.at("C_mu").get<double>();
  c.C_G = j.at("C_G").get<double>();
  c.c_sigma = j.at("c_sigma").get<double>();
  c.C_sigma = j.at("C_sigma").get<double>();
  c.s = j.at("s").get<double>();
  return c;
}

}  // namespace

Json to_json(const MlpParams& p) {
  Json layers = Json::array();
  for (const auto& l : p.layers) layers.push_back({{"W", mat_json(l.W)}, {"b", vec_json(l.b)}, {"act", to_string(l.act)}});
  Json j{{"layers", layers}};
  j["a"] = std::isfinite(p.a) ? Json(p.a) : Json(nullptr);
  return j;
}

MlpParams mlp_from_json(const Json& j) {
  MlpParams p;
  p.a = j.at("a").is_null() ? std::numeric_limits<double>::infinity() : j.at("a").get<double>();
  for (const auto& l : j.at("layers")) {
    p.layers.push_back({mat_from(l.at("W")), vec_from(l.at("b")), parse_activation(l.at("act").get<std::string>())});
  }
  return p;
}

Json to_json(const LinearVae& m) {
  return {{"version", kVersion}, {"family", "linear"}, {"W1", mat_json(m.W1)}, {"b1", vec_json(m.b1)},
          {"c2", m.c2},          {"W2", mat_json(m.W2)}, {"b2", vec_json(m.b2)}, {"log_d", vec_json(m.log_d)},
          {"c_d", m.c_d}};
}

LinearVae linear_from_json(const Json& j) {
  if (j.at("family") != "linear") throw std::runtime_error("checkpoint: not a linear model");
  LinearVae m;
  m.W1 = mat_from(j.at("W1"));
  m.b1 = vec_from(j.at("b1"));
  m.c2 = j.at("c2").get<double>();
  m.W2 = mat_from(j.at("W2"));
  m.b2 = vec_from(j.at("b2"));
  m.log_d = vec_from(j.at("log_d"));
  m.c_d = j.at("c_d").get<double>();
  return m;
}

Json objective_to_json(const Objective& obj) {
  static const char* names[] = {"elbo", "beta", "iwae", "bbvi"};
  Json j{{"kind", names[static_cast<int>(obj.kind)]}, {"beta", obj.beta}, {"K", obj.K}};
  if (obj.target) j["target"] = obj.target->name();
  return j;
}

Objective objective_from_json(const Json& j) {
  const std::string k = j.at("kind").get<std::string>();
  Objective o;
  if (k == "elbo") o.kind = ObjectiveKind::Elbo;
  else if (k == "beta") o.kind = ObjectiveKind::BetaElbo;
  else if (k == "iwae") o.kind = ObjectiveKind::Iwae;
  else if (k == "bbvi") throw std::runtime_error("checkpoint: BBVI targets are not serialized");
  else throw std::runtime_error("checkpoint: unknown objective '" + k + "'");
  o.beta = j.at("beta").get<double>();
  o.K = j.at("K").get<int>();
  o.validate();
  return o;
}

Json to_json(const DeepGaussianVae& m, const Objective& obj) {
  return {{"version", kVersion},        {"family", "deep"},           {"d_x", m.dx},
          {"d_z", m.dz},                {"c2", m.c2},                 {"clamps", clamps_json(m.clamps)},
          {"decoder", to_json(m.decoder)}, {"encoder", to_json(m.encoder)}, {"objective", objective_to_json(obj)}};
}

DeepGaussianVae deep_from_json(const Json& j) {
  if (j.at("family") != "deep") throw std::runtime_error("checkpoint: not a deep model");
  if (j.at("version").get<int>() != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  DeepGaussianVae m;
  m.dx = j.at("d_x").get<int>();
  m.dz = j.at("d_z").get<int>();
  m.c2 = j.at("c2").get<double>();
  m.clamps = clamps_from(j.at("clamps"));
  m.decoder = mlp_from_json(j.at("decoder"));
  m.encoder = mlp_from_json(j.at("encoder"));
  return m;
}

Json to_json(const Ssm& s, const BackwardVariational& q) {
  Json nets = Json::array();
  for (const auto& n : q.nets) nets.push_back(to_json(n));
  return {{"version", kVersion},
          {"family", "seq"},
          {"tau_m2", s.tau_m2},
          {"tau_g2", s.tau_g2},
          {"transition", to_json(s.trans)},
          {"emission", to_json(s.emit)},
          {"backward", {{"shared", q.shared},
                        {"clamp_heads", q.clamp_heads},
                        {"clamps", clamps_json(q.clamps)},
                        {"terminal_raw", vec_json(q.terminal_raw)},
                        {"nets", nets}}}};
}

void save_json(const Json& j, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

Json load_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return Json::parse(is);
}

}  // namespace vaeconv
