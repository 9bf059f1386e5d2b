#include "vaeconv/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vaeconv {

int MlpParams::num_params() const {
  int n = 0;
  for (const auto& l : layers) n += static_cast<int>(l.W.size() + l.b.size());
  return n;
}

Vec64 MlpParams::flatten() const {
  Vec64 out(num_params());
  int k = 0;
  for (const auto& l : layers) {
    out.segment(k, l.W.size()) = Eigen::Map<const Vec64>(l.W.data(), l.W.size());
    k += static_cast<int>(l.W.size());
    out.segment(k, l.b.size()) = l.b;
    k += static_cast<int>(l.b.size());
  }
  return out;
}

void MlpParams::assign(const Vec64& flat, int offset) {
  int k = offset;
  for (auto& l : layers) {
    Eigen::Map<Vec64>(l.W.data(), l.W.size()) = flat.segment(k, l.W.size());
    k += static_cast<int>(l.W.size());
    l.b = flat.segment(k, l.b.size());
    k += static_cast<int>(l.b.size());
  }
}

Vec64 MlpGrad::flatten() const {
  int n = 0;
  for (size_t i = 0; i < dW.size(); ++i) n += static_cast<int>(dW[i].size() + db[i].size());
  Vec64 out(n);
  int k = 0;
  for (size_t i = 0; i < dW.size(); ++i) {
    out.segment(k, dW[i].size()) = Eigen::Map<const Vec64>(dW[i].data(), dW[i].size());
    k += static_cast<int>(dW[i].size());
    out.segment(k, db[i].size()) = db[i];
    k += static_cast<int>(db[i].size());
  }
  return out;
}

Vec64 forward(const MlpParams& p, const Vec64& z, ForwardTrace* trace) {
  if (trace) {
    trace->input = z;
    trace->pre.clear();
    trace->post.clear();
  }
  Vec64 h = z;
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const Layer& l = p.layers[i];
    if (l.W.cols() != h.size()) {
      throw std::invalid_argument("forward: dimension mismatch at layer " + std::to_string(i) + " (expects " +
                                  std::to_string(l.W.cols()) + ", got " + std::to_string(h.size()) + ")");
    }
    Vec64 u = l.W * h + l.b;
    h = act(l.act, u);
    if (trace) {
      trace->pre.push_back(std::move(u));
      trace->post.push_back(h);
    }
  }
  return h;
}

void backprop(const MlpParams& p, const ForwardTrace& tr, const Vec64& upstream, Vec64* dparams_flat,
              Vec64* dinput) {
  const int n = p.depth();
  if (static_cast<int>(tr.pre.size()) != n || upstream.size() != p.out_dim() || tr.input.size() != p.in_dim()) {
    throw std::invalid_argument("backprop: trace does not match parameters");
  }
  if (dparams_flat) dparams_flat->resize(p.num_params());
  // offsets of each layer's block in the flat vector
  std::vector<int> off(n + 1, 0);
  for (int i = 0; i < n; ++i) off[i + 1] = off[i] + static_cast<int>(p.layers[i].W.size() + p.layers[i].b.size());

  Vec64 delta = upstream;
  for (int i = n - 1; i >= 0; --i) {
    const Layer& l = p.layers[i];
    if (tr.pre[i].size() != l.W.rows()) throw std::invalid_argument("backprop: stale trace at layer " + std::to_string(i));
    delta = delta.cwiseProduct(act_d1(l.act, tr.pre[i]));
    const Vec64& prev = i == 0 ? tr.input : tr.post[i - 1];
    if (dparams_flat) {
      Eigen::Map<Mat64> gW(dparams_flat->data() + off[i], l.W.rows(), l.W.cols());
      gW.noalias() = delta * prev.transpose();
      dparams_flat->segment(off[i] + l.W.size(), l.b.size()) = delta;
    }
    if (i > 0 || dinput) delta = l.W.transpose() * delta;
  }
  if (dinput) *dinput = delta;
}

MlpGrad backprop_params(const MlpParams& p, const ForwardTrace& tr, const Vec64& upstream) {
  Vec64 flat;
  backprop(p, tr, upstream, &flat, nullptr);
  MlpGrad g;
  int k = 0;
  for (const auto& l : p.layers) {
    Mat64 w(l.W.rows(), l.W.cols());
    Eigen::Map<Vec64>(w.data(), w.size()) = flat.segment(k, w.size());
    k += static_cast<int>(w.size());
    g.dW.push_back(std::move(w));
    g.db.push_back(flat.segment(k, l.b.size()));
    k += static_cast<int>(l.b.size());
  }
  return g;
}

Vec64 backprop_input(const MlpParams& p, const ForwardTrace& tr, const Vec64& upstream) {
  Vec64 d;
  backprop(p, tr, upstream, nullptr, &d);
  return d;
}

double param_norm_inf(const MlpParams& p) {
  double m = 0.0;
  for (const auto& l : p.layers) m = std::max({m, spectral_norm(l.W), l.b.norm()});
  return m;
}

MlpParams project_norm(const MlpParams& p) {
  MlpParams q = p;
  if (!q.bounded()) return q;
  for (auto& l : q.layers) {
    const double sw = spectral_norm(l.W);
    if (sw > q.a) l.W *= q.a / sw;
    const double nb = l.b.norm();
    if (nb > q.a) l.b *= q.a / nb;
  }
  return q;
}

namespace {

struct LayerConsts {
  std::vector<double> M, L;
};

LayerConsts layer_constants(const MlpParams& p) {
  if (!p.bounded()) throw std::invalid_argument("bound requires a finite norm bound a");
  LayerConsts c;
  for (const auto& l : p.layers) {
    const ActConstants k = constants(l.act);
    if (!k.L) throw std::invalid_argument("no smoothness constant available (ReLU present)");
    c.M.push_back(k.M);
    c.L.push_back(*k.L);
  }
  return c;
}

// sum_k L_k a^{shift+k} prod_{i<k} M_i^2 prod_{i>k} M_i, k = 1..N
double smooth_sum(const LayerConsts& c, double a, int shift) {
  const int n = static_cast<int>(c.M.size());
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    double term = c.L[k] * std::pow(a, shift + k + 1);
    for (int i = 0; i < k; ++i) term *= c.M[i] * c.M[i];
    for (int i = k + 1; i < n; ++i) term *= c.M[i];
    total += term;
  }
  return total;
}

double prod_m(const LayerConsts& c) {
  double r = 1.0;
  for (double m : c.M) r *= m;
  return r;
}

}  // namespace

double lipschitz_bound(const MlpParams& p) {
  const LayerConsts c = layer_constants(p);
  return std::pow(p.a, p.depth() - 1) * prod_m(c);
}

double smoothness_bound(const MlpParams& p) {
  const LayerConsts c = layer_constants(p);
  return smooth_sum(c, p.a, p.depth() - 2);
}

double input_lipschitz_bound(const MlpParams& p) {
  const LayerConsts c = layer_constants(p);
  return std::pow(p.a, p.depth()) * prod_m(c);
}

double input_smoothness_bound(const MlpParams& p) {
  const LayerConsts c = layer_constants(p);
  return smooth_sum(c, p.a, p.depth());
}

MlpParams init_mlp(const std::vector<int>& widths, const Activation& hidden, const Activation& last, double a,
                   const RngKey& key) {
  if (widths.size() < 2) throw std::invalid_argument("init_mlp: need at least input and output widths");
  MlpParams p;
  p.a = a;
  CounterStream rs(key.with_tag(Purpose::Init));
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    Layer l;
    const int fin = widths[i], fout = widths[i + 1];
    const double sd = 1.0 / std::sqrt(static_cast<double>(fin));
    l.W.resize(fout, fin);
    for (int r = 0; r < fout; ++r)
      for (int c = 0; c < fin; ++c) l.W(r, c) = sd * rs.normal();
    l.b.resize(fout);
    for (int r = 0; r < fout; ++r) l.b[r] = sd * rs.normal();
    l.act = i + 2 == widths.size() ? last : hidden;
    p.layers.push_back(std::move(l));
  }
  return project_norm(p);
}

}  // namespace vaeconv
