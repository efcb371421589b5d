#include "cityflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cityflow/error.hpp"

namespace cityflow::nn {

bool Matrix::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
  c = Matrix(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    double* crow = c.row(i);
    const double* arow = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

void matmul_add_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      crow[j] += s;
    }
  }
}

void matmul_add_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.row(i);
      for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

Graph::Id Graph::push(Matrix value, bool requires_grad) {
  nodes_.push_back({std::move(value), {}, requires_grad, {}});
  return static_cast<Id>(nodes_.size() - 1);
}

Matrix& Graph::grad(Id id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

bool Graph::needs(std::initializer_list<Id> ids) const {
  return std::any_of(ids.begin(), ids.end(), [&](Id i) { return nodes_[i].requires_grad; });
}

Graph::Id Graph::constant(Matrix value) { return push(std::move(value), false); }

Graph::Id Graph::parameter(const Param& param, bool track) {
  const Id id = push(param.value, track);
  if (!track) return id;
  nodes_[id].backward = [this, id, &param] {
    const Matrix& g = nodes_[id].grad;
    if (!param.grad.same_shape(param.value)) param.grad = Matrix(param.value.rows, param.value.cols);
    for (std::size_t n = 0; n < g.size(); ++n) param.grad.data[n] += g.data[n];
  };
  return id;
}

Graph::Id Graph::matmul(Id a, Id b) {
  if (value(a).cols != value(b).rows) throw ArgumentError("nn", "matmul shape mismatch");
  Matrix out;
  nn::matmul(value(a), value(b), out);
  const Id id = push(std::move(out), needs({a, b}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, a, b] {
      const Matrix& g = nodes_[id].grad;
      if (nodes_[a].requires_grad) matmul_add_nt(g, value(b), grad(a));
      if (nodes_[b].requires_grad) matmul_add_tn(value(a), g, grad(b));
    };
  }
  return id;
}

Graph::Id Graph::linear(Id x, Id w, Id b) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(w);
  const Matrix& bv = value(b);
  if (xv.cols != wv.rows || bv.rows != 1 || bv.cols != wv.cols) {
    throw ArgumentError("nn", "linear shape mismatch");
  }
  Matrix out;
  nn::matmul(xv, wv, out);
  for (int r = 0; r < out.rows; ++r) {
    double* orow = out.row(r);
    for (int c = 0; c < out.cols; ++c) orow[c] += bv.data[c];
  }
  const Id id = push(std::move(out), needs({x, w, b}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, x, w, b] {
      const Matrix& g = nodes_[id].grad;
      if (nodes_[x].requires_grad) matmul_add_nt(g, value(w), grad(x));
      if (nodes_[w].requires_grad) matmul_add_tn(value(x), g, grad(w));
      if (nodes_[b].requires_grad) {
        Matrix& gb = grad(b);
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) gb.data[c] += g(r, c);
      }
    };
  }
  return id;
}

Graph::Id Graph::add(Id a, Id b) {
  if (!value(a).same_shape(value(b))) throw ArgumentError("nn", "add shape mismatch");
  Matrix out = value(a);
  const Matrix& bv = value(b);
  for (std::size_t n = 0; n < out.size(); ++n) out.data[n] += bv.data[n];
  const Id id = push(std::move(out), needs({a, b}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, a, b] {
      const Matrix& g = nodes_[id].grad;
      for (Id src : {a, b}) {
        if (!nodes_[src].requires_grad) continue;
        Matrix& gs = grad(src);
        for (std::size_t n = 0; n < g.size(); ++n) gs.data[n] += g.data[n];
      }
    };
  }
  return id;
}

Graph::Id Graph::scale(Id a, double s) {
  Matrix out = value(a);
  for (double& v : out.data) v *= s;
  const Id id = push(std::move(out), needs({a}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, a, s] {
      const Matrix& g = nodes_[id].grad;
      Matrix& ga = grad(a);
      for (std::size_t n = 0; n < g.size(); ++n) ga.data[n] += s * g.data[n];
    };
  }
  return id;
}

Graph::Id Graph::layer_norm(Id x, Id gamma, Id beta, double eps) {
  const Matrix& xv = value(x);
  const int d = xv.cols;
  if (value(gamma).cols != d || value(beta).cols != d) throw ArgumentError("nn", "layer_norm shape mismatch");
  Matrix normalized(xv.rows, d);
  std::vector<double> inv_std(xv.rows);
  Matrix out(xv.rows, d);
  const Matrix& g = value(gamma);
  const Matrix& b = value(beta);
  for (int r = 0; r < xv.rows; ++r) {
    const double* xr = xv.row(r);
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= d;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < d; ++c) {
      normalized(r, c) = (xr[c] - mean) * inv_std[r];
      out(r, c) = g.data[c] * normalized(r, c) + b.data[c];
    }
  }
  const Id id = push(std::move(out), needs({x, gamma, beta}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, x, gamma, beta, normalized = std::move(normalized),
                           inv_std = std::move(inv_std)] {
      const Matrix& gout = nodes_[id].grad;
      const int d = gout.cols;
      if (nodes_[gamma].requires_grad || nodes_[beta].requires_grad) {
        Matrix& gg = grad(gamma);
        Matrix& gb = grad(beta);
        for (int r = 0; r < gout.rows; ++r) {
          for (int c = 0; c < d; ++c) {
            gg.data[c] += gout(r, c) * normalized(r, c);
            gb.data[c] += gout(r, c);
          }
        }
      }
      if (!nodes_[x].requires_grad) return;
      Matrix& gx = grad(x);
      const Matrix& gam = value(gamma);
      for (int r = 0; r < gout.rows; ++r) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int c = 0; c < d; ++c) {
          const double dxhat = gout(r, c) * gam.data[c];
          mean_dxhat += dxhat;
          mean_dxhat_xhat += dxhat * normalized(r, c);
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        for (int c = 0; c < d; ++c) {
          const double dxhat = gout(r, c) * gam.data[c];
          gx(r, c) += inv_std[r] * (dxhat - mean_dxhat - normalized(r, c) * mean_dxhat_xhat);
        }
      }
    };
  }
  return id;
}

Graph::Id Graph::gelu(Id x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  Matrix out = value(x);
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::tanh(k * (v + a * v * v * v)));
  const Id id = push(std::move(out), needs({x}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, x] {
      const Matrix& g = nodes_[id].grad;
      const Matrix& xv = value(x);
      Matrix& gx = grad(x);
      for (std::size_t n = 0; n < g.size(); ++n) {
        const double v = xv.data[n];
        const double th = std::tanh(k * (v + a * v * v * v));
        const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * k * (1.0 + 3.0 * a * v * v);
        gx.data[n] += g.data[n] * d;
      }
    };
  }
  return id;
}

Graph::Id Graph::silu(Id x) {
  Matrix out = value(x);
  for (double& v : out.data) v = v / (1.0 + std::exp(-v));
  const Id id = push(std::move(out), needs({x}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, x] {
      const Matrix& g = nodes_[id].grad;
      const Matrix& xv = value(x);
      Matrix& gx = grad(x);
      for (std::size_t n = 0; n < g.size(); ++n) {
        const double v = xv.data[n];
        const double s = 1.0 / (1.0 + std::exp(-v));
        gx.data[n] += g.data[n] * s * (1.0 + v * (1.0 - s));
      }
    };
  }
  return id;
}

Graph::Id Graph::repeat_rows(Id x, int times) {
  const Matrix& xv = value(x);
  Matrix out(xv.rows * times, xv.cols);
  for (int r = 0; r < xv.rows; ++r)
    for (int t = 0; t < times; ++t) std::copy(xv.row(r), xv.row(r) + xv.cols, out.row(r * times + t));
  const Id id = push(std::move(out), needs({x}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, x, times] {
      const Matrix& g = nodes_[id].grad;
      Matrix& gx = grad(x);
      for (int r = 0; r < gx.rows; ++r)
        for (int t = 0; t < times; ++t)
          for (int c = 0; c < gx.cols; ++c) gx(r, c) += g(r * times + t, c);
    };
  }
  return id;
}

Graph::Id Graph::attention(Id q, Id k, Id v, int groups, int heads) {
  const Matrix& qv = value(q);
  const Matrix& kv = value(k);
  const Matrix& vv = value(v);
  const int d = qv.cols;
  if (kv.cols != d || vv.cols != d || kv.rows != vv.rows || heads <= 0 || d % heads != 0 ||
      groups <= 0 || qv.rows % groups != 0 || kv.rows % groups != 0) {
    throw ArgumentError("nn", "attention shape mismatch");
  }
  const int tq = qv.rows / groups;
  const int tk = kv.rows / groups;
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[((g*heads + h)*tq + i)*tk + j]
  std::vector<double> probs(static_cast<std::size_t>(groups) * heads * tq * tk);
  Matrix out(qv.rows, d);
  std::vector<double> scores(tk);
  for (int g = 0; g < groups; ++g) {
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < tq; ++i) {
        const double* qi = qv.row(g * tq + i) + off;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < tk; ++j) {
          const double* kj = kv.row(g * tk + j) + off;
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[j] = s * inv_sqrt;
          mx = std::max(mx, scores[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < tk; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          sum += scores[j];
        }
        double* p = &probs[((static_cast<std::size_t>(g) * heads + h) * tq + i) * tk];
        double* oi = out.row(g * tq + i) + off;
        for (int j = 0; j < tk; ++j) {
          p[j] = scores[j] / sum;
          const double* vj = vv.row(g * tk + j) + off;
          for (int c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  const Id id = push(std::move(out), needs({q, k, v}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, q, k, v, groups, heads, tq, tk, dh, inv_sqrt,
                           probs = std::move(probs)] {
      const Matrix& gout = nodes_[id].grad;
      const Matrix& qv = value(q);
      const Matrix& kv = value(k);
      const Matrix& vv = value(v);
      const bool need_q = nodes_[q].requires_grad;
      const bool need_k = nodes_[k].requires_grad;
      const bool need_v = nodes_[v].requires_grad;
      Matrix* gq = need_q ? &grad(q) : nullptr;
      Matrix* gk = need_k ? &grad(k) : nullptr;
      Matrix* gv = need_v ? &grad(v) : nullptr;
      std::vector<double> dp(tk);
      for (int g = 0; g < groups; ++g) {
        for (int h = 0; h < heads; ++h) {
          const int off = h * dh;
          for (int i = 0; i < tq; ++i) {
            const double* p = &probs[((static_cast<std::size_t>(g) * heads + h) * tq + i) * tk];
            const double* goi = gout.row(g * tq + i) + off;
            double dot = 0.0;
            for (int j = 0; j < tk; ++j) {
              const double* vj = vv.row(g * tk + j) + off;
              double s = 0.0;
              for (int c = 0; c < dh; ++c) s += goi[c] * vj[c];
              dp[j] = s;
              dot += s * p[j];
              if (need_v) {
                double* gvj = gv->row(g * tk + j) + off;
                for (int c = 0; c < dh; ++c) gvj[c] += p[j] * goi[c];
              }
            }
            const double* qi = qv.row(g * tq + i) + off;
            for (int j = 0; j < tk; ++j) {
              const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
              if (ds == 0.0) continue;
              if (need_q) {
                double* gqi = gq->row(g * tq + i) + off;
                const double* kj = kv.row(g * tk + j) + off;
                for (int c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
              }
              if (need_k) {
                double* gkj = gk->row(g * tk + j) + off;
                for (int c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
              }
            }
          }
        }
      }
    };
  }
  return id;
}

Graph::Id Graph::mse(Id prediction, Id target) {
  const Matrix& p = value(prediction);
  const Matrix& t = value(target);
  if (!p.same_shape(t)) throw ArgumentError("nn", "mse shape mismatch");
  double sum = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    const double d = p.data[n] - t.data[n];
    sum += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(p.size());
  const Id id = push(Matrix(1, 1, sum * inv_n), needs({prediction, target}));
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, id, prediction, target, inv_n] {
      const double g = nodes_[id].grad.data[0];
      const Matrix& p = value(prediction);
      const Matrix& t = value(target);
      if (nodes_[prediction].requires_grad) {
        Matrix& gp = grad(prediction);
        for (std::size_t n = 0; n < p.size(); ++n) gp.data[n] += 2.0 * g * inv_n * (p.data[n] - t.data[n]);
      }
      if (nodes_[target].requires_grad) {
        Matrix& gt = grad(target);
        for (std::size_t n = 0; n < p.size(); ++n) gt.data[n] -= 2.0 * g * inv_n * (p.data[n] - t.data[n]);
      }
    };
  }
  return id;
}

void Graph::backward(Id scalar) {
  if (value(scalar).size() != 1) throw ArgumentError("nn", "backward() needs a scalar node");
  grad(scalar).data[0] = 1.0;
  for (Id id = scalar; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.backward && n.grad.size() == n.value.size()) n.backward();
  }
}

}  // namespace cityflow::nn
