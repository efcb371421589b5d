#include "cityflow/flow.hpp"

#include <cmath>
#include <numbers>

#include "cityflow/error.hpp"
#include "cityflow/rng.hpp"

namespace cityflow {

using nn::Graph;
using nn::Matrix;

int FlowConfig::grid_tokens() const {
  const int g = latent_resolution / patch;
  return g * g * g;
}

int FlowConfig::token_dim() const { return patch * patch * patch * channels; }

void FlowConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ArgumentError("flow", what);
  };
  require(latent_resolution > 0 && channels > 0, "latent dims must be positive");
  require(patch > 0 && latent_resolution % patch == 0, "patch must divide latent resolution");
  require(d_model > 0 && heads > 0 && d_model % heads == 0, "heads must divide d_model");
  require(blocks >= 0 && d_cond > 0 && ffn_hidden > 0 && time_frequencies > 0,
          "block count, d_cond, ffn_hidden and time_frequencies must be positive");
}

Matrix patchify(const Latent& latent, int patch) {
  const int m = latent.resolution();
  const int c = latent.channels();
  if (patch <= 0 || m % patch != 0) throw ArgumentError("flow", "patch must divide latent resolution");
  const int g = m / patch;
  Matrix out(g * g * g, patch * patch * patch * c);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const int token = ((i / patch) * g + j / patch) * g + k / patch;
        const int local = ((i % patch) * patch + j % patch) * patch + k % patch;
        const std::size_t cell = (static_cast<std::size_t>(i) * m + j) * m + k;
        for (int ch = 0; ch < c; ++ch) out(token, local * c + ch) = latent.at(cell, ch);
      }
  return out;
}

Latent unpatchify(const Matrix& tokens, int latent_resolution, int channels, int patch) {
  const int m = latent_resolution;
  const int g = m / patch;
  if (tokens.rows != g * g * g || tokens.cols != patch * patch * patch * channels) {
    throw ArgumentError("flow", "token matrix does not match latent shape");
  }
  Latent out(m, channels);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const int token = ((i / patch) * g + j / patch) * g + k / patch;
        const int local = ((i % patch) * patch + j % patch) * patch + k % patch;
        const std::size_t cell = (static_cast<std::size_t>(i) * m + j) * m + k;
        for (int ch = 0; ch < channels; ++ch) out.at(cell, ch) = tokens(token, local * channels + ch);
      }
  return out;
}

namespace {

// Counter-based init so parameter values do not depend on creation order.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : seed_(seed) {}

  nn::Param normal(const std::string& name, int rows, int cols, double stddev) {
    nn::Param p{name, Matrix(rows, cols), {}};
    const Philox gen(seed_, ++stream_);
    for (std::size_t n = 0; n < p.value.size(); ++n) p.value.data[n] = stddev * gen.normal_at(n);
    return p;
  }

  static nn::Param filled(const std::string& name, int rows, int cols, double v) {
    return {name, Matrix(rows, cols, v), {}};
  }

  LinearParams linear(const std::string& name, int in, int out, double gain = 1.0) {
    return {normal(name + ".w", in, out, gain / std::sqrt(static_cast<double>(in))),
            filled(name + ".b", 1, out, 0.0)};
  }

  static NormParams norm(const std::string& name, int d) {
    return {filled(name + ".gamma", 1, d, 1.0), filled(name + ".beta", 1, d, 0.0)};
  }

  AttentionParams attention(const std::string& name, int d_query, int d_context, int d_model) {
    return {linear(name + ".q", d_query, d_model), linear(name + ".k", d_context, d_model),
            linear(name + ".v", d_context, d_model), linear(name + ".o", d_model, d_query)};
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_ = 0;
};

void collect(LinearParams& p, std::vector<nn::Param*>& out) {
  out.push_back(&p.w);
  out.push_back(&p.b);
}
void collect(NormParams& p, std::vector<nn::Param*>& out) {
  out.push_back(&p.gamma);
  out.push_back(&p.beta);
}
void collect(AttentionParams& p, std::vector<nn::Param*>& out) {
  collect(p.q, out);
  collect(p.k, out);
  collect(p.v, out);
  collect(p.o, out);
}

Matrix stack_tokens(std::span<const ConditionTokens> conds, int d_cond, const char* which) {
  if (conds.empty()) throw ArgumentError("flow", std::string("missing ") + which + " condition");
  const int per = conds.front().tokens.rows;
  if (per == 0) throw ArgumentError("flow", std::string(which) + " condition has no tokens");
  Matrix out(per * static_cast<int>(conds.size()), d_cond);
  for (std::size_t b = 0; b < conds.size(); ++b) {
    const Matrix& t = conds[b].tokens;
    if (t.rows != per || t.cols != d_cond) {
      throw ArgumentError("flow", std::string(which) + " condition tokens have inconsistent shape");
    }
    std::copy(t.data.begin(), t.data.end(), out.row(static_cast<int>(b) * per));
  }
  return out;
}

// Additive sinusoidal code of each token's 3D index.
Matrix position_codes(const FlowConfig& cfg) {
  const int g = cfg.latent_resolution / cfg.patch;
  const int freqs = cfg.d_model / 6;
  Matrix out(cfg.grid_tokens(), cfg.d_model);
  for (int a = 0; a < g; ++a)
    for (int b = 0; b < g; ++b)
      for (int c = 0; c < g; ++c) {
        const int token = (a * g + b) * g + c;
        const int idx[3] = {a, b, c};
        for (int axis = 0; axis < 3; ++axis) {
          for (int f = 0; f < freqs; ++f) {
            const double omega = std::pow(100.0, -static_cast<double>(f) / freqs);
            out(token, axis * 2 * freqs + 2 * f) = std::sin(idx[axis] * omega);
            out(token, axis * 2 * freqs + 2 * f + 1) = std::cos(idx[axis] * omega);
          }
        }
      }
  return out;
}

Matrix time_features(std::span<const double> t, int freqs) {
  Matrix out(static_cast<int>(t.size()), 2 * freqs);
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (int f = 0; f < freqs; ++f) {
      const double omega = std::pow(10000.0, -static_cast<double>(f) / freqs);
      out(static_cast<int>(b), f) = std::cos(1000.0 * t[b] * omega);
      out(static_cast<int>(b), freqs + f) = std::sin(1000.0 * t[b] * omega);
    }
  }
  return out;
}

}  // namespace

BlockWeights BlockWeights::init(int d_model, int d_cond, int ffn_hidden, std::uint64_t seed,
                                const std::string& prefix) {
  ParamInit init(seed);
  BlockWeights w;
  w.norm_self = ParamInit::norm(prefix + ".norm_self", d_model);
  w.self_attn = init.attention(prefix + ".self_attn", d_model, d_model, d_model);
  w.norm_cross = ParamInit::norm(prefix + ".norm_cross", d_model);
  w.cross_top = init.attention(prefix + ".cross_top", d_model, d_cond, d_model);
  w.cross_front = init.attention(prefix + ".cross_front", d_model, d_cond, d_model);
  w.norm_ffn = ParamInit::norm(prefix + ".norm_ffn", d_model);
  w.ffn_in = init.linear(prefix + ".ffn_in", d_model, ffn_hidden);
  w.ffn_out = init.linear(prefix + ".ffn_out", ffn_hidden, d_model);
  return w;
}

void BlockWeights::share_cross_init() {
  LinearParams* top[] = {&cross_top.q, &cross_top.k, &cross_top.v, &cross_top.o};
  LinearParams* front[] = {&cross_front.q, &cross_front.k, &cross_front.v, &cross_front.o};
  for (int n = 0; n < 4; ++n) {
    front[n]->w.value = top[n]->w.value;
    front[n]->b.value = top[n]->b.value;
  }
}

void BlockWeights::collect(std::vector<nn::Param*>& out) {
  cityflow::collect(norm_self, out);
  cityflow::collect(self_attn, out);
  cityflow::collect(norm_cross, out);
  cityflow::collect(cross_top, out);
  cityflow::collect(cross_front, out);
  cityflow::collect(norm_ffn, out);
  cityflow::collect(ffn_in, out);
  cityflow::collect(ffn_out, out);
}

Graph::Id apply_linear(Graph& g, Graph::Id x, const LinearParams& p, bool track) {
  return g.linear(x, g.parameter(p.w, track), g.parameter(p.b, track));
}

Graph::Id apply_norm(Graph& g, Graph::Id x, const NormParams& p, bool track) {
  return g.layer_norm(x, g.parameter(p.gamma, track), g.parameter(p.beta, track));
}

Graph::Id apply_attention(Graph& g, Graph::Id queries, Graph::Id context, const AttentionParams& p,
                          int groups, int heads, bool track) {
  const auto q = apply_linear(g, queries, p.q, track);
  const auto k = apply_linear(g, context, p.k, track);
  const auto v = apply_linear(g, context, p.v, track);
  return apply_linear(g, g.attention(q, k, v, groups, heads), p.o, track);
}

Graph::Id dual_block(Graph& g, Graph::Id f_in, Graph::Id c_top, Graph::Id c_front, const BlockWeights& w,
                     int groups, int heads, bool track) {
  const auto normed = apply_norm(g, f_in, w.norm_self, track);
  const auto f_self = g.add(f_in, apply_attention(g, normed, normed, w.self_attn, groups, heads, track));

  const auto query = apply_norm(g, f_self, w.norm_cross, track);
  const auto f_top = apply_attention(g, query, c_top, w.cross_top, groups, heads, track);
  const auto f_front = apply_attention(g, query, c_front, w.cross_front, groups, heads, track);
  const auto fused = g.scale(g.add(f_top, f_front), 0.5);
  const auto f_mid = g.add(f_self, fused);

  const auto hidden = g.gelu(apply_linear(g, apply_norm(g, f_mid, w.norm_ffn, track), w.ffn_in, track));
  return g.add(f_mid, apply_linear(g, hidden, w.ffn_out, track));
}

Matrix dual_block(const Matrix& f_in, const ConditionTokens& c_top, const ConditionTokens& c_front,
                  const BlockWeights& w, int heads) {
  Graph g;
  const auto out = dual_block(g, g.constant(f_in), g.constant(c_top.tokens), g.constant(c_front.tokens),
                              w, 1, heads, false);
  return g.value(out);
}

FlowModel FlowModel::initialize(const FlowConfig& config, std::uint64_t seed) {
  config.validate();
  FlowModel model(config);
  ParamInit init(seed);
  const int d = config.d_model;
  model.embed_ = init.linear("embed", config.token_dim(), d);
  model.time_in_ = init.linear("time.in", 2 * config.time_frequencies, d);
  model.time_out_ = init.linear("time.out", d, d);
  for (int b = 0; b < config.blocks; ++b) {
    auto block = BlockWeights::init(d, config.d_cond, config.ffn_hidden, derive_seed(seed, 1000 + b),
                                    "blocks." + std::to_string(b));
    block.share_cross_init();
    model.blocks_.push_back(std::move(block));
  }
  model.norm_out_ = ParamInit::norm("out.norm", d);
  model.unembed_ = init.linear("out.proj", d, config.token_dim(), 0.1);
  return model;
}

std::vector<nn::Param*> FlowModel::parameters() {
  std::vector<nn::Param*> out;
  collect(embed_, out);
  collect(time_in_, out);
  collect(time_out_, out);
  for (auto& b : blocks_) b.collect(out);
  collect(norm_out_, out);
  collect(unembed_, out);
  return out;
}

std::vector<const nn::Param*> FlowModel::parameters() const {
  auto mutable_params = const_cast<FlowModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

Graph::Id FlowModel::forward(Graph& g, std::span<const Latent> x, std::span<const double> t,
                             std::span<const ConditionTokens> c_top,
                             std::span<const ConditionTokens> c_front, bool track) const {
  const FlowConfig& cfg = config_;
  const int batch = static_cast<int>(x.size());
  if (batch == 0 || t.size() != x.size() || c_top.size() != x.size() || c_front.size() != x.size()) {
    throw ArgumentError("flow", "batch components have mismatched sizes");
  }
  const int tokens = cfg.grid_tokens();
  Matrix input(batch * tokens, cfg.token_dim());
  for (int b = 0; b < batch; ++b) {
    if (x[b].resolution() != cfg.latent_resolution || x[b].channels() != cfg.channels) {
      throw ArgumentError("flow", "latent shape does not match model config");
    }
    const Matrix p = patchify(x[b], cfg.patch);
    std::copy(p.data.begin(), p.data.end(), input.row(b * tokens));
  }
  const Matrix codes = position_codes(cfg);
  Matrix positions(batch * tokens, cfg.d_model);
  for (int b = 0; b < batch; ++b) std::copy(codes.data.begin(), codes.data.end(), positions.row(b * tokens));

  auto h = apply_linear(g, g.constant(std::move(input)), embed_, track);
  h = g.add(h, g.constant(std::move(positions)));
  auto temb = apply_linear(g, g.constant(time_features(t, cfg.time_frequencies)), time_in_, track);
  temb = apply_linear(g, g.silu(temb), time_out_, track);
  h = g.add(h, g.repeat_rows(temb, tokens));

  const auto ct = g.constant(stack_tokens(c_top, cfg.d_cond, "top"));
  const auto cf = g.constant(stack_tokens(c_front, cfg.d_cond, "frontal"));
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    h = dual_block(g, h, ct, cf, blocks_[b], batch, cfg.heads, track);
    if (!g.value(h).all_finite()) {
      throw NumericError("flow", "non-finite activations in block " + std::to_string(b));
    }
  }
  return apply_linear(g, apply_norm(g, h, norm_out_, track), unembed_, track);
}

std::vector<Latent> FlowModel::velocity_batch(std::span<const Latent> x, double t,
                                              std::span<const ConditionTokens> c_top,
                                              std::span<const ConditionTokens> c_front) const {
  Graph g;
  const std::vector<double> ts(x.size(), t);
  const auto out = forward(g, x, ts, c_top, c_front, false);
  const Matrix& v = g.value(out);
  const int tokens = config_.grid_tokens();
  std::vector<Latent> result;
  result.reserve(x.size());
  for (std::size_t b = 0; b < x.size(); ++b) {
    Matrix rows(tokens, v.cols);
    std::copy(v.row(static_cast<int>(b) * tokens), v.row(static_cast<int>(b + 1) * tokens), rows.data.begin());
    result.push_back(unpatchify(rows, config_.latent_resolution, config_.channels, config_.patch));
  }
  return result;
}

Latent FlowModel::velocity(const Latent& x, double t, const ConditionTokens& c_top,
                           const ConditionTokens& c_front) const {
  return velocity_batch(std::span(&x, 1), t, std::span(&c_top, 1), std::span(&c_front, 1)).front();
}

double FlowModel::loss(const FlowBatch& batch, bool accumulate_grad) const {
  batch.validate();
  std::vector<Latent> xt;
  Matrix target(static_cast<int>(batch.size()) * config_.grid_tokens(), config_.token_dim());
  xt.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    xt.push_back(forward_interpolate(batch.x0[b], batch.eps[b], batch.t[b]));
    Latent diff = batch.eps[b];
    auto d = diff.values();
    auto x0 = batch.x0[b].values();
    for (std::size_t n = 0; n < d.size(); ++n) d[n] -= x0[n];
    const Matrix p = patchify(diff, config_.patch);
    std::copy(p.data.begin(), p.data.end(), target.row(static_cast<int>(b) * config_.grid_tokens()));
  }
  Graph g;
  const auto pred = forward(g, xt, batch.t, batch.c_top, batch.c_front, accumulate_grad);
  const auto loss = g.mse(pred, g.constant(std::move(target)));
  const double value = g.value(loss).data[0];
  if (!std::isfinite(value)) throw NumericError("flow", "non-finite loss");
  if (accumulate_grad) g.backward(loss);
  return value;
}

}  // namespace cityflow
