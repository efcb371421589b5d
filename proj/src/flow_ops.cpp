#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "cityflow/binary_io.hpp"
#include "cityflow/error.hpp"
#include "cityflow/flow.hpp"
#include "cityflow/rng.hpp"

namespace cityflow {

using nn::Matrix;

ConditionTokens featurize_image(const GrayImage& image, int patch, int d_cond, std::uint64_t seed,
                                ConditionSource source) {
  if (patch <= 0 || image.width % patch != 0 || image.height % patch != 0) {
    throw ArgumentError("flow", "image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                    " not divisible by patch " + std::to_string(patch));
  }
  if (d_cond <= 0) throw ArgumentError("flow", "d_cond must be positive");
  const int tile = patch * patch;
  const Philox gen(seed, /*stream=*/0x50415443);  // "PATC"
  Matrix w(tile, d_cond);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(tile));
  for (std::size_t n = 0; n < w.size(); ++n) w.data[n] = stddev * gen.normal_at(n);

  const int rows = image.height / patch;
  const int cols = image.width / patch;
  Matrix flat(rows * cols, tile);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int dr = 0; dr < patch; ++dr)
        for (int dc = 0; dc < patch; ++dc)
          flat(r * cols + c, dr * patch + dc) = image.at(r * patch + dr, c * patch + dc);
  ConditionTokens out;
  nn::matmul(flat, w, out.tokens);
  out.source = source;
  return out;
}

Latent forward_interpolate(const Latent& x0, const Latent& eps, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("flow", "t = " + std::to_string(t) + " outside [0, 1]");
  if (!x0.same_shape(eps)) throw ArgumentError("flow", "x0 and eps shapes differ");
  Latent out = x0;
  auto o = out.values();
  auto a = x0.values();
  auto e = eps.values();
  for (std::size_t n = 0; n < o.size(); ++n) o[n] = (1.0 - t) * a[n] + t * e[n];
  return out;
}

std::vector<Latent> VelocityField::velocity_batch(std::span<const Latent> x, double t,
                                                  std::span<const ConditionTokens> c_top,
                                                  std::span<const ConditionTokens> c_front) const {
  std::vector<Latent> out;
  out.reserve(x.size());
  for (std::size_t b = 0; b < x.size(); ++b) out.push_back(velocity(x[b], t, c_top[b], c_front[b]));
  return out;
}

void FlowBatch::validate() const {
  if (x0.empty()) throw ArgumentError("flow", "empty batch");
  if (eps.size() != x0.size() || t.size() != x0.size() || c_top.size() != x0.size() ||
      c_front.size() != x0.size()) {
    throw ArgumentError("flow", "batch components have mismatched sizes");
  }
  for (std::size_t b = 0; b < x0.size(); ++b) {
    if (!(t[b] >= 0.0 && t[b] <= 1.0)) throw DomainError("flow", "batch t outside [0, 1]");
    if (!x0[b].same_shape(eps[b]) || !x0[b].same_shape(x0.front())) {
      throw ArgumentError("flow", "batch latent shapes differ");
    }
  }
}

double cfm_loss(const VelocityField& field, const FlowBatch& batch) {
  batch.validate();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Latent xt = forward_interpolate(batch.x0[b], batch.eps[b], batch.t[b]);
    const Latent v = field.velocity(xt, batch.t[b], batch.c_top[b], batch.c_front[b]);
    auto pv = v.values();
    auto e = batch.eps[b].values();
    auto x0 = batch.x0[b].values();
    for (std::size_t n = 0; n < pv.size(); ++n) {
      const double d = pv[n] - (e[n] - x0[n]);
      sum += d * d;
    }
    count += pv.size();
  }
  const double loss = sum / static_cast<double>(count);
  if (!std::isfinite(loss)) throw NumericError("flow", "non-finite loss");
  return loss;
}

void TrainableField::zero_grad() {
  for (nn::Param* p : parameters()) p->grad = Matrix(p->value.rows, p->value.cols);
}

std::size_t TrainableField::parameter_count() {
  std::size_t n = 0;
  for (const nn::Param* p : parameters()) n += p->value.size();
  return n;
}

std::vector<Latent> sample_batch(const VelocityField& field, std::vector<Latent> x,
                                 std::span<const ConditionTokens> c_top,
                                 std::span<const ConditionTokens> c_front, int steps) {
  if (steps < 1) throw ArgumentError("flow", "sampler needs at least one step");
  if (c_top.size() != x.size() || c_front.size() != x.size()) {
    throw ArgumentError("flow", "sampler conditions do not match batch");
  }
  const double dt = 1.0 / steps;
  for (int step = 0; step < steps; ++step) {
    const double t = 1.0 - static_cast<double>(step) / steps;
    const auto v = field.velocity_batch(x, t, c_top, c_front);
    for (std::size_t b = 0; b < x.size(); ++b) {
      auto xs = x[b].values();
      auto vs = v[b].values();
      for (std::size_t n = 0; n < xs.size(); ++n) {
        xs[n] -= dt * vs[n];
        if (!std::isfinite(xs[n])) {
          throw NumericError("flow", "non-finite sampler state at step " + std::to_string(step));
        }
      }
    }
  }
  return x;
}

Latent sample(const VelocityField& field, const Latent& init, const ConditionTokens& c_top,
              const ConditionTokens& c_front, int steps) {
  return sample_batch(field, {init}, std::span(&c_top, 1), std::span(&c_front, 1), steps).front();
}

TrainResult train(TrainableField& model, std::span<const TrainExample> data, const TrainSchedule& schedule) {
  if (data.empty()) throw ArgumentError("flow", "training set is empty");
  if (schedule.steps < 0 || schedule.batch_size <= 0) throw ArgumentError("flow", "invalid schedule");
  const auto& mix = schedule.mix;
  for (const auto& ex : data) {
    if (!ex.priors.empty() && (mix.train_lambdas.empty() || mix.train_lods.empty())) {
      throw ArgumentError("flow", "prior mix policy needs lambdas and LODs");
    }
    for (int lod : mix.train_lods) {
      if (!ex.priors.empty() && (lod < 0 || lod >= static_cast<int>(ex.priors.size()))) {
        throw ArgumentError("flow", "example has no prior for LOD " + std::to_string(lod));
      }
    }
  }

  const auto params = model.parameters();
  std::vector<Matrix> momentum;
  for (const nn::Param* p : params) momentum.emplace_back(p->value.rows, p->value.cols);

  TrainResult result;
  result.loss_trace.reserve(schedule.steps);
  int diverged_for = 0;
  for (int step = 0; step < schedule.steps; ++step) {
    Rng rng(schedule.seed, static_cast<std::uint64_t>(step) + 1);
    FlowBatch batch;
    for (int b = 0; b < schedule.batch_size; ++b) {
      const TrainExample& ex = data[rng.index(data.size())];
      const double t = rng.uniform();
      Latent eps = sample_noise(ex.x0.resolution(), ex.x0.channels(),
                                derive_seed(schedule.seed, static_cast<std::uint64_t>(step) * schedule.batch_size + b));
      if (!ex.priors.empty()) {
        const int lod = mix.train_lods[rng.index(mix.train_lods.size())];
        const double lambda = mix.train_lambdas[rng.index(mix.train_lambdas.size())];
        eps = cosine_interpolate(ex.priors[lod], eps, lambda);
      }
      batch.x0.push_back(ex.x0);
      batch.eps.push_back(std::move(eps));
      batch.t.push_back(t);
      batch.c_top.push_back(ex.c_top);
      batch.c_front.push_back(ex.c_front);
    }

    model.zero_grad();
    const double loss = model.loss(batch, true);
    result.loss_trace.push_back(loss);

    double scale = 1.0;
    if (schedule.clip_norm > 0.0) {
      double norm2 = 0.0;
      for (const nn::Param* p : params)
        for (double g : p->grad.data) norm2 += g * g;
      const double norm = std::sqrt(norm2);
      if (norm > schedule.clip_norm) scale = schedule.clip_norm / norm;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& value = params[i]->value.data;
      const auto& grad = params[i]->grad.data;
      auto& m = momentum[i].data;
      for (std::size_t n = 0; n < value.size(); ++n) {
        m[n] = schedule.momentum * m[n] + scale * grad[n];
        value[n] -= schedule.learning_rate * m[n];
      }
    }

    if (loss > 1e3 * result.loss_trace.front()) {
      if (++diverged_for >= 100) {
        throw NumericError("flow", "training diverged at step " + std::to_string(step));
      }
    } else {
      diverged_for = 0;
    }
  }
  return result;
}

double grad_check(TrainableField& model, const FlowBatch& batch, const GradCheckOptions& options) {
  const auto params = model.parameters();
  model.zero_grad();
  model.loss(batch, true);
  std::vector<Matrix> analytic;
  std::size_t total = 0;
  for (const nn::Param* p : params) {
    analytic.push_back(p->grad);
    total += p->value.size();
  }
  if (total == 0) return 0.0;

  Rng rng(options.seed, 0x47524144);  // "GRAD"
  double worst = 0.0;
  for (int s = 0; s < options.samples; ++s) {
    std::size_t flat = rng.index(total);
    std::size_t which = 0;
    while (flat >= params[which]->value.size()) flat -= params[which++]->value.size();
    double& theta = params[which]->value.data[flat];
    const double original = theta;
    theta = original + options.epsilon;
    const double up = model.loss(batch, false);
    theta = original - options.epsilon;
    const double down = model.loss(batch, false);
    theta = original;
    const double numeric = (up - down) / (2.0 * options.epsilon);
    const double exact = analytic[which].data[flat];
    const double denom = std::max({std::abs(exact), std::abs(numeric), options.denominator_floor});
    worst = std::max(worst, std::abs(exact - numeric) / denom);
  }
  return worst;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<double> config_values(const FlowConfig& c) {
  return {double(c.latent_resolution), double(c.channels), double(c.patch),
          double(c.d_model),           double(c.heads),    double(c.blocks),
          double(c.d_cond),            double(c.ffn_hidden), double(c.time_frequencies)};
}

void put_tensor(io::ByteWriter& w, const std::string& name, const std::vector<std::uint32_t>& dims,
                std::span<const double> data) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.raw(name);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.put<std::uint32_t>(d);
  for (double v : data) w.put<float>(static_cast<float>(v));
}

}  // namespace

std::string save_checkpoint(const FlowModel& model) {
  io::ByteWriter w;
  w.magic("UFLW");
  w.put<std::uint32_t>(kCheckpointVersion);
  const auto cfg = config_values(model.config());
  put_tensor(w, "config", {static_cast<std::uint32_t>(cfg.size())}, cfg);
  for (const nn::Param* p : model.parameters()) {
    put_tensor(w, p->name,
               {static_cast<std::uint32_t>(p->value.rows), static_cast<std::uint32_t>(p->value.cols)},
               p->value.data);
  }
  return w.take();
}

FlowModel load_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes, "flow");
  r.expect_magic("UFLW");
  if (const auto version = r.get<std::uint32_t>(); version != kCheckpointVersion) {
    throw IoError("flow", "unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, std::pair<std::vector<std::uint32_t>, std::vector<double>>> tensors;
  while (!r.at_end()) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len));
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw IoError("flow", "tensor rank too large in checkpoint");
    std::vector<std::uint32_t> dims(rank);
    std::size_t count = 1;
    for (auto& d : dims) {
      d = r.get<std::uint32_t>();
      count *= d;
    }
    if (count > bytes.size()) throw IoError("flow", "tensor \"" + name + "\" larger than checkpoint");
    std::vector<double> data(count);
    for (double& v : data) v = r.get<float>();
    tensors[name] = {std::move(dims), std::move(data)};
  }
  const auto cfg_it = tensors.find("config");
  if (cfg_it == tensors.end() || cfg_it->second.second.size() != 9) {
    throw IoError("flow", "checkpoint has no valid config tensor");
  }
  const auto& c = cfg_it->second.second;
  FlowConfig config{static_cast<int>(c[0]), static_cast<int>(c[1]), static_cast<int>(c[2]),
                    static_cast<int>(c[3]), static_cast<int>(c[4]), static_cast<int>(c[5]),
                    static_cast<int>(c[6]), static_cast<int>(c[7]), static_cast<int>(c[8])};
  FlowModel model = FlowModel::initialize(config, 0);
  for (nn::Param* p : model.parameters()) {
    const auto it = tensors.find(p->name);
    if (it == tensors.end()) throw IoError("flow", "checkpoint is missing tensor \"" + p->name + "\"");
    const auto& [dims, data] = it->second;
    if (dims.size() != 2 || static_cast<int>(dims[0]) != p->value.rows ||
        static_cast<int>(dims[1]) != p->value.cols) {
      throw IoError("flow", "tensor \"" + p->name + "\" has the wrong shape");
    }
    p->value.data = data;
  }
  return model;
}

std::string loss_trace_csv(std::span<const double> trace) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << trace[i] << '\n';
  return out.str();
}

}  // namespace cityflow
