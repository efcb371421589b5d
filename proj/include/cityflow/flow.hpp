#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cityflow/image.hpp"
#include "cityflow/latent.hpp"
#include "cityflow/tensor.hpp"

namespace cityflow {

enum class ConditionSource { top, frontal };

// A sequence of d_cond-dimensional condition vectors (one per row).
struct ConditionTokens {
  nn::Matrix tokens;
  ConditionSource source = ConditionSource::top;
};

// Non-overlapping patch x patch tiles, flattened and mapped through a fixed
// seed-derived linear map to d_cond-dimensional tokens, in row-major tile order.
ConditionTokens featurize_image(const GrayImage& image, int patch, int d_cond, std::uint64_t seed,
                                ConditionSource source = ConditionSource::top);

// x(t) = (1 - t) x0 + t eps.
Latent forward_interpolate(const Latent& x0, const Latent& eps, double t);

struct FlowConfig {
  int latent_resolution = 16;
  int channels = 8;
  int patch = 4;  // latent cells per token along each axis
  int d_model = 64;
  int heads = 2;
  int blocks = 2;
  int d_cond = 32;
  int ffn_hidden = 256;
  int time_frequencies = 16;

  int grid_tokens() const;
  int token_dim() const;
  void validate() const;
  friend bool operator==(const FlowConfig&, const FlowConfig&) = default;
};

// Latent <-> token rows. Token (a, b, c) covers latent cells
// [a*patch, (a+1)*patch) x ... and is row (a*G + b)*G + c for G = M/patch.
nn::Matrix patchify(const Latent& latent, int patch);
Latent unpatchify(const nn::Matrix& tokens, int latent_resolution, int channels, int patch);

class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual Latent velocity(const Latent& x, double t, const ConditionTokens& c_top,
                          const ConditionTokens& c_front) const = 0;

  // Loops over velocity() unless overridden with a batched evaluation.
  virtual std::vector<Latent> velocity_batch(std::span<const Latent> x, double t,
                                             std::span<const ConditionTokens> c_top,
                                             std::span<const ConditionTokens> c_front) const;
};

struct FlowBatch {
  std::vector<Latent> x0;
  std::vector<Latent> eps;
  std::vector<double> t;
  std::vector<ConditionTokens> c_top;
  std::vector<ConditionTokens> c_front;

  std::size_t size() const { return x0.size(); }
  void validate() const;
};

// Conditional flow matching objective: per-element mean of
// ||v(x(t), t) - (eps - x0)||^2 over the batch.
double cfm_loss(const VelocityField& field, const FlowBatch& batch);

// A velocity field with parameters and analytic gradients of cfm_loss.
class TrainableField : public VelocityField {
 public:
  virtual std::vector<nn::Param*> parameters() = 0;
  // cfm_loss over `batch`; with accumulate_grad the gradient of the loss is
  // added to every parameter's grad buffer.
  virtual double loss(const FlowBatch& batch, bool accumulate_grad) const = 0;

  void zero_grad();
  std::size_t parameter_count();
};

struct LinearParams {
  nn::Param w;  // in x out
  nn::Param b;  // 1 x out
};

struct NormParams {
  nn::Param gamma;
  nn::Param beta;
};

struct AttentionParams {
  LinearParams q, k, v, o;
};

// One transformer block with parallel top-view and frontal-view
// cross-attention pathways between self-attention and the FFN.
struct BlockWeights {
  NormParams norm_self;
  AttentionParams self_attn;
  NormParams norm_cross;
  AttentionParams cross_top;
  AttentionParams cross_front;
  NormParams norm_ffn;
  LinearParams ffn_in;
  LinearParams ffn_out;

  static BlockWeights init(int d_model, int d_cond, int ffn_hidden, std::uint64_t seed,
                           const std::string& prefix);
  // Both pathways start from the same weights.
  void share_cross_init();
  void collect(std::vector<nn::Param*>& out);
};

nn::Graph::Id apply_linear(nn::Graph& g, nn::Graph::Id x, const LinearParams& p, bool track);
nn::Graph::Id apply_norm(nn::Graph& g, nn::Graph::Id x, const NormParams& p, bool track);
// Output-projected multi-head attention of `queries` over `context`.
nn::Graph::Id apply_attention(nn::Graph& g, nn::Graph::Id queries, nn::Graph::Id context,
                              const AttentionParams& p, int groups, int heads, bool track);

// Pre-norm block: F_self = F + SelfAttn(LN F);
// fused = (CrossAttn_top(LN F_self, c_top) + CrossAttn_front(LN F_self, c_front)) / 2;
// F_mid = F_self + fused; out = F_mid + FFN(LN F_mid).
nn::Graph::Id dual_block(nn::Graph& g, nn::Graph::Id f_in, nn::Graph::Id c_top, nn::Graph::Id c_front,
                         const BlockWeights& w, int groups, int heads, bool track);

// Eager single-sequence evaluation of dual_block.
nn::Matrix dual_block(const nn::Matrix& f_in, const ConditionTokens& c_top,
                      const ConditionTokens& c_front, const BlockWeights& w, int heads);

class FlowModel : public TrainableField {
 public:
  static FlowModel initialize(const FlowConfig& config, std::uint64_t seed);

  const FlowConfig& config() const noexcept { return config_; }
  std::vector<nn::Param*> parameters() override;
  std::vector<const nn::Param*> parameters() const;

  Latent velocity(const Latent& x, double t, const ConditionTokens& c_top,
                  const ConditionTokens& c_front) const override;
  std::vector<Latent> velocity_batch(std::span<const Latent> x, double t,
                                     std::span<const ConditionTokens> c_top,
                                     std::span<const ConditionTokens> c_front) const override;
  double loss(const FlowBatch& batch, bool accumulate_grad) const override;

  // Builds the network on `g` and returns the (B*T x token_dim) velocity node.
  nn::Graph::Id forward(nn::Graph& g, std::span<const Latent> x, std::span<const double> t,
                        std::span<const ConditionTokens> c_top,
                        std::span<const ConditionTokens> c_front, bool track) const;

  std::vector<BlockWeights>& blocks() noexcept { return blocks_; }

 private:
  explicit FlowModel(const FlowConfig& config) : config_(config) {}

  FlowConfig config_;
  LinearParams embed_;
  LinearParams time_in_;
  LinearParams time_out_;
  std::vector<BlockWeights> blocks_;
  NormParams norm_out_;
  LinearParams unembed_;
};

// Euler integration of the backward process from t = 1 to t = 0 starting at
// `init`: x <- x - dt * v(x, t), dt = 1/steps.
Latent sample(const VelocityField& field, const Latent& init, const ConditionTokens& c_top,
              const ConditionTokens& c_front, int steps);
std::vector<Latent> sample_batch(const VelocityField& field, std::vector<Latent> init,
                                 std::span<const ConditionTokens> c_top,
                                 std::span<const ConditionTokens> c_front, int steps);

// One training example. `priors` holds normalized prior latents indexed by
// LOD; when empty the flow endpoint is pure noise.
struct TrainExample {
  Latent x0;
  std::vector<Latent> priors;
  ConditionTokens c_top;
  ConditionTokens c_front;
};

struct TrainSchedule {
  int steps = 1000;
  int batch_size = 16;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
  std::uint64_t seed = 0;
  PriorMixPolicy mix;
};

struct TrainResult {
  std::vector<double> loss_trace;
};

// Minibatch SGD with momentum on cfm_loss. t ~ U(0, 1); for examples with
// priors the endpoint is cosine_interpolate(prior[lod], eps, lambda) with lod
// and lambda drawn from the schedule's mix policy. Bit-reproducible per seed.
TrainResult train(TrainableField& model, std::span<const TrainExample> data,
                  const TrainSchedule& schedule);

struct GradCheckOptions {
  double epsilon = 1e-5;
  int samples = 200;
  std::uint64_t seed = 0;
  // Above central-difference roundoff, so parameters whose true gradient is
  // zero (attention key biases) do not register as relative error.
  double denominator_floor = 1e-6;
};

// Max relative error between analytic gradients and central differences
// over `samples` randomly chosen scalar parameters.
double grad_check(TrainableField& model, const FlowBatch& batch, const GradCheckOptions& options = {});

// "UFLW" checkpoint: version, then named f32 tensors.
std::string save_checkpoint(const FlowModel& model);
FlowModel load_checkpoint(std::string_view bytes);

// "step,loss" CSV.
std::string loss_trace_csv(std::span<const double> trace);

}  // namespace cityflow
