#pragma once

#include <span>
#include <vector>

#include "ppd/context.hpp"
#include "ppd/graph.hpp"
#include "ppd/schedule.hpp"

namespace ppd {

struct DenoiserConfig {
  int data_dim = 8;
  int time_dim = 8;
  int width = 32;
  int attn_dim = 16;
  int token_dim = 8;
  int user_dim = 3;
};

// Conditional noise predictor: an MLP trunk over [x_t, time features], a
// cross-attention block reading the context tokens plus a decoupled user
// branch, and an output head. The user branch is the only part that trains
// during preference alignment; with a zero user embedding its contribution
// is exactly zero, so the conditioned model collapses to the text-only one.
struct DenoiserModel {
  DenoiserConfig config;
  ParamStore params;

  static DenoiserModel init(const DenoiserConfig& config, uint64_t seed);

  // eps_hat node of shape (1, data_dim). `x_in` is the (1, data_dim+time_dim)
  // trunk input, `c_tokens` the (n_tokens, token_dim) context matrix, `u` the
  // (1, user_dim) user embedding. With use_adapter=false the user branch is
  // physically absent from the graph.
  NodeId build_forward(Graph& g, NodeId x_in, NodeId c_tokens, NodeId u,
                       bool use_adapter = true) const;

  void set_adapter_only_trainable();
  void set_all_trainable();
  bool is_adapter_param(const std::string& name) const;
};

Tensor time_features(int t, int T, int time_dim);

// Sum of text cross-attention and user cross-attention sharing one query
// projection; the second term vanishes identically for all-zero user tokens.
NodeId decoupled_cross_attention(Graph& g, NodeId z, NodeId c_tokens, NodeId u_tokens,
                                 NodeId query_w, NodeId key_w, NodeId value_w,
                                 NodeId user_key_w, NodeId user_value_w);

// Plain-tensor convenience over the same graph code.
Tensor decoupled_cross_attention_eval(const Tensor& z, const Tensor& c_tokens,
                                      const Tensor& u_tokens, const Tensor& query_w,
                                      const Tensor& key_w, const Tensor& value_w,
                                      const Tensor& user_key_w, const Tensor& user_value_w);

// Deterministic eps_hat(x_t, c, u, t); differentiable via build_forward.
Tensor denoise_predict(const DenoiserModel& model, const Tensor& x_t, const Context& ctx,
                       const Tensor& u, int t, const NoiseSchedule& sched,
                       bool use_adapter = true);

struct DenoisingItem {
  Tensor x0;  // (data_dim)
  Context context;
  Tensor u;  // (user_dim)
};

struct DenoisingDraw {
  int t = 1;
  Tensor eps;
};

std::vector<DenoisingDraw> sample_denoising_draws(size_t count, int dim,
                                                  const NoiseSchedule& sched, Rng& rng);

// Mean over the batch of omega_t * ||eps - eps_hat||^2 with per-item (t, eps)
// draws from `rng`.
double denoising_loss(const DenoiserModel& model, std::span<const DenoisingItem> batch,
                      const NoiseSchedule& sched, Rng& rng);

double denoising_loss_with_grad(const DenoiserModel& model,
                                std::span<const DenoisingItem> batch,
                                const NoiseSchedule& sched, Rng& rng, ParamStore& grads);

// Deterministic DDIM trajectory (eta = 0) from seeded Gaussian noise down to
// an x0 estimate over an evenly spaced timestep subsequence.
Tensor ddim_sample(const DenoiserModel& model, const Context& ctx, const Tensor& u,
                   int n_steps, const NoiseSchedule& sched, uint64_t seed,
                   double eta = 0.0);

struct PretrainConfig {
  int steps = 2000;
  int batch = 16;
  double lr = 1e-3;
  int n_contexts = 64;
  uint64_t seed = 0;
};

struct TrainPoint {
  int step = 0;
  double loss = 0.0;
};

// Denoising pretraining of the full model on the toy data distribution; the
// user embedding is held at zero throughout.
std::vector<TrainPoint> pretrain(DenoiserModel& model, const NoiseSchedule& sched,
                                 const ContextCodebook& codebook, const ToyDataConfig& data,
                                 const PretrainConfig& cfg);

}  // namespace ppd
