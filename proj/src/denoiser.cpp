#include "ppd/denoiser.hpp"

#include <cmath>

#include "ppd/optimizer.hpp"

namespace ppd {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string dims_msg(const char* what, int64_t got, int64_t want) {
  return std::string(what) + " dim " + std::to_string(got) + ", expected " +
         std::to_string(want);
}

}  // namespace

DenoiserModel DenoiserModel::init(const DenoiserConfig& config, uint64_t seed) {
  DenoiserModel m;
  m.config = config;
  Rng rng(mix_seed(seed, "denoiser-init"));
  auto w = [&](std::vector<int64_t> shape) {
    const double fan_in = static_cast<double>(shape[0]);
    return Tensor::random_normal(std::move(shape), rng, 1.0 / std::sqrt(fan_in));
  };
  const int64_t in_dim = config.data_dim + config.time_dim;
  m.params.add("trunk.in_w", w({in_dim, config.width}));
  m.params.add("trunk.in_b", Tensor::zeros({1, config.width}));
  m.params.add("text_attn.query_w", w({config.width, config.attn_dim}));
  m.params.add("text_attn.key_w", w({config.token_dim, config.attn_dim}));
  m.params.add("text_attn.value_w", w({config.token_dim, config.width}));
  m.params.add("user_attn.key_w", w({config.user_dim, config.attn_dim}));
  // zero value projection: a fresh adapter leaves the base model untouched
  m.params.add("user_attn.value_w", Tensor::zeros({config.user_dim, config.width}));
  m.params.add("head.hidden_w", w({config.width, config.width}));
  m.params.add("head.hidden_b", Tensor::zeros({1, config.width}));
  m.params.add("head.out_w", w({config.width, config.data_dim}));
  m.params.add("head.out_b", Tensor::zeros({1, config.data_dim}));
  return m;
}

bool DenoiserModel::is_adapter_param(const std::string& name) const {
  return name.rfind("user_attn.", 0) == 0;
}

void DenoiserModel::set_adapter_only_trainable() {
  for (auto& e : params.entries()) e.trainable = is_adapter_param(e.name);
}

void DenoiserModel::set_all_trainable() { params.set_all_trainable(true); }

Tensor time_features(int t, int T, int time_dim) {
  Tensor out({time_dim});
  const double tau = static_cast<double>(t) / static_cast<double>(T);
  double freq = 1.0;
  for (int i = 0; i < time_dim; i += 2) {
    out[i] = std::sin(kPi * tau * freq);
    if (i + 1 < time_dim) out[i + 1] = std::cos(kPi * tau * freq);
    freq *= 2.0;
  }
  return out;
}

NodeId decoupled_cross_attention(Graph& g, NodeId z, NodeId c_tokens, NodeId u_tokens,
                                 NodeId query_w, NodeId key_w, NodeId value_w,
                                 NodeId user_key_w, NodeId user_value_w) {
  NodeId q = g.matmul(z, query_w);
  NodeId text_out = g.attention(q, g.matmul(c_tokens, key_w), g.matmul(c_tokens, value_w));
  NodeId user_out =
      g.attention(q, g.matmul(u_tokens, user_key_w), g.matmul(u_tokens, user_value_w));
  return g.add(text_out, user_out);
}

Tensor decoupled_cross_attention_eval(const Tensor& z, const Tensor& c_tokens,
                                      const Tensor& u_tokens, const Tensor& query_w,
                                      const Tensor& key_w, const Tensor& value_w,
                                      const Tensor& user_key_w, const Tensor& user_value_w) {
  Graph g;
  ParamStore empty;
  NodeId out = decoupled_cross_attention(
      g, g.constant(z), g.constant(c_tokens), g.constant(u_tokens), g.constant(query_w),
      g.constant(key_w), g.constant(value_w), g.constant(user_key_w),
      g.constant(user_value_w));
  g.set_root(g.sum(out));
  g.evaluate(empty);
  return g.value(out);
}

NodeId DenoiserModel::build_forward(Graph& g, NodeId x_in, NodeId c_tokens, NodeId u,
                                    bool use_adapter) const {
  NodeId h = g.tanh(g.add(g.matmul(x_in, g.param(params, "trunk.in_w")),
                          g.param(params, "trunk.in_b")));
  NodeId attn;
  if (use_adapter) {
    attn = decoupled_cross_attention(
        g, h, c_tokens, u, g.param(params, "text_attn.query_w"),
        g.param(params, "text_attn.key_w"), g.param(params, "text_attn.value_w"),
        g.param(params, "user_attn.key_w"), g.param(params, "user_attn.value_w"));
  } else {
    NodeId q = g.matmul(h, g.param(params, "text_attn.query_w"));
    attn = g.attention(q, g.matmul(c_tokens, g.param(params, "text_attn.key_w")),
                       g.matmul(c_tokens, g.param(params, "text_attn.value_w")));
  }
  NodeId res = g.layer_norm(g.add(h, attn));
  NodeId hidden = g.tanh(g.add(g.matmul(res, g.param(params, "head.hidden_w")),
                               g.param(params, "head.hidden_b")));
  return g.add(g.matmul(hidden, g.param(params, "head.out_w")),
               g.param(params, "head.out_b"));
}

Tensor denoise_predict(const DenoiserModel& model, const Tensor& x_t, const Context& ctx,
                       const Tensor& u, int t, const NoiseSchedule& sched,
                       bool use_adapter) {
  const DenoiserConfig& cfg = model.config;
  if (t < 0 || t > sched.T) {
    fail(ErrorKind::invalid_argument, "denoise_predict: t outside schedule range");
  }
  if (x_t.numel() != cfg.data_dim) {
    fail(ErrorKind::shape_mismatch, "denoise_predict: x_t " + dims_msg("data", x_t.numel(), cfg.data_dim));
  }
  if (u.numel() != cfg.user_dim) {
    fail(ErrorKind::shape_mismatch, "denoise_predict: " + dims_msg("user", u.numel(), cfg.user_dim));
  }
  if (ctx.tokens.rank() != 2 || ctx.tokens.dim(1) != cfg.token_dim) {
    fail(ErrorKind::shape_mismatch, "denoise_predict: context token dim mismatch");
  }

  Graph g;
  Tensor x_in = hcat({x_t.flat(), time_features(t, sched.T, cfg.time_dim)}).row();
  NodeId out = model.build_forward(g, g.constant(x_in), g.constant(ctx.tokens),
                                   g.constant(u.row()), use_adapter);
  g.set_root(g.sum(out));
  g.evaluate(model.params);
  return g.value(out).flat();
}

std::vector<DenoisingDraw> sample_denoising_draws(size_t count, int dim,
                                                  const NoiseSchedule& sched, Rng& rng) {
  std::vector<DenoisingDraw> draws(count);
  for (auto& d : draws) {
    d.t = static_cast<int>(rng.uniform_int(1, sched.T));
    d.eps = Tensor::random_normal({dim}, rng);
  }
  return draws;
}

namespace {

// builds mean_i omega_t ||eps_i - eps_hat_i||^2 into g
NodeId build_denoising_loss(Graph& g, const DenoiserModel& model,
                            std::span<const DenoisingItem> batch,
                            std::span<const DenoisingDraw> draws,
                            const NoiseSchedule& sched) {
  const DenoiserConfig& cfg = model.config;
  NodeId total = -1;
  for (size_t i = 0; i < batch.size(); ++i) {
    const DenoisingItem& item = batch[i];
    const DenoisingDraw& draw = draws[i];
    Tensor x_t = forward_diffuse(item.x0, draw.t, draw.eps, sched);
    Tensor x_in = hcat({x_t.flat(), time_features(draw.t, sched.T, cfg.time_dim)}).row();
    NodeId eps_hat = model.build_forward(g, g.constant(x_in), g.constant(item.context.tokens),
                                         g.constant(item.u.row()));
    NodeId err = g.squared_error(eps_hat, g.constant(draw.eps.row()));
    NodeId weighted = g.scale(err, sched.loss_weight[static_cast<size_t>(draw.t)]);
    total = (total < 0) ? weighted : g.add(total, weighted);
  }
  return g.scale(total, 1.0 / static_cast<double>(batch.size()));
}

void check_batch(const DenoiserModel& model, std::span<const DenoisingItem> batch) {
  if (batch.empty()) fail(ErrorKind::invalid_argument, "denoising_loss: empty batch");
  for (const DenoisingItem& item : batch) {
    if (item.x0.numel() != model.config.data_dim) {
      fail(ErrorKind::shape_mismatch, "denoising_loss: x0 dim mismatch");
    }
    if (item.u.numel() != model.config.user_dim) {
      fail(ErrorKind::shape_mismatch, "denoising_loss: user dim mismatch");
    }
  }
}

}  // namespace

double denoising_loss(const DenoiserModel& model, std::span<const DenoisingItem> batch,
                      const NoiseSchedule& sched, Rng& rng) {
  check_batch(model, batch);
  const auto draws = sample_denoising_draws(batch.size(), model.config.data_dim, sched, rng);
  Graph g;
  g.set_root(build_denoising_loss(g, model, batch, draws, sched));
  return g.evaluate(model.params).item();
}

double denoising_loss_with_grad(const DenoiserModel& model,
                                std::span<const DenoisingItem> batch,
                                const NoiseSchedule& sched, Rng& rng, ParamStore& grads) {
  check_batch(model, batch);
  const auto draws = sample_denoising_draws(batch.size(), model.config.data_dim, sched, rng);
  Graph g;
  g.set_root(build_denoising_loss(g, model, batch, draws, sched));
  const double loss = g.evaluate(model.params).item();
  grads = g.backward();
  return loss;
}

Tensor ddim_sample(const DenoiserModel& model, const Context& ctx, const Tensor& u,
                   int n_steps, const NoiseSchedule& sched, uint64_t seed, double eta) {
  if (n_steps < 1 || n_steps > sched.T) {
    fail(ErrorKind::invalid_argument, "ddim_sample: n_steps outside [1, T]");
  }
  if (eta != 0.0) {
    fail(ErrorKind::invalid_argument, "ddim_sample: only eta = 0 is supported");
  }

  // evenly spaced timestep subsequence, tau_0 = 0 .. tau_n = T
  std::vector<int> taus(static_cast<size_t>(n_steps) + 1);
  for (int j = 0; j <= n_steps; ++j) {
    taus[static_cast<size_t>(j)] = static_cast<int>(std::llround(
        static_cast<double>(sched.T) * static_cast<double>(j) / static_cast<double>(n_steps)));
  }

  Rng rng(mix_seed(seed, "ddim-x_T"));
  Tensor x = Tensor::random_normal({model.config.data_dim}, rng);

  for (int j = n_steps; j >= 1; --j) {
    const int t_hi = taus[static_cast<size_t>(j)];
    const int t_lo = taus[static_cast<size_t>(j) - 1];
    const Tensor eps_hat = denoise_predict(model, x, ctx, u, t_hi, sched);
    const double a_hi = sched.alpha[static_cast<size_t>(t_hi)];
    const double s_hi = sched.sigma[static_cast<size_t>(t_hi)];
    Tensor x0_hat = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
      x0_hat[i] = (x[i] - s_hi * eps_hat[i]) / a_hi;
    }
    if (j == 1) return x0_hat;
    const double a_lo = sched.alpha[static_cast<size_t>(t_lo)];
    const double s_lo = sched.sigma[static_cast<size_t>(t_lo)];
    for (int64_t i = 0; i < x.numel(); ++i) {
      x[i] = a_lo * x0_hat[i] + s_lo * eps_hat[i];
    }
  }
  return x;  // unreachable for n_steps >= 1
}

std::vector<TrainPoint> pretrain(DenoiserModel& model, const NoiseSchedule& sched,
                                 const ContextCodebook& codebook, const ToyDataConfig& data,
                                 const PretrainConfig& cfg) {
  if (cfg.steps < 1 || cfg.batch < 1 || cfg.n_contexts < 1) {
    fail(ErrorKind::invalid_argument, "pretrain: steps, batch and n_contexts must be >= 1");
  }
  AdamWState state;
  AdamWConfig opt;
  opt.lr = cfg.lr;

  const Tensor zero_u = Tensor::zeros({model.config.user_dim});
  std::vector<TrainPoint> history;
  history.reserve(static_cast<size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(mix_seed(cfg.seed, "pretrain-step", {static_cast<uint64_t>(step)}));
    std::vector<DenoisingItem> batch(static_cast<size_t>(cfg.batch));
    for (auto& item : batch) {
      const int64_t ctx_id = rng.uniform_int(0, cfg.n_contexts - 1);
      item.context = codebook.get(ctx_id);
      item.x0 = sample_data(data, ctx_id, rng);
      item.u = zero_u;
    }
    ParamStore grads;
    const double loss = denoising_loss_with_grad(model, batch, sched, rng, grads);
    if (!std::isfinite(loss)) {
      fail(ErrorKind::non_finite, "pretrain: non-finite loss at step " + std::to_string(step));
    }
    adamw_step(model.params, grads, state, opt);
    history.push_back({step, loss});
  }
  return history;
}

}  // namespace ppd
