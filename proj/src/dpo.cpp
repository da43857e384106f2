#include "ppd/dpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "ppd/csv.hpp"
#include "ppd/optimizer.hpp"
#include "ppd/user_model.hpp"

namespace ppd {

Objective objective_from_string(const std::string& name) {
  if (name == "ppd") return Objective::ppd;
  if (name == "diffusion-dpo") return Objective::diffusion_dpo;
  if (name == "sft") return Objective::sft;
  fail(ErrorKind::invalid_argument, "unknown objective '" + name + "'");
}

const char* to_string(Objective objective) {
  switch (objective) {
    case Objective::ppd: return "ppd";
    case Objective::diffusion_dpo: return "diffusion-dpo";
    case Objective::sft: return "sft";
  }
  return "?";
}

TrainableSet trainable_set_from_string(const std::string& name) {
  if (name == "adapter-only") return TrainableSet::adapter_only;
  if (name == "all") return TrainableSet::all;
  fail(ErrorKind::invalid_argument, "unknown trainable set '" + name + "'");
}

const char* to_string(TrainableSet set) {
  return set == TrainableSet::adapter_only ? "adapter-only" : "all";
}

LossBreakdown combine_error_terms(double beta, int T, double omega, double err_policy_plus,
                                  double err_ref_plus, double err_policy_minus,
                                  double err_ref_minus) {
  LossBreakdown out;
  out.err_policy_plus = err_policy_plus;
  out.err_ref_plus = err_ref_plus;
  out.err_policy_minus = err_policy_minus;
  out.err_ref_minus = err_ref_minus;
  out.delta = (err_policy_plus - err_ref_plus) - (err_policy_minus - err_ref_minus);
  out.total = softplus_value(beta * static_cast<double>(T) * omega * out.delta);
  return out;
}

PairDraw sample_pair_draw(int dim, const NoiseSchedule& sched, Rng& rng) {
  PairDraw draw;
  draw.t = static_cast<int>(rng.uniform_int(1, sched.T));
  draw.eps_plus = Tensor::random_normal({dim}, rng);
  draw.eps_minus = Tensor::random_normal({dim}, rng);
  return draw;
}

namespace {

NodeId build_policy_error(Graph& g, const DenoiserModel& model, const Tensor& x_t,
                          const Context& ctx, const Tensor& u, int t, int T,
                          const Tensor& eps) {
  Tensor x_in = hcat({x_t.flat(), time_features(t, T, model.config.time_dim)}).row();
  NodeId eps_hat = model.build_forward(g, g.constant(x_in), g.constant(ctx.tokens),
                                       g.constant(u.row()));
  return g.squared_error(eps_hat, g.constant(eps.row()));
}

void check_pair(const DenoiserModel& model, const PreferencePair& pair, const Tensor& u,
                const PairDraw& draw, const NoiseSchedule& sched) {
  if (pair.preferred.numel() != model.config.data_dim ||
      pair.rejected.numel() != model.config.data_dim) {
    fail(ErrorKind::shape_mismatch, "pair loss: sample dim does not match model");
  }
  if (u.numel() != model.config.user_dim) {
    fail(ErrorKind::shape_mismatch, "pair loss: user embedding dim does not match model");
  }
  if (draw.t < 1 || draw.t > sched.T) {
    fail(ErrorKind::invalid_argument, "pair loss: draw.t outside schedule range [1, T]");
  }
  if (draw.eps_plus.numel() != model.config.data_dim ||
      draw.eps_minus.numel() != model.config.data_dim) {
    fail(ErrorKind::shape_mismatch, "pair loss: noise draw dim mismatch");
  }
}

}  // namespace

LossBreakdown ppd_pair_loss(const DenoiserModel& model, const DenoiserModel& ref,
                            const PreferencePair& pair, const Context& ctx, const Tensor& u,
                            const PairDraw& draw, const NoiseSchedule& sched, double beta,
                            ParamStore* grads) {
  if (beta <= 0.0) fail(ErrorKind::invalid_argument, "pair loss: beta must be > 0");
  check_pair(model, pair, u, draw, sched);

  const Tensor x_t_plus = forward_diffuse(pair.preferred, draw.t, draw.eps_plus, sched);
  const Tensor x_t_minus = forward_diffuse(pair.rejected, draw.t, draw.eps_minus, sched);

  // frozen reference, text-only: constants of the loss
  const Tensor zero_u = Tensor::zeros({ref.config.user_dim});
  const Tensor ref_plus = denoise_predict(ref, x_t_plus, ctx, zero_u, draw.t, sched);
  const Tensor ref_minus = denoise_predict(ref, x_t_minus, ctx, zero_u, draw.t, sched);
  const double err_ref_plus = squared_distance(ref_plus, draw.eps_plus);
  const double err_ref_minus = squared_distance(ref_minus, draw.eps_minus);

  const double omega = sched.loss_weight[static_cast<size_t>(draw.t)];
  const double margin_scale = beta * static_cast<double>(sched.T) * omega;

  Graph g;
  NodeId err_plus = build_policy_error(g, model, x_t_plus, ctx, u, draw.t, sched.T,
                                       draw.eps_plus);
  NodeId err_minus = build_policy_error(g, model, x_t_minus, ctx, u, draw.t, sched.T,
                                        draw.eps_minus);
  NodeId delta = g.sub(g.sub(err_plus, g.constant(Tensor::scalar(err_ref_plus))),
                       g.sub(err_minus, g.constant(Tensor::scalar(err_ref_minus))));
  g.set_root(g.softplus(g.scale(delta, margin_scale)));
  g.evaluate(model.params);

  LossBreakdown out = combine_error_terms(beta, sched.T, omega, g.value(err_plus).item(),
                                          err_ref_plus, g.value(err_minus).item(),
                                          err_ref_minus);
  if (grads != nullptr) *grads = g.backward();
  return out;
}

LossBreakdown diffusion_dpo_pair_loss(const DenoiserModel& model, const DenoiserModel& ref,
                                      const PreferencePair& pair, const Context& ctx,
                                      const PairDraw& draw, const NoiseSchedule& sched,
                                      double beta, ParamStore* grads) {
  const Tensor zero_u = Tensor::zeros({model.config.user_dim});
  return ppd_pair_loss(model, ref, pair, ctx, zero_u, draw, sched, beta, grads);
}

double sft_pair_loss(const DenoiserModel& model, const PreferencePair& pair, const Context& ctx,
                     const Tensor& u, const PairDraw& draw, const NoiseSchedule& sched,
                     ParamStore* grads) {
  check_pair(model, pair, u, draw, sched);
  const Tensor x_t = forward_diffuse(pair.preferred, draw.t, draw.eps_plus, sched);
  const double omega = sched.loss_weight[static_cast<size_t>(draw.t)];

  Graph g;
  NodeId err = build_policy_error(g, model, x_t, ctx, u, draw.t, sched.T, draw.eps_plus);
  g.set_root(g.scale(err, omega));
  const double loss = g.evaluate(model.params).item();
  if (grads != nullptr) *grads = g.backward();
  return loss;
}

TrainResult train(DenoiserModel& model, const DenoiserModel& ref, const PreferenceDataset& ds,
                  const ContextCodebook& codebook, const NoiseSchedule& sched,
                  const UserSource& user_source, const TrainConfig& cfg) {
  if (ds.pairs.empty()) fail(ErrorKind::invalid_argument, "train: empty dataset");
  if (cfg.batch_pairs < 1 || cfg.epochs < 1) {
    fail(ErrorKind::invalid_argument, "train: batch_pairs and epochs must be >= 1");
  }
  if (cfg.beta <= 0.0) fail(ErrorKind::invalid_argument, "train: beta must be > 0");
  if (ds.header.dim != model.config.data_dim) {
    fail(ErrorKind::shape_mismatch,
         "train: dataset dim " + std::to_string(ds.header.dim) + " does not match model dim " +
             std::to_string(model.config.data_dim));
  }

  // resolve one embedding per user up front; also validates ids and dims
  std::map<int64_t, Tensor> embeddings;
  for (const SyntheticUser& u : ds.header.users) {
    Tensor e = user_source(u.id);
    if (e.numel() != model.config.user_dim) {
      fail(ErrorKind::shape_mismatch,
           "train: user source returned dim " + std::to_string(e.numel()) + " for user " +
               std::to_string(u.id) + ", model expects " +
               std::to_string(model.config.user_dim));
    }
    embeddings.emplace(u.id, std::move(e));
  }

  switch (cfg.trainable) {
    case TrainableSet::adapter_only: model.set_adapter_only_trainable(); break;
    case TrainableSet::all: model.set_all_trainable(); break;
  }

  AdamWState state;
  AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  const Tensor zero_u = Tensor::zeros({model.config.user_dim});
  TrainResult result;
  int step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(ds.pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng(mix_seed(cfg.seed, "epoch-order", {static_cast<uint64_t>(epoch)}));
    order_rng.shuffle(order);

    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_pairs)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_pairs));
      ParamStore batch_grads;
      double loss_sum = 0.0, delta_sum = 0.0;
      int wins = 0;

      for (size_t slot = begin; slot < end; ++slot) {
        const size_t pair_index = order[slot];
        const PreferencePair& pair = ds.pairs[pair_index];
        const Context ctx = codebook.get(pair.context_id);

        Rng draw_rng(mix_seed(cfg.seed, "pair-draw",
                              {static_cast<uint64_t>(step), static_cast<uint64_t>(pair_index)}));
        const PairDraw draw = sample_pair_draw(model.config.data_dim, sched, draw_rng);

        Tensor u = zero_u;
        if (cfg.objective != Objective::diffusion_dpo) {
          Rng drop_rng(mix_seed(cfg.seed, "user-dropout",
                                {static_cast<uint64_t>(step), static_cast<uint64_t>(pair_index)}));
          u = dropout_user(embeddings.at(pair.user_id), cfg.user_dropout_p, drop_rng);
        }

        ParamStore grads;
        double loss = 0.0;
        double delta = 0.0;
        switch (cfg.objective) {
          case Objective::ppd: {
            const LossBreakdown b =
                ppd_pair_loss(model, ref, pair, ctx, u, draw, sched, cfg.beta, &grads);
            loss = b.total;
            delta = b.delta;
            if (b.preferred_won()) ++wins;
            break;
          }
          case Objective::diffusion_dpo: {
            const LossBreakdown b =
                diffusion_dpo_pair_loss(model, ref, pair, ctx, draw, sched, cfg.beta, &grads);
            loss = b.total;
            delta = b.delta;
            if (b.preferred_won()) ++wins;
            break;
          }
          case Objective::sft: {
            loss = sft_pair_loss(model, pair, ctx, u, draw, sched, &grads);
            delta = std::numeric_limits<double>::quiet_NaN();
            break;
          }
        }
        if (!std::isfinite(loss)) {
          fail(ErrorKind::non_finite, "train: non-finite loss at step " + std::to_string(step));
        }
        loss_sum += loss;
        delta_sum += delta;
        accumulate_grads(batch_grads, grads);
      }

      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      scale_grads(batch_grads, inv_batch);
      adamw_step(model.params, batch_grads, state, opt);

      StepRecord record;
      record.step = step;
      record.objective = cfg.objective;
      record.loss = loss_sum * inv_batch;
      record.delta_mean = delta_sum * inv_batch;
      record.implicit_accuracy = cfg.objective == Objective::sft
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : static_cast<double>(wins) * inv_batch;
      record.beta = cfg.beta;
      result.history.push_back(record);
      ++step;
    }
  }
  return result;
}

void write_history_csv(const std::vector<StepRecord>& history,
                       const std::filesystem::path& path) {
  CsvWriter csv({"step", "objective", "loss", "delta_mean", "implicit_accuracy", "beta"});
  for (const StepRecord& r : history) {
    csv.cell(r.step);
    csv.cell(to_string(r.objective));
    csv.cell(r.loss);
    csv.cell(r.delta_mean);
    csv.cell(r.implicit_accuracy);
    csv.cell(r.beta);
    csv.end_row();
  }
  csv.save(path);
}

JensenCheck jensen_bound_check(std::span<const double> xs) {
  if (xs.size() < 2) {
    fail(ErrorKind::invalid_argument, "jensen_bound_check: need at least 2 samples");
  }
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());

  JensenCheck check;
  check.lhs = softplus_value(-mean);
  double rhs = 0.0;
  for (double x : xs) rhs += softplus_value(-x);
  check.rhs = rhs / static_cast<double>(xs.size());
  check.holds = check.lhs <= check.rhs + 1e-12;
  return check;
}

}  // namespace ppd
