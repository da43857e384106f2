#pragma once

#include <functional>
#include <optional>

#include "ppd/dataset.hpp"
#include "ppd/denoiser.hpp"

namespace ppd {

enum class Objective : uint8_t { ppd = 0, diffusion_dpo = 1, sft = 2 };
enum class TrainableSet : uint8_t { adapter_only = 0, all = 1 };

Objective objective_from_string(const std::string& name);
const char* to_string(Objective objective);
TrainableSet trainable_set_from_string(const std::string& name);
const char* to_string(TrainableSet set);

struct TrainConfig {
  Objective objective = Objective::ppd;
  TrainableSet trainable = TrainableSet::adapter_only;
  double beta = 0.5;
  double lr = 1e-3;
  double weight_decay = 0.0;
  int batch_pairs = 16;
  int epochs = 1;
  double user_dropout_p = 0.1;
  uint64_t seed = 0;
};

// The four per-step denoising errors of a preference pair plus the derived
// margin and loss. total = -log sigma(-beta * T * omega_t * delta), computed
// as softplus(beta * T * omega_t * delta).
struct LossBreakdown {
  double total = 0.0;
  double delta = 0.0;
  double err_policy_plus = 0.0;
  double err_ref_plus = 0.0;
  double err_policy_minus = 0.0;
  double err_ref_minus = 0.0;
  bool preferred_won() const { return delta < 0.0; }
};

// Scalar core shared by the pair losses and their tests.
LossBreakdown combine_error_terms(double beta, int T, double omega, double err_policy_plus,
                                  double err_ref_plus, double err_policy_minus,
                                  double err_ref_minus);

struct PairDraw {
  int t = 1;
  Tensor eps_plus;
  Tensor eps_minus;
};

PairDraw sample_pair_draw(int dim, const NoiseSchedule& sched, Rng& rng);

// Personalized pairwise objective: the policy is conditioned on u, the frozen
// reference is evaluated text-only and enters the loss as constants, so
// gradients flow through the policy terms alone.
LossBreakdown ppd_pair_loss(const DenoiserModel& model, const DenoiserModel& ref,
                            const PreferencePair& pair, const Context& ctx, const Tensor& u,
                            const PairDraw& draw, const NoiseSchedule& sched, double beta,
                            ParamStore* grads = nullptr);

// The unconditional objective; exactly ppd_pair_loss at u = 0 (same code path).
LossBreakdown diffusion_dpo_pair_loss(const DenoiserModel& model, const DenoiserModel& ref,
                                      const PreferencePair& pair, const Context& ctx,
                                      const PairDraw& draw, const NoiseSchedule& sched,
                                      double beta, ParamStore* grads = nullptr);

// Conditional denoising loss on the preferred sample only.
double sft_pair_loss(const DenoiserModel& model, const PreferencePair& pair, const Context& ctx,
                     const Tensor& u, const PairDraw& draw, const NoiseSchedule& sched,
                     ParamStore* grads = nullptr);

struct StepRecord {
  int step = 0;
  Objective objective = Objective::ppd;
  double loss = 0.0;
  double delta_mean = 0.0;
  double implicit_accuracy = 0.0;
  double beta = 0.0;
};

// maps user id -> embedding (one-hot, interpolated, or encoder output)
using UserSource = std::function<Tensor(int64_t user_id)>;

struct TrainResult {
  std::vector<StepRecord> history;
};

// Fine-tuning loop: seeded batch order, per-(step, pair) draws and dropout,
// gradient mean over the batch, AdamW on the configured trainable set.
TrainResult train(DenoiserModel& model, const DenoiserModel& ref, const PreferenceDataset& ds,
                  const ContextCodebook& codebook, const NoiseSchedule& sched,
                  const UserSource& user_source, const TrainConfig& cfg);

void write_history_csv(const std::vector<StepRecord>& history,
                       const std::filesystem::path& path);

struct JensenCheck {
  double lhs = 0.0;  // -log sigma(mean(X))
  double rhs = 0.0;  // mean(-log sigma(X))
  bool holds = false;
};

// Convexity of -log sigma: lhs <= rhs + 1e-12 for any sample of the inner
// argument, with equality at constant samples.
JensenCheck jensen_bound_check(std::span<const double> xs);

}  // namespace ppd
