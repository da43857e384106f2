#pragma once

#include <memory>

#include "ppd/dataset.hpp"
#include "ppd/denoiser.hpp"
#include "ppd/user_model.hpp"

namespace ppd {

// Seam for evaluation: anything that can produce a sample for (context, user
// embedding, seed). Tests inject oracles; production wraps a denoiser.
struct GenerationSource {
  virtual ~GenerationSource() = default;
  virtual Tensor generate(int64_t context_id, const Tensor& u, uint64_t seed) const = 0;
};

struct DenoiserSource : GenerationSource {
  const DenoiserModel* model = nullptr;
  const ContextCodebook* codebook = nullptr;
  const NoiseSchedule* sched = nullptr;
  int n_steps = 30;

  DenoiserSource(const DenoiserModel& m, const ContextCodebook& cb, const NoiseSchedule& s,
                 int steps)
      : model(&m), codebook(&cb), sched(&s), n_steps(steps) {}

  Tensor generate(int64_t context_id, const Tensor& u, uint64_t seed) const override {
    return ddim_sample(*model, codebook->get(context_id), u, n_steps, *sched, seed);
  }
};

struct FamilyScore {
  RewardFamily family = RewardFamily::align;
  double mean = 0.0;
  double se = 0.0;
  int n = 0;
};

struct EvalReport {
  std::vector<FamilyScore> per_family;
  uint64_t seed = 0;
  int n_contexts = 0;
  int n_per_context = 0;
};

// Generates n_per_context samples per context under a fixed u and scores
// every reward family; deterministic under seed, parallel across contexts.
EvalReport score_generations(const GenerationSource& source,
                             std::span<const int64_t> context_ids, const Tensor& u,
                             std::span<const RewardSpec> specs, int n_per_context,
                             uint64_t seed, int jobs = 1);

struct WinRateResult {
  int wins = 0;
  int losses = 0;
  int ties = 0;
  double rate = 0.5;  // wins / (wins + losses); 0.5 when all comparisons tie
};

// One sample per side per context; the judge is a ground-truth user reward.
// Side seeds are explicit so callers can choose shared or independent
// streams.
WinRateResult win_rate(const GenerationSource& side_a, const GenerationSource& side_b,
                       std::span<const int64_t> context_ids, const SyntheticUser& judge,
                       std::span<const RewardSpec> specs, const Tensor& u_a, const Tensor& u_b,
                       uint64_t seed_a, uint64_t seed_b, int jobs = 1);

struct SweepRow {
  std::vector<double> weights;
  std::vector<FamilyScore> scores;
};

struct InterpolationSweep {
  std::vector<SweepRow> rows;
  std::vector<int> missing_endpoints;  // warning, not an error
};

// Scores every grid point under u = interpolate_users(weights) with shared
// seeds, so one-hot rows coincide exactly with score_generations.
InterpolationSweep interpolation_sweep(const GenerationSource& source,
                                       const std::vector<std::vector<double>>& weight_grid,
                                       std::span<const int64_t> context_ids,
                                       std::span<const RewardSpec> specs, int n_per_context,
                                       uint64_t seed, int jobs = 1);

// edge grids between one-hot endpoints, `points` per edge (endpoints included)
std::vector<std::vector<double>> onehot_edge_grid(int n_families, int points);

struct HeldoutEvalResult {
  WinRateResult seen;
  WinRateResult unseen;
  WinRateResult aggregate;
};

// Encoder-conditioned model vs its zero-conditioned self on held-out
// contexts, judged by each user's true reward mixture. Few-shot sets come
// from the test splits; their contexts are excluded from that user's judged
// contexts. Errors on any train/test pair leakage.
HeldoutEvalResult heldout_user_eval(const GenerationSource& source, const UserEncoder& encoder,
                                    const DatasetSplits& splits,
                                    std::span<const RewardSpec> specs, int shots,
                                    uint64_t seed, int jobs = 1);

// Wilson score interval lower bound for a binomial proportion.
double wilson_lower_bound(int successes, int n, double z = 1.959963984540054);

double spearman_correlation(std::span<const double> xs, std::span<const double> ys);

void write_scores_csv(const std::vector<std::pair<std::string, EvalReport>>& reports,
                      const std::filesystem::path& path);
void write_winrate_csv(const std::vector<std::pair<std::string, WinRateResult>>& results,
                       const std::filesystem::path& path);
void write_sweep_csv(const InterpolationSweep& sweep, const std::filesystem::path& path);

}  // namespace ppd
