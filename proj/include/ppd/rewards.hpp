#pragma once

#include <span>
#include <string>
#include <vector>

#include "ppd/rng.hpp"
#include "ppd/tensor.hpp"

namespace ppd {

// Analytic reward families standing in for learned image scorers:
//   align      -||x - g(c)||^2, g(c) a seeded per-context target vector
//   magnitude  mean(x)
//   smooth     -sum_i (x_{i+1} - x_i)^2
enum class RewardFamily : uint8_t { align = 0, magnitude = 1, smooth = 2 };

inline constexpr int kRewardFamilyCount = 3;

struct RewardSpec {
  RewardFamily family = RewardFamily::align;
  uint64_t target_seed = 0;  // align only
  double scale = 1.0;
  double offset = 0.0;
};

RewardFamily reward_family_from_string(const std::string& name);
const char* to_string(RewardFamily family);

// g(c): also reused as the context featurizer of the few-shot encoder.
Tensor seeded_context_vector(uint64_t seed, int64_t context_id, int dim);

double eval_reward(const RewardSpec& spec, int64_t context_id, const Tensor& x);

// One simulated rater: a normalized non-negative mixture over the reward
// families. One-hot weights recover a single family exactly.
struct SyntheticUser {
  int64_t id = 0;
  std::vector<double> weights;
};

double user_reward(const SyntheticUser& user, int64_t context_id, const Tensor& x,
                   std::span<const RewardSpec> specs);

std::vector<SyntheticUser> onehot_users(int n_families);
std::vector<SyntheticUser> mixture_users(int n_users, int n_families, double dirichlet_alpha,
                                         uint64_t seed);

enum class LabelMode : uint8_t { deterministic = 0, stochastic = 1 };

LabelMode label_mode_from_string(const std::string& name);
const char* to_string(LabelMode mode);

struct BtLabel {
  double prob_first = 0.5;  // P(first beats second) under the logistic model
  bool first_preferred = true;
  bool tie = false;
};

// Bradley-Terry comparison: P(a > b) = sigmoid(r_a - r_b). Deterministic mode
// takes the argmax and flags near-equal rewards as ties, keeping input order.
BtLabel bt_label(double r_a, double r_b, LabelMode mode, Rng& rng);

}  // namespace ppd
