#include "ppd/rewards.hpp"

#include <cmath>

#include "ppd/graph.hpp"

namespace ppd {

RewardFamily reward_family_from_string(const std::string& name) {
  if (name == "align") return RewardFamily::align;
  if (name == "magnitude") return RewardFamily::magnitude;
  if (name == "smooth") return RewardFamily::smooth;
  fail(ErrorKind::invalid_argument, "unknown reward family '" + name + "'");
}

const char* to_string(RewardFamily family) {
  switch (family) {
    case RewardFamily::align: return "align";
    case RewardFamily::magnitude: return "magnitude";
    case RewardFamily::smooth: return "smooth";
  }
  return "?";
}

Tensor seeded_context_vector(uint64_t seed, int64_t context_id, int dim) {
  Rng rng(mix_seed(seed, "context-vector", {static_cast<uint64_t>(context_id)}));
  return Tensor::random_normal({dim}, rng);
}

double eval_reward(const RewardSpec& spec, int64_t context_id, const Tensor& x) {
  if (!x.all_finite()) fail(ErrorKind::non_finite, "eval_reward: non-finite input");
  double base = 0.0;
  switch (spec.family) {
    case RewardFamily::align: {
      const Tensor target = seeded_context_vector(spec.target_seed, context_id,
                                                  static_cast<int>(x.numel()));
      base = -squared_distance(x, target);
      break;
    }
    case RewardFamily::magnitude:
      base = mean_value(x);
      break;
    case RewardFamily::smooth: {
      double s = 0.0;
      for (int64_t i = 0; i + 1 < x.numel(); ++i) {
        const double d = x[i + 1] - x[i];
        s += d * d;
      }
      base = -s;
      break;
    }
    default:
      fail(ErrorKind::invalid_argument, "eval_reward: unknown family");
  }
  return spec.scale * base + spec.offset;
}

double user_reward(const SyntheticUser& user, int64_t context_id, const Tensor& x,
                   std::span<const RewardSpec> specs) {
  if (user.weights.size() != specs.size()) {
    fail(ErrorKind::invalid_argument, "user_reward: weight/spec count mismatch");
  }
  double r = 0.0;
  for (size_t i = 0; i < specs.size(); ++i) {
    r += user.weights[i] * eval_reward(specs[i], context_id, x);
  }
  return r;
}

std::vector<SyntheticUser> onehot_users(int n_families) {
  std::vector<SyntheticUser> users(static_cast<size_t>(n_families));
  for (int i = 0; i < n_families; ++i) {
    users[static_cast<size_t>(i)].id = i;
    users[static_cast<size_t>(i)].weights.assign(static_cast<size_t>(n_families), 0.0);
    users[static_cast<size_t>(i)].weights[static_cast<size_t>(i)] = 1.0;
  }
  return users;
}

namespace {

// Marsaglia-Tsang, with the alpha < 1 boost G(a) = G(a+1) * U^(1/a)
double gamma_draw(double alpha, Rng& rng) {
  if (alpha < 1.0) {
    const double u = rng.uniform_open();
    return gamma_draw(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.uniform_open();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace

std::vector<SyntheticUser> mixture_users(int n_users, int n_families, double dirichlet_alpha,
                                         uint64_t seed) {
  if (n_users < 1 || n_families < 1) {
    fail(ErrorKind::invalid_argument, "mixture_users: counts must be >= 1");
  }
  if (dirichlet_alpha <= 0.0) {
    fail(ErrorKind::invalid_argument, "mixture_users: dirichlet alpha must be > 0");
  }
  std::vector<SyntheticUser> users(static_cast<size_t>(n_users));
  for (int i = 0; i < n_users; ++i) {
    Rng rng(mix_seed(seed, "user-weights", {static_cast<uint64_t>(i)}));
    std::vector<double> w(static_cast<size_t>(n_families));
    double total = 0.0;
    for (auto& v : w) {
      v = gamma_draw(dirichlet_alpha, rng);
      total += v;
    }
    for (auto& v : w) v /= total;
    users[static_cast<size_t>(i)] = SyntheticUser{i, std::move(w)};
  }
  return users;
}

LabelMode label_mode_from_string(const std::string& name) {
  if (name == "deterministic") return LabelMode::deterministic;
  if (name == "stochastic") return LabelMode::stochastic;
  fail(ErrorKind::invalid_argument, "unknown label mode '" + name + "'");
}

const char* to_string(LabelMode mode) {
  return mode == LabelMode::deterministic ? "deterministic" : "stochastic";
}

BtLabel bt_label(double r_a, double r_b, LabelMode mode, Rng& rng) {
  if (!std::isfinite(r_a) || !std::isfinite(r_b)) {
    fail(ErrorKind::non_finite, "bt_label: non-finite reward");
  }
  BtLabel label;
  label.prob_first = logistic_value(r_a - r_b);
  switch (mode) {
    case LabelMode::deterministic:
      if (std::abs(r_a - r_b) < 1e-12) {
        label.tie = true;
        label.first_preferred = true;  // keep input order
      } else {
        label.first_preferred = r_a > r_b;
      }
      break;
    case LabelMode::stochastic:
      label.first_preferred = rng.uniform() < label.prob_first;
      break;
  }
  return label;
}

}  // namespace ppd
