#pragma once

#include "ppd/rng.hpp"
#include "ppd/tensor.hpp"

namespace ppd {

// Synthetic conditioning tokens: a fixed seeded codebook maps a context id to
// a small token matrix standing in for encoded text features.
struct Context {
  int64_t id = 0;
  Tensor tokens;  // (n_tokens, token_dim)
};

struct ContextCodebook {
  uint64_t seed = 0;
  int n_tokens = 4;
  int token_dim = 8;

  Context get(int64_t id) const {
    Rng rng(mix_seed(seed, "context-tokens", {static_cast<uint64_t>(id)}));
    return Context{id, Tensor::random_normal({n_tokens, token_dim}, rng)};
  }
};

// Toy base data distribution: x0 | c ~ N(mean(c), noise_scale^2 I).
struct ToyDataConfig {
  uint64_t seed = 0;
  int dim = 8;
  double mean_scale = 1.0;
  double noise_scale = 0.1;
};

inline Tensor data_mean(const ToyDataConfig& cfg, int64_t context_id) {
  Rng rng(mix_seed(cfg.seed, "data-mean", {static_cast<uint64_t>(context_id)}));
  return Tensor::random_normal({cfg.dim}, rng, cfg.mean_scale);
}

inline Tensor sample_data(const ToyDataConfig& cfg, int64_t context_id, Rng& rng) {
  Tensor x = data_mean(cfg, context_id);
  for (int64_t i = 0; i < x.numel(); ++i) x[i] += cfg.noise_scale * rng.normal();
  return x;
}

}  // namespace ppd
