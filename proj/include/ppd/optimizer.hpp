#pragma once

#include <functional>

#include "ppd/param_store.hpp"

namespace ppd {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  ParamStore first_moment;
  ParamStore second_moment;
  int64_t step = 0;
};

// Decoupled weight decay update. Only trainable parameters with a gradient
// entry move; moment slots are created on first use.
void adamw_step(ParamStore& params, const ParamStore& grads, AdamWState& state,
                const AdamWConfig& config);

// Central differences (f(p+h) - f(p-h)) / 2h per scalar entry of every
// trainable parameter. This is the independent oracle the reverse-mode
// engine is checked against; it never touches Graph::backward.
ParamStore finite_difference_gradient(
    const std::function<double(const ParamStore&)>& loss_fn,
    const ParamStore& params, double h = 1e-4);

// ||g_a - g_b|| / max(||g_a||, ||g_b||) per tensor, maximised over tensors.
// Pairs of near-zero gradients compare equal.
double gradient_relative_error(const ParamStore& a, const ParamStore& b);

}  // namespace ppd
