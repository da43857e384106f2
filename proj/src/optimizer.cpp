#include "ppd/optimizer.hpp"

#include <cmath>

namespace ppd {

void adamw_step(ParamStore& params, const ParamStore& grads, AdamWState& state,
                const AdamWConfig& config) {
  if (config.lr < 0.0) fail(ErrorKind::invalid_argument, "adamw: negative learning rate");
  if (config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0) {
    fail(ErrorKind::invalid_argument, "adamw: betas must lie in [0, 1)");
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));

  for (auto& entry : params.entries()) {
    if (!entry.trainable) continue;
    if (!grads.contains(entry.name)) continue;
    const Tensor& g = grads.at(entry.name);
    Tensor& p = entry.value;
    if (!g.same_shape(p)) {
      fail(ErrorKind::shape_mismatch, "adamw: gradient shape mismatch for '" + entry.name + "'");
    }
    if (!state.first_moment.contains(entry.name)) {
      state.first_moment.add(entry.name, Tensor::zeros(p.shape()));
      state.second_moment.add(entry.name, Tensor::zeros(p.shape()));
    }
    Tensor& m = state.first_moment.at(entry.name);
    Tensor& v = state.second_moment.at(entry.name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= config.lr * (mhat / (std::sqrt(vhat) + config.eps) +
                           config.weight_decay * p[i]);
    }
  }
}

ParamStore finite_difference_gradient(
    const std::function<double(const ParamStore&)>& loss_fn,
    const ParamStore& params, double h) {
  if (h <= 0.0) fail(ErrorKind::invalid_argument, "finite differences: h must be > 0");

  ParamStore work = params;
  const double probe_a = loss_fn(work);
  const double probe_b = loss_fn(work);
  if (probe_a != probe_b) {
    fail(ErrorKind::state_error,
         "finite differences: loss function is not deterministic");
  }

  ParamStore grads;
  for (auto& entry : work.entries()) {
    if (!entry.trainable) continue;
    Tensor grad = Tensor::zeros(entry.value.shape());
    for (int64_t i = 0; i < entry.value.numel(); ++i) {
      const double original = entry.value[i];
      entry.value[i] = original + h;
      const double up = loss_fn(work);
      entry.value[i] = original - h;
      const double down = loss_fn(work);
      entry.value[i] = original;
      grad[i] = (up - down) / (2.0 * h);
    }
    grads.add(entry.name, std::move(grad));
  }
  return grads;
}

double gradient_relative_error(const ParamStore& a, const ParamStore& b) {
  double worst = 0.0;
  for (const auto& entry : a.entries()) {
    if (!b.contains(entry.name)) {
      fail(ErrorKind::invalid_argument,
           "gradient_relative_error: '" + entry.name + "' missing from second store");
    }
    const Tensor& ga = entry.value;
    const Tensor& gb = b.at(entry.name);
    if (!ga.same_shape(gb)) {
      fail(ErrorKind::shape_mismatch, "gradient_relative_error: shape mismatch");
    }
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < ga.numel(); ++i) {
      diff += (ga[i] - gb[i]) * (ga[i] - gb[i]);
      na += ga[i] * ga[i];
      nb += gb[i] * gb[i];
    }
    diff = std::sqrt(diff);
    const double denom = std::max(std::sqrt(na), std::sqrt(nb));
    if (denom < 1e-9) continue;  // both effectively zero
    worst = std::max(worst, diff / denom);
  }
  return worst;
}

}  // namespace ppd
