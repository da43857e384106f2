#pragma once

#include <vector>

#include "ppd/tensor.hpp"

namespace ppd {

enum class ScheduleKind { cosine, linear_snr };

// Variance-preserving noise schedule tables, indexed t = 0..T inclusive.
// alpha is clamped inside [alpha_min, alpha_max] by construction so the
// sampler never divides by a vanishing signal coefficient.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;        // signal coefficient, strictly decreasing
  std::vector<double> sigma;        // noise coefficient, sqrt(1 - alpha^2)
  std::vector<double> log_snr;      // log(alpha^2 / sigma^2), strictly decreasing
  std::vector<double> loss_weight;  // omega(t); constant 1 unless configured
};

NoiseSchedule build_schedule(int T, ScheduleKind kind, double loss_weight = 1.0,
                             double alpha_min = 1e-3, double alpha_max = 1.0 - 1e-3);

ScheduleKind schedule_kind_from_string(const std::string& name);
const char* to_string(ScheduleKind kind);

// x_t = alpha_t * x0 + sigma_t * eps
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps,
                       const NoiseSchedule& sched);

}  // namespace ppd
