#include "ppd/schedule.hpp"

#include <cmath>

namespace ppd {

NoiseSchedule build_schedule(int T, ScheduleKind kind, double loss_weight,
                             double alpha_min, double alpha_max) {
  if (T < 2) fail(ErrorKind::invalid_argument, "build_schedule: T must be >= 2");
  if (!(alpha_min > 0.0 && alpha_min < alpha_max && alpha_max < 1.0)) {
    fail(ErrorKind::invalid_argument, "build_schedule: need 0 < alpha_min < alpha_max < 1");
  }
  if (loss_weight <= 0.0) {
    fail(ErrorKind::invalid_argument, "build_schedule: loss weight must be > 0");
  }

  NoiseSchedule s;
  s.T = T;
  s.alpha.resize(static_cast<size_t>(T) + 1);
  s.sigma.resize(static_cast<size_t>(T) + 1);
  s.log_snr.resize(static_cast<size_t>(T) + 1);
  s.loss_weight.assign(static_cast<size_t>(T) + 1, loss_weight);

  auto snr_of = [](double a) {
    return std::log((a * a) / (1.0 - a * a));
  };

  for (int t = 0; t <= T; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(T);
    double a = 0.0;
    switch (kind) {
      case ScheduleKind::cosine: {
        // cosine phase restricted to the interval where alpha stays inside
        // the clamp bounds; strictly decreasing in t
        const double phi0 = std::acos(alpha_max);
        const double phi1 = std::acos(alpha_min);
        a = std::cos(phi0 + (phi1 - phi0) * u);
        break;
      }
      case ScheduleKind::linear_snr: {
        const double snr_hi = snr_of(alpha_max);
        const double snr_lo = snr_of(alpha_min);
        const double snr = snr_hi + (snr_lo - snr_hi) * u;
        a = std::sqrt(1.0 / (1.0 + std::exp(-snr)));  // alpha^2 = sigmoid(log snr)
        break;
      }
    }
    s.alpha[static_cast<size_t>(t)] = a;
    s.sigma[static_cast<size_t>(t)] = std::sqrt(1.0 - a * a);
    s.log_snr[static_cast<size_t>(t)] = snr_of(a);
  }
  return s;
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "linear-snr") return ScheduleKind::linear_snr;
  fail(ErrorKind::invalid_argument, "unknown schedule kind '" + name + "'");
}

const char* to_string(ScheduleKind kind) {
  return kind == ScheduleKind::cosine ? "cosine" : "linear-snr";
}

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps,
                       const NoiseSchedule& sched) {
  if (t < 0 || t > sched.T) {
    fail(ErrorKind::invalid_argument,
         "forward_diffuse: t=" + std::to_string(t) + " outside [0, " +
             std::to_string(sched.T) + "]");
  }
  if (!x0.same_shape(eps)) {
    fail(ErrorKind::shape_mismatch, "forward_diffuse: x0 and eps shapes differ");
  }
  const double a = sched.alpha[static_cast<size_t>(t)];
  const double s = sched.sigma[static_cast<size_t>(t)];
  Tensor out = x0;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

}  // namespace ppd
