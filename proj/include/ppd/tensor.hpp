#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ppd/error.hpp"
#include "ppd/rng.hpp"

namespace ppd {

// Dense row-major tensor of 64-bit reals. Shapes are small and fixed per
// experiment; no broadcasting, no views.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    values_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.values_) v = value;
    return t;
  }

  static Tensor scalar(double value) { return full({1}, value); }

  static Tensor from(std::vector<int64_t> shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (checked_numel(t.shape_) != static_cast<int64_t>(values.size())) {
      fail(ErrorKind::shape_mismatch, "Tensor::from: shape does not match value count");
    }
    t.values_ = std::move(values);
    return t;
  }

  static Tensor random_normal(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values_) v = scale * rng.normal();
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(values_.size()); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }

  double& at(int64_t r, int64_t c) {
    return values_[static_cast<size_t>(r * shape_.back() + c)];
  }
  double at(int64_t r, int64_t c) const {
    return values_[static_cast<size_t>(r * shape_.back() + c)];
  }

  double item() const {
    if (numel() != 1) fail(ErrorKind::shape_mismatch, "item: tensor is not scalar");
    return values_[0];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Tensor reshape(std::vector<int64_t> shape) const {
    if (checked_numel(shape) != numel()) {
      fail(ErrorKind::shape_mismatch, "reshape: element count mismatch");
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  // (d) -> (1, d); used when a plain vector enters a matmul graph
  Tensor row() const { return reshape({1, numel()}); }
  Tensor flat() const { return reshape({numel()}); }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Tensor& other) const = default;

 private:
  static int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d <= 0) fail(ErrorKind::shape_mismatch, "tensor dims must be positive");
      n *= d;
    }
    return n;
  }

  std::vector<int64_t> shape_;
  std::vector<double> values_;
};

inline std::string shape_str(const Tensor& t) {
  std::string s = "(";
  for (size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape()[i]);
  }
  return s + ")";
}

// -- small numeric helpers used by samplers / rewards (no-grad paths) --

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) fail(ErrorKind::shape_mismatch, "add: shape mismatch");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) fail(ErrorKind::shape_mismatch, "sub: shape mismatch");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

inline Tensor scale(const Tensor& a, double k) {
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= k;
  return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) fail(ErrorKind::shape_mismatch, "dot: size mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) fail(ErrorKind::shape_mismatch, "squared_distance: size mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double sum_values(const Tensor& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
  return s;
}

inline double mean_value(const Tensor& a) {
  return sum_values(a) / static_cast<double>(a.numel());
}

// concatenate rank-1 tensors
inline Tensor hcat(const std::vector<Tensor>& parts) {
  int64_t n = 0;
  for (const Tensor& p : parts) n += p.numel();
  Tensor out({n});
  int64_t at = 0;
  for (const Tensor& p : parts) {
    for (int64_t i = 0; i < p.numel(); ++i) out[at++] = p[i];
  }
  return out;
}

}  // namespace ppd
