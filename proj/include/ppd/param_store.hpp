#pragma once

#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include "ppd/error.hpp"
#include "ppd/tensor.hpp"

namespace ppd {

// Ordered, named parameter map with a per-parameter trainable flag.
// Iteration follows insertion order so optimizer passes and checkpoints are
// reproducible bit-for-bit.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  void add(std::string name, Tensor value, bool trainable = true) {
    if (index_.count(name)) {
      fail(ErrorKind::invalid_argument, "ParamStore: duplicate name '" + name + "'");
    }
    index_[name] = entries_.size();
    entries_.push_back(Entry{std::move(name), std::move(value), trainable});
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Tensor& at(const std::string& name) const { return entry(name).value; }
  Tensor& at(const std::string& name) { return entry(name).value; }

  bool trainable(const std::string& name) const { return entry(name).trainable; }
  void set_trainable(const std::string& name, bool flag) { entry(name).trainable = flag; }

  void set_all_trainable(bool flag) {
    for (Entry& e : entries_) e.trainable = flag;
  }

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      fail(ErrorKind::invalid_argument, "ParamStore: unknown name '" + name + "'");
    }
    return entries_[it->second];
  }
  const Entry& entry(const std::string& name) const {
    return const_cast<ParamStore*>(this)->entry(name);
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Exact (bitwise) equality of values; used by freeze-discipline and
// determinism checks.
inline bool bit_identical(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<size_t>(a.numel())) == 0;
}

inline bool bit_identical(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    const auto& ea = a.entries()[i];
    const auto& eb = b.entries()[i];
    if (ea.name != eb.name || !bit_identical(ea.value, eb.value)) return false;
  }
  return true;
}

// grads are themselves carried in a ParamStore (name -> gradient tensor)
inline void accumulate_grads(ParamStore& into, const ParamStore& grads) {
  for (const auto& e : grads.entries()) {
    if (!into.contains(e.name)) {
      into.add(e.name, e.value);
    } else {
      Tensor& t = into.at(e.name);
      if (!t.same_shape(e.value)) {
        fail(ErrorKind::shape_mismatch, "accumulate_grads: shape mismatch for '" + e.name + "'");
      }
      for (int64_t i = 0; i < t.numel(); ++i) t[i] += e.value[i];
    }
  }
}

inline void scale_grads(ParamStore& grads, double k) {
  for (auto& e : grads.entries()) {
    for (int64_t i = 0; i < e.value.numel(); ++i) e.value[i] *= k;
  }
}

inline double grad_norm(const ParamStore& grads) {
  double s = 0.0;
  for (const auto& e : grads.entries()) {
    for (int64_t i = 0; i < e.value.numel(); ++i) s += e.value[i] * e.value[i];
  }
  return std::sqrt(s);
}

}  // namespace ppd
