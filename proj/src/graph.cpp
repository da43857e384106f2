#include "ppd/graph.hpp"

#include <algorithm>
#include <cmath>

namespace ppd {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::param: return "param";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale_by: return "scale";
    case OpKind::matmul: return "matmul";
    case OpKind::softmax: return "softmax";
    case OpKind::attention: return "attention";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::tanh_act: return "tanh";
    case OpKind::sum_all: return "sum";
    case OpKind::mean_all: return "mean";
    case OpKind::squared_error: return "squared_error";
    case OpKind::logistic: return "logistic";
    case OpKind::log_e: return "log";
    case OpKind::softplus: return "softplus";
    case OpKind::concat: return "concat";
  }
  return "?";
}

double logistic_value(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow; -log(sigmoid(z)) == softplus_value(-z)
double softplus_value(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

std::string Graph::describe(NodeId id) const {
  const Node& n = node(id);
  std::string s = "node #" + std::to_string(id) + " (" + op_name(n.kind);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s + ")";
}

void Graph::check_exists(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    fail(ErrorKind::invalid_argument, "graph: node id out of range");
  }
}

void Graph::check_same_shape(OpKind kind, NodeId a, NodeId b) const {
  if (shape_of(a) != shape_of(b)) {
    fail(ErrorKind::shape_mismatch,
         std::string(op_name(kind)) + " node: shape mismatch between " + describe(a) +
             " and " + describe(b));
  }
}

NodeId Graph::push(Node n) {
  for (NodeId in : n.inputs) check_exists(in);
  for (NodeId in : n.inputs) n.needs_grad = n.needs_grad || node(in).needs_grad;
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
  root_ = id;  // last node is the root unless set_root overrides
  return id;
}

NodeId Graph::input(const std::string& name, std::vector<int64_t> shape) {
  auto it = named_.find(name);
  if (it != named_.end()) {
    if (node(it->second).kind != OpKind::input || node(it->second).shape != shape) {
      fail(ErrorKind::invalid_argument, "graph: name '" + name + "' already used");
    }
    return it->second;
  }
  Node n;
  n.kind = OpKind::input;
  n.name = name;
  n.shape = std::move(shape);
  const NodeId id = push(std::move(n));
  named_[name] = id;
  return id;
}

NodeId Graph::param(const ParamStore& store, const std::string& name) {
  auto it = named_.find(name);
  if (it != named_.end()) {
    if (node(it->second).kind != OpKind::param) {
      fail(ErrorKind::invalid_argument, "graph: name '" + name + "' already used");
    }
    return it->second;
  }
  Node n;
  n.kind = OpKind::param;
  n.name = name;
  n.shape = store.at(name).shape();
  n.trainable = store.trainable(name);
  n.needs_grad = n.trainable;
  const NodeId id = push(std::move(n));
  named_[name] = id;
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.kind = OpKind::constant;
  n.shape = value.shape();
  n.val = std::move(value);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_exists(a);
  check_exists(b);
  check_same_shape(OpKind::add, a, b);
  Node n;
  n.kind = OpKind::add;
  n.inputs = {a, b};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  check_exists(a);
  check_exists(b);
  check_same_shape(OpKind::sub, a, b);
  Node n;
  n.kind = OpKind::sub;
  n.inputs = {a, b};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_exists(a);
  check_exists(b);
  check_same_shape(OpKind::mul, a, b);
  Node n;
  n.kind = OpKind::mul;
  n.inputs = {a, b};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double factor) {
  check_exists(a);
  Node n;
  n.kind = OpKind::scale_by;
  n.inputs = {a};
  n.shape = shape_of(a);
  n.factor = factor;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  check_exists(a);
  check_exists(b);
  const auto& sa = shape_of(a);
  const auto& sb = shape_of(b);
  if (sa.size() != 2 || sb.size() != 2) {
    fail(ErrorKind::shape_mismatch, "matmul node: inputs must be rank 2, got " +
                                        describe(a) + " and " + describe(b));
  }
  if (sa[1] != sb[0]) {
    fail(ErrorKind::shape_mismatch,
         "matmul node: inner dims " + std::to_string(sa[1]) + " vs " +
             std::to_string(sb[0]) + " between " + describe(a) + " and " + describe(b));
  }
  Node n;
  n.kind = OpKind::matmul;
  n.inputs = {a, b};
  n.shape = {sa[0], sb[1]};
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId a) {
  check_exists(a);
  if (shape_of(a).empty()) fail(ErrorKind::shape_mismatch, "softmax node: rank >= 1 required");
  Node n;
  n.kind = OpKind::softmax;
  n.inputs = {a};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::attention(NodeId q, NodeId k, NodeId v) {
  check_exists(q);
  check_exists(k);
  check_exists(v);
  const auto& sq = shape_of(q);
  const auto& sk = shape_of(k);
  const auto& sv = shape_of(v);
  if (sq.size() != 2 || sk.size() != 2 || sv.size() != 2) {
    fail(ErrorKind::shape_mismatch, "attention node: Q, K, V must be rank 2");
  }
  if (sq[1] != sk[1]) {
    fail(ErrorKind::shape_mismatch,
         "attention node: query dim " + std::to_string(sq[1]) + " vs key dim " +
             std::to_string(sk[1]));
  }
  if (sk[0] != sv[0]) {
    fail(ErrorKind::shape_mismatch,
         "attention node: key rows " + std::to_string(sk[0]) + " vs value rows " +
             std::to_string(sv[0]));
  }
  Node n;
  n.kind = OpKind::attention;
  n.inputs = {q, k, v};
  n.shape = {sq[0], sv[1]};
  return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId a) {
  check_exists(a);
  if (shape_of(a).empty()) fail(ErrorKind::shape_mismatch, "layer_norm node: rank >= 1 required");
  Node n;
  n.kind = OpKind::layer_norm;
  n.inputs = {a};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
  check_exists(a);
  Node n;
  n.kind = OpKind::tanh_act;
  n.inputs = {a};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  check_exists(a);
  Node n;
  n.kind = OpKind::sum_all;
  n.inputs = {a};
  n.shape = {1};
  return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
  check_exists(a);
  Node n;
  n.kind = OpKind::mean_all;
  n.inputs = {a};
  n.shape = {1};
  return push(std::move(n));
}

NodeId Graph::squared_error(NodeId a, NodeId b) {
  check_exists(a);
  check_exists(b);
  check_same_shape(OpKind::squared_error, a, b);
  Node n;
  n.kind = OpKind::squared_error;
  n.inputs = {a, b};
  n.shape = {1};
  return push(std::move(n));
}

NodeId Graph::logistic(NodeId a) {
  check_exists(a);
  Node n;
  n.kind = OpKind::logistic;
  n.inputs = {a};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
  check_exists(a);
  Node n;
  n.kind = OpKind::log_e;
  n.inputs = {a};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::softplus(NodeId a) {
  check_exists(a);
  Node n;
  n.kind = OpKind::softplus;
  n.inputs = {a};
  n.shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) fail(ErrorKind::invalid_argument, "concat node: no inputs");
  int64_t total = 0;
  for (NodeId p : parts) {
    check_exists(p);
    if (shape_of(p).size() != 1) {
      fail(ErrorKind::shape_mismatch, "concat node: rank-1 inputs required, got " + describe(p));
    }
    total += shape_of(p)[0];
  }
  Node n;
  n.kind = OpKind::concat;
  n.inputs = parts;
  n.shape = {total};
  return push(std::move(n));
}

void Graph::set_root(NodeId id) {
  check_exists(id);
  root_ = id;
}

const Tensor& Graph::value(NodeId id) const {
  check_exists(id);
  if (!evaluated_) fail(ErrorKind::state_error, "graph: value() before evaluate()");
  return node(id).val;
}

const std::vector<int64_t>& Graph::shape(NodeId id) const {
  check_exists(id);
  return node(id).shape;
}

void Graph::forward_node(NodeId id, const ParamStore& params,
                         const std::map<std::string, Tensor>& inputs) {
  Node& n = node(id);
  switch (n.kind) {
    case OpKind::input: {
      auto it = inputs.find(n.name);
      if (it == inputs.end()) {
        fail(ErrorKind::invalid_argument, "evaluate: input '" + n.name + "' not bound");
      }
      if (it->second.shape() != n.shape) {
        fail(ErrorKind::shape_mismatch, "evaluate: input '" + n.name + "' shape mismatch");
      }
      n.val = it->second;
      break;
    }
    case OpKind::param: {
      if (!params.contains(n.name)) {
        fail(ErrorKind::invalid_argument, "evaluate: param '" + n.name + "' not in store");
      }
      const Tensor& t = params.at(n.name);
      if (t.shape() != n.shape) {
        fail(ErrorKind::shape_mismatch, "evaluate: param '" + n.name + "' shape mismatch");
      }
      n.val = t;
      n.trainable = params.trainable(n.name);
      n.needs_grad = n.trainable;
      break;
    }
    case OpKind::constant:
      break;
    case OpKind::add: {
      const Tensor& a = node(n.inputs[0]).val;
      const Tensor& b = node(n.inputs[1]).val;
      n.val = a;
      for (int64_t i = 0; i < n.val.numel(); ++i) n.val[i] += b[i];
      break;
    }
    case OpKind::sub: {
      const Tensor& a = node(n.inputs[0]).val;
      const Tensor& b = node(n.inputs[1]).val;
      n.val = a;
      for (int64_t i = 0; i < n.val.numel(); ++i) n.val[i] -= b[i];
      break;
    }
    case OpKind::mul: {
      const Tensor& a = node(n.inputs[0]).val;
      const Tensor& b = node(n.inputs[1]).val;
      n.val = a;
      for (int64_t i = 0; i < n.val.numel(); ++i) n.val[i] *= b[i];
      break;
    }
    case OpKind::scale_by: {
      n.val = node(n.inputs[0]).val;
      for (int64_t i = 0; i < n.val.numel(); ++i) n.val[i] *= n.factor;
      break;
    }
    case OpKind::matmul: {
      const Tensor& a = node(n.inputs[0]).val;
      const Tensor& b = node(n.inputs[1]).val;
      const int64_t m = a.dim(0), kk = a.dim(1), p = b.dim(1);
      n.val = Tensor({m, p});
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t k = 0; k < kk; ++k) {
          const double av = a.at(i, k);
          for (int64_t j = 0; j < p; ++j) n.val.at(i, j) += av * b.at(k, j);
        }
      }
      break;
    }
    case OpKind::softmax: {
      const Tensor& x = node(n.inputs[0]).val;
      n.val = x;
      const int64_t cols = x.shape().back();
      const int64_t rows = x.numel() / cols;
      for (int64_t r = 0; r < rows; ++r) {
        double* row = n.val.data() + r * cols;
        double mx = row[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double s = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
          row[c] = std::exp(row[c] - mx);
          s += row[c];
        }
        for (int64_t c = 0; c < cols; ++c) row[c] /= s;
      }
      break;
    }
    case OpKind::attention: {
      const Tensor& q = node(n.inputs[0]).val;
      const Tensor& k = node(n.inputs[1]).val;
      const Tensor& v = node(n.inputs[2]).val;
      const int64_t m = q.dim(0), dk = q.dim(1), rows = k.dim(0), dv = v.dim(1);
      const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
      Tensor weights({m, rows});
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < rows; ++j) {
          double s = 0.0;
          for (int64_t c = 0; c < dk; ++c) s += q.at(i, c) * k.at(j, c);
          weights.at(i, j) = s * sc;
        }
        double mx = weights.at(i, 0);
        for (int64_t j = 1; j < rows; ++j) mx = std::max(mx, weights.at(i, j));
        double s = 0.0;
        for (int64_t j = 0; j < rows; ++j) {
          weights.at(i, j) = std::exp(weights.at(i, j) - mx);
          s += weights.at(i, j);
        }
        for (int64_t j = 0; j < rows; ++j) weights.at(i, j) /= s;
      }
      n.val = Tensor({m, dv});
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < rows; ++j) {
          const double w = weights.at(i, j);
          for (int64_t c = 0; c < dv; ++c) n.val.at(i, c) += w * v.at(j, c);
        }
      }
      n.aux = std::move(weights);
      break;
    }
    case OpKind::layer_norm: {
      const Tensor& x = node(n.inputs[0]).val;
      n.val = x;
      const int64_t cols = x.shape().back();
      const int64_t rows = x.numel() / cols;
      n.aux = Tensor({rows});
      for (int64_t r = 0; r < rows; ++r) {
        double* row = n.val.data() + r * cols;
        double mu = 0.0;
        for (int64_t c = 0; c < cols; ++c) mu += row[c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
          const double d = row[c] - mu;
          var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        n.aux[r] = inv;
        for (int64_t c = 0; c < cols; ++c) row[c] = (row[c] - mu) * inv;
      }
      break;
    }
    case OpKind::tanh_act: {
      n.val = node(n.inputs[0]).val;
      for (int64_t i = 0; i < n.val.numel(); ++i) n.val[i] = std::tanh(n.val[i]);
      break;
    }
    case OpKind::sum_all: {
      const Tensor& x = node(n.inputs[0]).val;
      double s = 0.0;
      for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
      n.val = Tensor::scalar(s);
      break;
    }
    case OpKind::mean_all: {
      const Tensor& x = node(n.inputs[0]).val;
      double s = 0.0;
      for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
      n.val = Tensor::scalar(s / static_cast<double>(x.numel()));
      break;
    }
    case OpKind::squared_error: {
      const Tensor& a = node(n.inputs[0]).val;
      const Tensor& b = node(n.inputs[1]).val;
      double s = 0.0;
      for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
      }
      n.val = Tensor::scalar(s);
      break;
    }
    case OpKind::logistic: {
      n.val = node(n.inputs[0]).val;
      for (int64_t i = 0; i < n.val.numel(); ++i) n.val[i] = logistic_value(n.val[i]);
      break;
    }
    case OpKind::log_e: {
      const Tensor& x = node(n.inputs[0]).val;
      n.val = x;
      for (int64_t i = 0; i < n.val.numel(); ++i) {
        if (x[i] <= 0.0) {
          fail(ErrorKind::non_finite, describe(id) + ": log of non-positive value");
        }
        n.val[i] = std::log(x[i]);
      }
      break;
    }
    case OpKind::softplus: {
      n.val = node(n.inputs[0]).val;
      for (int64_t i = 0; i < n.val.numel(); ++i) n.val[i] = softplus_value(n.val[i]);
      break;
    }
    case OpKind::concat: {
      n.val = Tensor(n.shape);
      int64_t at = 0;
      for (NodeId in : n.inputs) {
        const Tensor& p = node(in).val;
        for (int64_t i = 0; i < p.numel(); ++i) n.val[at++] = p[i];
      }
      break;
    }
  }
  if (!n.val.all_finite()) {
    fail(ErrorKind::non_finite, describe(id) + " produced a non-finite value");
  }
}

const Tensor& Graph::evaluate(const ParamStore& params,
                              const std::map<std::string, Tensor>& inputs) {
  if (nodes_.empty()) fail(ErrorKind::state_error, "evaluate: empty graph");
  for (size_t i = 0; i < nodes_.size(); ++i) {
    forward_node(static_cast<NodeId>(i), params, inputs);
  }
  evaluated_ = true;
  return node(root_).val;
}

void Graph::backward_node(NodeId id) {
  Node& n = node(id);
  const Tensor& g = n.grad;
  auto grad_of = [this](NodeId in) -> Tensor& { return node(in).grad; };
  auto wants = [this](NodeId in) { return node(in).needs_grad; };

  switch (n.kind) {
    case OpKind::input:
    case OpKind::param:
    case OpKind::constant:
      break;
    case OpKind::add: {
      for (int s = 0; s < 2; ++s) {
        if (!wants(n.inputs[s])) continue;
        Tensor& gi = grad_of(n.inputs[s]);
        for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
      }
      break;
    }
    case OpKind::sub: {
      if (wants(n.inputs[0])) {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
      }
      if (wants(n.inputs[1])) {
        Tensor& gb = grad_of(n.inputs[1]);
        for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
      }
      break;
    }
    case OpKind::mul: {
      const Tensor& a = node(n.inputs[0]).val;
      const Tensor& b = node(n.inputs[1]).val;
      if (wants(n.inputs[0])) {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * b[i];
      }
      if (wants(n.inputs[1])) {
        Tensor& gb = grad_of(n.inputs[1]);
        for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * a[i];
      }
      break;
    }
    case OpKind::scale_by: {
      if (wants(n.inputs[0])) {
        Tensor& gi = grad_of(n.inputs[0]);
        for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * n.factor;
      }
      break;
    }
    case OpKind::matmul: {
      const Tensor& a = node(n.inputs[0]).val;
      const Tensor& b = node(n.inputs[1]).val;
      const int64_t m = a.dim(0), kk = a.dim(1), p = b.dim(1);
      if (wants(n.inputs[0])) {
        Tensor& ga = grad_of(n.inputs[0]);  // g @ b^T
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < p; ++j) {
            const double gv = g.at(i, j);
            for (int64_t k = 0; k < kk; ++k) ga.at(i, k) += gv * b.at(k, j);
          }
        }
      }
      if (wants(n.inputs[1])) {
        Tensor& gb = grad_of(n.inputs[1]);  // a^T @ g
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t k = 0; k < kk; ++k) {
            const double av = a.at(i, k);
            for (int64_t j = 0; j < p; ++j) gb.at(k, j) += av * g.at(i, j);
          }
        }
      }
      break;
    }
    case OpKind::softmax: {
      if (!wants(n.inputs[0])) break;
      Tensor& gi = grad_of(n.inputs[0]);
      const Tensor& y = n.val;
      const int64_t cols = y.shape().back();
      const int64_t rows = y.numel() / cols;
      for (int64_t r = 0; r < rows; ++r) {
        const double* yr = y.data() + r * cols;
        const double* gr = g.data() + r * cols;
        double dotv = 0.0;
        for (int64_t c = 0; c < cols; ++c) dotv += gr[c] * yr[c];
        double* gir = gi.data() + r * cols;
        for (int64_t c = 0; c < cols; ++c) gir[c] += yr[c] * (gr[c] - dotv);
      }
      break;
    }
    case OpKind::attention: {
      const Tensor& q = node(n.inputs[0]).val;
      const Tensor& k = node(n.inputs[1]).val;
      const Tensor& v = node(n.inputs[2]).val;
      const Tensor& attn = n.aux;  // (m, rows) softmax weights
      const int64_t m = q.dim(0), dk = q.dim(1), rows = k.dim(0), dv = v.dim(1);
      const double sc = 1.0 / std::sqrt(static_cast<double>(dk));

      if (wants(n.inputs[2])) {
        Tensor& gv = grad_of(n.inputs[2]);  // A^T @ g
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < rows; ++j) {
            const double w = attn.at(i, j);
            for (int64_t c = 0; c < dv; ++c) gv.at(j, c) += w * g.at(i, c);
          }
        }
      }
      if (wants(n.inputs[0]) || wants(n.inputs[1])) {
        // dS = softmax backward of (g V^T), row-wise
        Tensor gs({m, rows});
        for (int64_t i = 0; i < m; ++i) {
          double dotv = 0.0;
          for (int64_t j = 0; j < rows; ++j) {
            double ga = 0.0;
            for (int64_t c = 0; c < dv; ++c) ga += g.at(i, c) * v.at(j, c);
            gs.at(i, j) = ga;
            dotv += ga * attn.at(i, j);
          }
          for (int64_t j = 0; j < rows; ++j) {
            gs.at(i, j) = attn.at(i, j) * (gs.at(i, j) - dotv);
          }
        }
        if (wants(n.inputs[0])) {
          Tensor& gq = grad_of(n.inputs[0]);  // (dS @ K) * sc
          for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < rows; ++j) {
              const double s = gs.at(i, j) * sc;
              for (int64_t c = 0; c < dk; ++c) gq.at(i, c) += s * k.at(j, c);
            }
          }
        }
        if (wants(n.inputs[1])) {
          Tensor& gk = grad_of(n.inputs[1]);  // (dS^T @ Q) * sc
          for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < rows; ++j) {
              const double s = gs.at(i, j) * sc;
              for (int64_t c = 0; c < dk; ++c) gk.at(j, c) += s * q.at(i, c);
            }
          }
        }
      }
      break;
    }
    case OpKind::layer_norm: {
      if (!wants(n.inputs[0])) break;
      Tensor& gi = grad_of(n.inputs[0]);
      const Tensor& y = n.val;
      const int64_t cols = y.shape().back();
      const int64_t rows = y.numel() / cols;
      for (int64_t r = 0; r < rows; ++r) {
        const double* yr = y.data() + r * cols;
        const double* gr = g.data() + r * cols;
        const double inv = n.aux[r];
        double gmean = 0.0, gymean = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
          gmean += gr[c];
          gymean += gr[c] * yr[c];
        }
        gmean /= static_cast<double>(cols);
        gymean /= static_cast<double>(cols);
        double* gir = gi.data() + r * cols;
        for (int64_t c = 0; c < cols; ++c) {
          gir[c] += inv * (gr[c] - gmean - yr[c] * gymean);
        }
      }
      break;
    }
    case OpKind::tanh_act: {
      if (!wants(n.inputs[0])) break;
      Tensor& gi = grad_of(n.inputs[0]);
      const Tensor& y = n.val;
      for (int64_t i = 0; i < y.numel(); ++i) gi[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case OpKind::sum_all: {
      if (!wants(n.inputs[0])) break;
      Tensor& gi = grad_of(n.inputs[0]);
      const double gv = g[0];
      for (int64_t i = 0; i < gi.numel(); ++i) gi[i] += gv;
      break;
    }
    case OpKind::mean_all: {
      if (!wants(n.inputs[0])) break;
      Tensor& gi = grad_of(n.inputs[0]);
      const double gv = g[0] / static_cast<double>(gi.numel());
      for (int64_t i = 0; i < gi.numel(); ++i) gi[i] += gv;
      break;
    }
    case OpKind::squared_error: {
      const Tensor& a = node(n.inputs[0]).val;
      const Tensor& b = node(n.inputs[1]).val;
      const double gv = g[0];
      if (wants(n.inputs[0])) {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int64_t i = 0; i < a.numel(); ++i) ga[i] += 2.0 * gv * (a[i] - b[i]);
      }
      if (wants(n.inputs[1])) {
        Tensor& gb = grad_of(n.inputs[1]);
        for (int64_t i = 0; i < a.numel(); ++i) gb[i] -= 2.0 * gv * (a[i] - b[i]);
      }
      break;
    }
    case OpKind::logistic: {
      if (!wants(n.inputs[0])) break;
      Tensor& gi = grad_of(n.inputs[0]);
      const Tensor& y = n.val;
      for (int64_t i = 0; i < y.numel(); ++i) gi[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case OpKind::log_e: {
      if (!wants(n.inputs[0])) break;
      Tensor& gi = grad_of(n.inputs[0]);
      const Tensor& x = node(n.inputs[0]).val;
      for (int64_t i = 0; i < x.numel(); ++i) gi[i] += g[i] / x[i];
      break;
    }
    case OpKind::softplus: {
      if (!wants(n.inputs[0])) break;
      Tensor& gi = grad_of(n.inputs[0]);
      const Tensor& x = node(n.inputs[0]).val;
      for (int64_t i = 0; i < x.numel(); ++i) gi[i] += g[i] * logistic_value(x[i]);
      break;
    }
    case OpKind::concat: {
      int64_t at = 0;
      for (NodeId in : n.inputs) {
        const int64_t len = node(in).val.numel();
        if (wants(in)) {
          Tensor& gi = grad_of(in);
          for (int64_t i = 0; i < len; ++i) gi[i] += g[at + i];
        }
        at += len;
      }
      break;
    }
  }
}

ParamStore Graph::backward() {
  if (!evaluated_) fail(ErrorKind::state_error, "backward: evaluate() has not run");
  const Node& r = node(root_);
  if (r.val.numel() != 1) {
    fail(ErrorKind::shape_mismatch, "backward: root " + describe(root_) + " is not scalar");
  }

  for (Node& n : nodes_) {
    if (n.needs_grad) n.grad = Tensor::zeros(n.shape);
  }

  ParamStore grads;
  if (!r.needs_grad) return grads;  // nothing trainable feeds the root

  node(root_).grad = Tensor::scalar(1.0);
  for (size_t i = nodes_.size(); i-- > 0;) {
    const NodeId id = static_cast<NodeId>(i);
    if (!node(id).needs_grad) continue;
    backward_node(id);
  }

  // insertion order of param leaves is the graph build order: deterministic
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::param && n.trainable) grads.add(n.name, n.grad);
  }
  return grads;
}

}  // namespace ppd
