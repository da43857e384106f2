#pragma once

#include <map>
#include <string>
#include <vector>

#include "ppd/param_store.hpp"
#include "ppd/tensor.hpp"

namespace ppd {

using NodeId = int32_t;

// Fixed op whitelist: enough for MLPs with attention blocks plus the loss
// algebra used by the training objectives. No general compiler, no
// broadcasting.
enum class OpKind : uint8_t {
  input,       // named leaf, bound at evaluate()
  param,       // named leaf, resolved from the ParamStore at evaluate()
  constant,    // owned tensor
  add,
  sub,
  mul,         // elementwise
  scale_by,    // multiply by a compile-time scalar
  matmul,
  softmax,     // over last axis
  attention,   // scaled dot-product: softmax(Q K^T / sqrt(dk)) V
  layer_norm,  // over last axis, no affine
  tanh_act,
  sum_all,     // -> scalar
  mean_all,    // -> scalar
  squared_error,  // sum((a-b)^2) -> scalar
  logistic,
  log_e,
  softplus,
  concat,      // rank-1 inputs, joined in order
};

const char* op_name(OpKind kind);

// Reverse-mode tape over dense tensors. Nodes are appended in topological
// order by construction; evaluate() runs them forward once, backward() walks
// the tape in reverse and returns gradients for trainable parameters.
//
// A graph instance is single-threaded. Separate instances may run
// concurrently against the same (read-only) ParamStore.
class Graph {
 public:
  NodeId input(const std::string& name, std::vector<int64_t> shape);
  NodeId param(const ParamStore& store, const std::string& name);
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId matmul(NodeId a, NodeId b);
  NodeId softmax(NodeId a);
  NodeId attention(NodeId q, NodeId k, NodeId v);
  NodeId layer_norm(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId squared_error(NodeId a, NodeId b);
  NodeId logistic(NodeId a);
  NodeId log(NodeId a);
  NodeId softplus(NodeId a);
  NodeId concat(const std::vector<NodeId>& parts);

  void set_root(NodeId id);
  NodeId root() const { return root_; }

  // Runs the forward pass. Named inputs are bound from `inputs`, parameters
  // from `params`. Returns the root value.
  const Tensor& evaluate(const ParamStore& params,
                         const std::map<std::string, Tensor>& inputs = {});

  // Gradients of the scalar root w.r.t. every trainable parameter referenced
  // by the graph. Requires a prior evaluate(); non-trainable parameters get
  // no entry.
  ParamStore backward();

  const Tensor& value(NodeId id) const;
  const std::vector<int64_t>& shape(NodeId id) const;
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    std::vector<int64_t> shape;
    std::string name;     // input/param leaves
    double factor = 0.0;  // scale_by
    bool trainable = false;  // param leaves: flag captured at evaluate()
    bool needs_grad = false;
    Tensor val;
    Tensor aux;  // attention: softmax matrix; layer_norm: per-row inv std
    Tensor grad;
  };

  NodeId push(Node node);
  Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  const std::vector<int64_t>& shape_of(NodeId id) const { return node(id).shape; }
  void check_same_shape(OpKind kind, NodeId a, NodeId b) const;
  void check_exists(NodeId id) const;
  std::string describe(NodeId id) const;

  void forward_node(NodeId id, const ParamStore& params,
                    const std::map<std::string, Tensor>& inputs);
  void backward_node(NodeId id);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> named_;  // inputs and params, unique by name
  NodeId root_ = -1;
  bool evaluated_ = false;
};

// scalar helpers shared with no-graph code paths
double logistic_value(double x);
double softplus_value(double x);

}  // namespace ppd
