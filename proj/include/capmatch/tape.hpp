#pragma once

#include <cstdint>
#include <vector>

#include "capmatch/tensor.hpp"

namespace capmatch {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

enum class OpKind : std::uint8_t {
  kParameter,  // differentiable leaf
  kInput,      // non-differentiable leaf (data, constants)
  kMatMul,
  kAdd,
  kMul,  // elementwise
  kConcat,
  kRelu,
  kSigmoid,
  kTanh,
  kLog,
  kLogSigmoid,
  kSqrt,
  kMulScalar,
  kSum,
  kMean,
  kSquaredNorm,
  kSoftmaxCrossEntropy,
  kStopGradient,
};

const char* op_name(OpKind op);

// One recorded primitive. Inputs always precede outputs in the tape, so the
// record order is a topological order.
struct Node {
  OpKind op;
  bool requires_grad;
  NodeId a = kNoNode;
  NodeId b = kNoNode;
  double scalar = 0.0;  // kMulScalar coefficient
  int target = -1;      // kSoftmaxCrossEntropy class index
  Tensor value;
};

// Tape-per-forward-pass reverse-mode engine. A tape is built, backward() is
// called once on a scalar root, gradients are read off, and the tape is
// discarded. Construction and backward are single-threaded; independent
// tapes may live on separate threads.
class Tape {
 public:
  NodeId parameter(Tensor value);
  NodeId input(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId concat(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId log(NodeId a);
  NodeId log_sigmoid(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId mul_scalar(NodeId a, double s);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId squared_norm(NodeId a);
  NodeId softmax_cross_entropy(NodeId logits, int target);
  NodeId stop_gradient(NodeId a);

  // a - b and value shortcuts
  NodeId sub(NodeId a, NodeId b) { return add(a, mul_scalar(b, -1.0)); }
  NodeId constant(double v) { return input(Tensor::scalar(v)); }

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  double scalar_value(NodeId id) const { return nodes_[id].value.data[0]; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

  // Gradient of `root` (a scalar node) with respect to every node that
  // requires grad. May be called once per tape.
  void backward(NodeId root);

  // Valid after backward(). Leaves the root never touched get zeros.
  const Tensor& grad(NodeId id);

 private:
  NodeId push(Node n);
  const Tensor& val(NodeId id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool backward_done_ = false;
};

}  // namespace capmatch
