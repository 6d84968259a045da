#include "capmatch/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace capmatch {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kParameter: return "parameter";
    case OpKind::kInput: return "input";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kConcat: return "concat";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kLog: return "log";
    case OpKind::kLogSigmoid: return "log-sigmoid";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kMulScalar: return "mul-scalar";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquaredNorm: return "squared-norm";
    case OpKind::kSoftmaxCrossEntropy: return "softmax-cross-entropy";
    case OpKind::kStopGradient: return "stop-gradient";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(OpKind op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " +
                              a.shape_str() + " vs " + b.shape_str());
}

[[noreturn]] void shape_error(OpKind op, const Tensor& a) {
  throw std::invalid_argument(std::string(op_name(op)) +
                              ": unsupported shape " + a.shape_str());
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::parameter(Tensor value) {
  Node n;
  n.op = OpKind::kParameter;
  n.requires_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::input(Tensor value) {
  Node n;
  n.op = OpKind::kInput;
  n.requires_grad = false;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  Node n;
  n.op = OpKind::kMatMul;
  if (A.rank() == 2 && B.rank() == 1 && A.shape[1] == B.shape[0]) {
    n.value = Tensor({A.shape[0]});
    const std::size_t m = A.shape[0], k = A.shape[1];
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* row = A.data.data() + i * k;
      for (std::size_t j = 0; j < k; ++j) acc += row[j] * B.data[j];
      n.value.data[i] = acc;
    }
  } else if (A.rank() == 2 && B.rank() == 2 && A.shape[1] == B.shape[0]) {
    const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
    n.value = Tensor({m, p});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t l = 0; l < k; ++l) {
        const double av = A.at(i, l);
        if (av == 0.0) continue;
        for (std::size_t j = 0; j < p; ++j)
          n.value.at(i, j) += av * B.at(l, j);
      }
  } else {
    shape_error(OpKind::kMatMul, A, B);
  }
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (!A.same_shape(B)) shape_error(OpKind::kAdd, A, B);
  Node n;
  n.op = OpKind::kAdd;
  n.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] += B.data[i];
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (!A.same_shape(B)) shape_error(OpKind::kMul, A, B);
  Node n;
  n.op = OpKind::kMul;
  n.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] *= B.data[i];
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::concat(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rank() != 1 || B.rank() != 1) shape_error(OpKind::kConcat, A, B);
  Node n;
  n.op = OpKind::kConcat;
  n.value = capmatch::concat(A, B);
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.op = OpKind::kRelu;
  n.value = val(a);
  for (double& x : n.value.data)
    if (x < 0.0) x = 0.0;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
  Node n;
  n.op = OpKind::kSigmoid;
  n.value = val(a);
  for (double& x : n.value.data) x = capmatch::sigmoid(x);
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
  Node n;
  n.op = OpKind::kTanh;
  n.value = val(a);
  for (double& x : n.value.data) x = std::tanh(x);
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::log(NodeId a) {
  Node n;
  n.op = OpKind::kLog;
  n.value = val(a);
  for (double& x : n.value.data) {
    if (x <= 0.0)
      throw std::domain_error("log: non-positive input " + std::to_string(x));
    x = std::log(x);
  }
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::log_sigmoid(NodeId a) {
  Node n;
  n.op = OpKind::kLogSigmoid;
  n.value = val(a);
  for (double& x : n.value.data) x = capmatch::log_sigmoid(x);
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::sqrt(NodeId a) {
  Node n;
  n.op = OpKind::kSqrt;
  n.value = val(a);
  for (double& x : n.value.data) {
    if (x < 0.0)
      throw std::domain_error("sqrt: negative input " + std::to_string(x));
    x = std::sqrt(x);
  }
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::mul_scalar(NodeId a, double s) {
  Node n;
  n.op = OpKind::kMulScalar;
  n.scalar = s;
  n.value = val(a);
  for (double& x : n.value.data) x *= s;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = OpKind::kSum;
  double acc = 0.0;
  for (double x : val(a).data) acc += x;
  n.value = Tensor::scalar(acc);
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  Node n;
  n.op = OpKind::kMean;
  double acc = 0.0;
  for (double x : val(a).data) acc += x;
  n.value = Tensor::scalar(acc / static_cast<double>(val(a).numel()));
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::squared_norm(NodeId a) {
  Node n;
  n.op = OpKind::kSquaredNorm;
  n.value = Tensor::scalar(capmatch::squared_norm(val(a)));
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, int target) {
  const Tensor& L = val(logits);
  if (L.rank() != 1) shape_error(OpKind::kSoftmaxCrossEntropy, L);
  if (target < 0 || static_cast<std::size_t>(target) >= L.numel())
    throw std::out_of_range("softmax-cross-entropy: target " +
                            std::to_string(target) + " outside " +
                            L.shape_str());
  double mx = L.data[0];
  for (double x : L.data) mx = std::max(mx, x);
  double lse = 0.0;
  for (double x : L.data) lse += std::exp(x - mx);
  lse = mx + std::log(lse);
  Node n;
  n.op = OpKind::kSoftmaxCrossEntropy;
  n.target = target;
  n.value = Tensor::scalar(lse - L.data[static_cast<std::size_t>(target)]);
  n.a = logits;
  n.requires_grad = nodes_[logits].requires_grad;
  return push(std::move(n));
}

NodeId Tape::stop_gradient(NodeId a) {
  Node n;
  n.op = OpKind::kStopGradient;
  n.value = val(a);
  n.a = a;
  n.requires_grad = false;  // cuts the flow by construction
  return push(std::move(n));
}

void Tape::backward(NodeId root) {
  if (backward_done_) throw std::logic_error("backward: already run");
  if (val(root).numel() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " +
                                val(root).shape_str());
  backward_done_ = true;
  grads_.assign(nodes_.size(), Tensor{});

  auto ensure = [&](NodeId id) -> Tensor& {
    if (grads_[id].numel() == 0) grads_[id] = Tensor(nodes_[id].value.shape);
    return grads_[id];
  };

  ensure(root).data[0] = 1.0;

  for (NodeId id = root + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || grads_[id].numel() == 0) continue;
    const Tensor& g = grads_[id];
    switch (n.op) {
      case OpKind::kParameter:
      case OpKind::kInput:
      case OpKind::kStopGradient:
        break;
      case OpKind::kMatMul: {
        const Tensor& A = val(n.a);
        const Tensor& B = val(n.b);
        const bool need_a = nodes_[n.a].requires_grad;
        const bool need_b = nodes_[n.b].requires_grad;
        if (B.rank() == 1) {
          const std::size_t m = A.shape[0], k = A.shape[1];
          if (need_a) {
            Tensor& ga = ensure(n.a);
            for (std::size_t i = 0; i < m; ++i) {
              const double gi = g.data[i];
              if (gi == 0.0) continue;
              double* row = ga.data.data() + i * k;
              for (std::size_t j = 0; j < k; ++j) row[j] += gi * B.data[j];
            }
          }
          if (need_b) {
            Tensor& gb = ensure(n.b);
            for (std::size_t i = 0; i < m; ++i) {
              const double gi = g.data[i];
              if (gi == 0.0) continue;
              const double* row = A.data.data() + i * k;
              for (std::size_t j = 0; j < k; ++j) gb.data[j] += gi * row[j];
            }
          }
        } else {
          const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
          if (need_a) {
            Tensor& ga = ensure(n.a);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t l = 0; l < k; ++l) {
                double acc = 0.0;
                for (std::size_t j = 0; j < p; ++j)
                  acc += g.at(i, j) * B.at(l, j);
                ga.at(i, l) += acc;
              }
          }
          if (need_b) {
            Tensor& gb = ensure(n.b);
            for (std::size_t l = 0; l < k; ++l)
              for (std::size_t j = 0; j < p; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i)
                  acc += A.at(i, l) * g.at(i, j);
                gb.at(l, j) += acc;
              }
          }
        }
        break;
      }
      case OpKind::kAdd: {
        if (nodes_[n.a].requires_grad) {
          Tensor& ga = ensure(n.a);
          for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
        }
        if (nodes_[n.b].requires_grad) {
          Tensor& gb = ensure(n.b);
          for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i];
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& A = val(n.a);
        const Tensor& B = val(n.b);
        if (nodes_[n.a].requires_grad) {
          Tensor& ga = ensure(n.a);
          for (std::size_t i = 0; i < g.numel(); ++i)
            ga.data[i] += g.data[i] * B.data[i];
        }
        if (nodes_[n.b].requires_grad) {
          Tensor& gb = ensure(n.b);
          for (std::size_t i = 0; i < g.numel(); ++i)
            gb.data[i] += g.data[i] * A.data[i];
        }
        break;
      }
      case OpKind::kConcat: {
        const std::size_t na = val(n.a).numel();
        if (nodes_[n.a].requires_grad) {
          Tensor& ga = ensure(n.a);
          for (std::size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
        }
        if (nodes_[n.b].requires_grad) {
          Tensor& gb = ensure(n.b);
          for (std::size_t i = 0; i < gb.numel(); ++i)
            gb.data[i] += g.data[na + i];
        }
        break;
      }
      case OpKind::kRelu: {
        Tensor& ga = ensure(n.a);
        const Tensor& A = val(n.a);
        for (std::size_t i = 0; i < g.numel(); ++i)
          if (A.data[i] > 0.0) ga.data[i] += g.data[i];
        break;
      }
      case OpKind::kSigmoid: {
        Tensor& ga = ensure(n.a);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double s = n.value.data[i];
          ga.data[i] += g.data[i] * s * (1.0 - s);
        }
        break;
      }
      case OpKind::kTanh: {
        Tensor& ga = ensure(n.a);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double t = n.value.data[i];
          ga.data[i] += g.data[i] * (1.0 - t * t);
        }
        break;
      }
      case OpKind::kLog: {
        Tensor& ga = ensure(n.a);
        const Tensor& A = val(n.a);
        for (std::size_t i = 0; i < g.numel(); ++i)
          ga.data[i] += g.data[i] / A.data[i];
        break;
      }
      case OpKind::kLogSigmoid: {
        Tensor& ga = ensure(n.a);
        const Tensor& A = val(n.a);
        for (std::size_t i = 0; i < g.numel(); ++i)
          ga.data[i] += g.data[i] * capmatch::sigmoid(-A.data[i]);
        break;
      }
      case OpKind::kSqrt: {
        Tensor& ga = ensure(n.a);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double r = n.value.data[i];
          // subgradient 0 at the origin keeps cycle losses finite there
          if (r > 0.0) ga.data[i] += g.data[i] * 0.5 / r;
        }
        break;
      }
      case OpKind::kMulScalar: {
        Tensor& ga = ensure(n.a);
        for (std::size_t i = 0; i < g.numel(); ++i)
          ga.data[i] += g.data[i] * n.scalar;
        break;
      }
      case OpKind::kSum: {
        Tensor& ga = ensure(n.a);
        const double g0 = g.data[0];
        for (double& x : ga.data) x += g0;
        break;
      }
      case OpKind::kMean: {
        Tensor& ga = ensure(n.a);
        const double g0 = g.data[0] / static_cast<double>(ga.numel());
        for (double& x : ga.data) x += g0;
        break;
      }
      case OpKind::kSquaredNorm: {
        Tensor& ga = ensure(n.a);
        const Tensor& A = val(n.a);
        const double g0 = g.data[0];
        for (std::size_t i = 0; i < ga.numel(); ++i)
          ga.data[i] += g0 * 2.0 * A.data[i];
        break;
      }
      case OpKind::kSoftmaxCrossEntropy: {
        Tensor& ga = ensure(n.a);
        const Tensor& L = val(n.a);
        double mx = L.data[0];
        for (double x : L.data) mx = std::max(mx, x);
        double z = 0.0;
        for (double x : L.data) z += std::exp(x - mx);
        const double g0 = g.data[0];
        for (std::size_t i = 0; i < L.numel(); ++i) {
          double p = std::exp(L.data[i] - mx) / z;
          if (static_cast<int>(i) == n.target) p -= 1.0;
          ga.data[i] += g0 * p;
        }
        break;
      }
    }
  }
}

const Tensor& Tape::grad(NodeId id) {
  if (!backward_done_) throw std::logic_error("grad: backward not run");
  if (grads_[id].numel() == 0) grads_[id] = Tensor(nodes_[id].value.shape);
  return grads_[id];
}

}  // namespace capmatch
