#include "capmatch/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace capmatch {

AdamState::AdamState(std::span<const NamedParam> params, AdamConfig cfg)
    : cfg_(cfg) {
  if (cfg.lr <= 0.0) throw std::invalid_argument("adam: lr must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0)
    throw std::invalid_argument("adam: betas must lie in [0, 1)");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const NamedParam& p : params) {
    m_.push_back(Tensor(p.tensor->shape));
    v_.push_back(Tensor(p.tensor->shape));
  }
}

void AdamState::step(std::span<const NamedParam> params,
                     std::span<const Tensor> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adam: parameter/gradient count mismatch");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    const Tensor& g = grads[i];
    if (!p.same_shape(g))
      throw std::invalid_argument("adam: gradient shape " + g.shape_str() +
                                  " does not match parameter '" +
                                  params[i].name + "' " + p.shape_str());
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double gj = g.data[j];
      if (std::isnan(gj))
        throw std::runtime_error("adam: NaN gradient in parameter '" +
                                 params[i].name + "' at index " +
                                 std::to_string(j));
      m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * gj;
      v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m.data[j] / bc1;
      const double vhat = v.data[j] / bc2;
      p.data[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) sq += squared_norm(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads)
      for (double& x : g.data) x *= scale;
  }
  return norm;
}

}  // namespace capmatch
