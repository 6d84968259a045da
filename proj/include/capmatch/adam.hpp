#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "capmatch/tensor.hpp"

namespace capmatch {

// A named slice of model parameters, used for optimizer updates, gradient
// extraction and checkpointing. Order is deterministic.
struct NamedParam {
  std::string name;
  Tensor* tensor;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. Moments are kept per parameter, aligned by index
// with the parameter list the state was created from.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<const NamedParam> params, AdamConfig cfg);

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  // One update; grads[i] aligns with params[i]. NaN or misaligned
  // gradients throw, naming the offending parameter.
  void step(std::span<const NamedParam> params,
            std::span<const Tensor> grads);

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Scales grads in place so their global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

}  // namespace capmatch
