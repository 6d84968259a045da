#pragma once

#include <functional>
#include <span>

#include "capmatch/tape.hpp"

namespace capmatch {

// Builds a scalar loss on the given tape from parameter leaves whose values
// are taken from `params` in order. Must be deterministic in the values.
using LossBuilder =
    std::function<NodeId(Tape&, std::span<const NodeId> params)>;

// Compares reverse-mode gradients against central finite differences.
// Returns max over all parameter entries of |analytic - numeric| /
// max(1, |numeric|). Throws if the loss is non-finite anywhere it is
// evaluated.
double grad_check(const LossBuilder& loss, std::span<const Tensor> params,
                  double eps = 1e-5);

}  // namespace capmatch
