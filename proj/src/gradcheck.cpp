#include "capmatch/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace capmatch {

namespace {

double eval_loss(const LossBuilder& loss, std::span<const Tensor> params) {
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const Tensor& p : params) ids.push_back(tape.parameter(p));
  const NodeId root = loss(tape, ids);
  const double v = tape.scalar_value(root);
  if (!std::isfinite(v))
    throw std::runtime_error("grad_check: non-finite loss value");
  return v;
}

}  // namespace

double grad_check(const LossBuilder& loss, std::span<const Tensor> params,
                  double eps) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be > 0");

  // analytic pass
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const Tensor& p : params) ids.push_back(tape.parameter(p));
  const NodeId root = loss(tape, ids);
  if (!std::isfinite(tape.scalar_value(root)))
    throw std::runtime_error("grad_check: non-finite loss value");
  tape.backward(root);

  std::vector<Tensor> work(params.begin(), params.end());
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Tensor& analytic = tape.grad(ids[pi]);
    for (std::size_t j = 0; j < work[pi].numel(); ++j) {
      const double saved = work[pi].data[j];
      work[pi].data[j] = saved + eps;
      const double up = eval_loss(loss, work);
      work[pi].data[j] = saved - eps;
      const double dn = eval_loss(loss, work);
      work[pi].data[j] = saved;
      const double numeric = (up - dn) / (2.0 * eps);
      const double rel = std::abs(analytic.data[j] - numeric) /
                         std::max(1.0, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace capmatch
