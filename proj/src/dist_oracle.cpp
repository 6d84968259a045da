#include "capmatch/dist_oracle.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace capmatch {

namespace {

void require_same_shape(const DiscreteJoint& a, const DiscreteJoint& b,
                        const char* what) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + "x" +
                                std::to_string(b.cols));
}

double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;  // 0*log 0 := 0
  return x * std::log(y);
}

}  // namespace

void DiscreteJoint::validate(double tol) const {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0)
      throw std::invalid_argument("DiscreteJoint: negative entry " +
                                  std::to_string(v));
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol)
    throw std::invalid_argument("DiscreteJoint: entries sum to " +
                                std::to_string(sum));
}

void ConditionalKernel::validate(double tol) const {
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (at(i, j) < 0.0)
        throw std::invalid_argument("ConditionalKernel: negative entry");
      sum += at(i, j);
    }
    if (std::abs(sum - 1.0) > tol)
      throw std::invalid_argument("ConditionalKernel: row " +
                                  std::to_string(i) + " sums to " +
                                  std::to_string(sum));
  }
}

double MarginalReport::max_deviation() const {
  return std::max(std::max(dev_y_vc, dev_y_cv), std::max(dev_x_vc, dev_x_cv));
}

KlResult kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: support mismatch " +
                                std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()));
  KlResult r;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      r.infinite = true;
      r.nats = std::numeric_limits<double>::infinity();
      return r;
    }
    r.nats += p[i] * std::log(p[i] / q[i]);
  }
  return r;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument("jsd: support mismatch");
  // m dominates both halves, so each KL term is finite
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) acc += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) acc += 0.5 * q[i] * std::log(q[i] / m);
  }
  return acc;
}

DiscreteJoint mixture_half(const DiscreteJoint& p_vc,
                           const DiscreteJoint& p_cv) {
  require_same_shape(p_vc, p_cv, "mixture_half");
  DiscreteJoint out(p_vc.rows, p_vc.cols);
  for (std::size_t i = 0; i < out.cells(); ++i)
    out.p[i] = 0.5 * (p_vc.p[i] + p_cv.p[i]);
  return out;
}

DiscriminatorTable optimal_discriminator(const DiscreteJoint& p,
                                         const DiscreteJoint& p_half) {
  require_same_shape(p, p_half, "optimal_discriminator");
  DiscriminatorTable d(p.rows, p.cols);
  for (std::size_t i = 0; i < p.cells(); ++i) {
    const double denom = p.p[i] + p_half.p[i];
    if (denom == 0.0) {
      d.d[i] = 0.5;
      d.used[i] = 0;
    } else {
      d.d[i] = p.p[i] / denom;
    }
  }
  return d;
}

DiscriminatorTable brute_force_optimal_d(const DiscreteJoint& p,
                                         const DiscreteJoint& p_half,
                                         int grid_resolution) {
  require_same_shape(p, p_half, "brute_force_optimal_d");
  if (grid_resolution < 1000)
    throw std::invalid_argument("brute_force_optimal_d: grid must be >= 1000");
  const std::size_t r = static_cast<std::size_t>(grid_resolution);
  std::vector<double> log_y(r), log_1my(r), grid(r);
  for (std::size_t k = 0; k < r; ++k) {
    grid[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(r);
    log_y[k] = std::log(grid[k]);
    log_1my[k] = std::log(1.0 - grid[k]);
  }
  DiscriminatorTable d(p.rows, p.cols);
  for (std::size_t i = 0; i < p.cells(); ++i) {
    const double a = p.p[i], b = p_half.p[i];
    if (a == 0.0 && b == 0.0) {
      d.d[i] = 0.5;
      d.used[i] = 0;
      continue;
    }
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < r; ++k) {
      const double f = a * log_y[k] + b * log_1my[k];
      if (f > best) {
        best = f;
        best_k = k;
      }
    }
    d.d[i] = grid[best_k];
  }
  return d;
}

UtilityResult utility_u(const DiscreteJoint& p, const DiscreteJoint& p_vc,
                        const DiscreteJoint& p_cv,
                        const DiscriminatorTable& d) {
  require_same_shape(p, p_vc, "utility_u");
  require_same_shape(p, p_cv, "utility_u");
  if (d.rows != p.rows || d.cols != p.cols)
    throw std::invalid_argument("utility_u: discriminator shape mismatch");
  const DiscreteJoint p_half = mixture_half(p_vc, p_cv);
  UtilityResult r;
  for (std::size_t i = 0; i < p.cells(); ++i) {
    const double a = p.p[i], b = p_half.p[i], y = d.d[i];
    if ((a > 0.0 && y == 0.0) || (b > 0.0 && y == 1.0)) {
      r.minus_infinite = true;
      r.value = -std::numeric_limits<double>::infinity();
      return r;
    }
    r.value += xlogy(a, y) + xlogy(b, 1.0 - y);
  }
  return r;
}

double value_v(const DiscreteJoint& p, const DiscreteJoint& p_vc,
               const DiscreteJoint& p_cv) {
  const DiscreteJoint p_half = mixture_half(p_vc, p_cv);
  const DiscriminatorTable dstar = optimal_discriminator(p, p_half);
  const UtilityResult u = utility_u(p, p_vc, p_cv, dstar);
  // D* lies in (0,1) wherever mass exists, so u is finite here
  return u.value;
}

MarginalReport check_marginal_consistency(const DiscreteJoint& p,
                                          const DiscreteJoint& p_vc,
                                          const DiscreteJoint& p_cv,
                                          double tol) {
  require_same_shape(p, p_vc, "check_marginal_consistency");
  require_same_shape(p, p_cv, "check_marginal_consistency");
  MarginalReport rep;
  const DiscreteJoint p_half = mixture_half(p_vc, p_cv);
  for (std::size_t i = 0; i < p.cells(); ++i)
    rep.mixture_deviation =
        std::max(rep.mixture_deviation, std::abs(p.p[i] - p_half.p[i]));
  if (rep.mixture_deviation > tol) {
    rep.applicable = false;  // the claim's precondition fails
    return rep;
  }
  rep.applicable = true;
  const auto px = marginal_x(p);
  const auto py = marginal_y(p);
  const auto px_vc = marginal_x(p_vc);
  const auto py_vc = marginal_y(p_vc);
  const auto px_cv = marginal_x(p_cv);
  const auto py_cv = marginal_y(p_cv);
  for (std::size_t i = 0; i < px.size(); ++i) {
    rep.dev_x_vc = std::max(rep.dev_x_vc, std::abs(px[i] - px_vc[i]));
    rep.dev_x_cv = std::max(rep.dev_x_cv, std::abs(px[i] - px_cv[i]));
  }
  for (std::size_t j = 0; j < py.size(); ++j) {
    rep.dev_y_vc = std::max(rep.dev_y_vc, std::abs(py[j] - py_vc[j]));
    rep.dev_y_cv = std::max(rep.dev_y_cv, std::abs(py[j] - py_cv[j]));
  }
  return rep;
}

namespace {

// E over p's row marginal of KL between the row conditionals of p and q,
// i.e. sum_i p(i) * KL(p(.|i) || q(.|i)), rows with no p-mass skipped.
KlResult conditional_kl_given_x(const DiscreteJoint& p,
                                const DiscreteJoint& q) {
  KlResult r;
  const auto px = marginal_x(p);
  const auto qx = marginal_x(q);
  for (std::size_t i = 0; i < p.rows; ++i) {
    if (px[i] == 0.0) continue;
    if (qx[i] == 0.0) {
      r.infinite = true;
      r.nats = std::numeric_limits<double>::infinity();
      return r;
    }
    for (std::size_t j = 0; j < p.cols; ++j) {
      const double pc = p.at(i, j) / px[i];
      if (pc == 0.0) continue;
      const double qc = q.at(i, j) / qx[i];
      if (qc == 0.0) {
        r.infinite = true;
        r.nats = std::numeric_limits<double>::infinity();
        return r;
      }
      r.nats += px[i] * pc * std::log(pc / qc);
    }
  }
  return r;
}

KlResult conditional_kl_given_y(const DiscreteJoint& p,
                                const DiscreteJoint& q) {
  KlResult r;
  const auto py = marginal_y(p);
  const auto qy = marginal_y(q);
  for (std::size_t j = 0; j < p.cols; ++j) {
    if (py[j] == 0.0) continue;
    if (qy[j] == 0.0) {
      r.infinite = true;
      r.nats = std::numeric_limits<double>::infinity();
      return r;
    }
    for (std::size_t i = 0; i < p.rows; ++i) {
      const double pc = p.at(i, j) / py[j];
      if (pc == 0.0) continue;
      const double qc = q.at(i, j) / qy[j];
      if (qc == 0.0) {
        r.infinite = true;
        r.nats = std::numeric_limits<double>::infinity();
        return r;
      }
      r.nats += py[j] * pc * std::log(pc / qc);
    }
  }
  return r;
}

}  // namespace

AugmentedResult augmented_objective(const DiscreteJoint& p,
                                    const DiscreteJoint& p_vc,
                                    const DiscreteJoint& p_cv,
                                    const DiscriminatorTable& d) {
  AugmentedResult res;
  const UtilityResult u = utility_u(p, p_vc, p_cv, d);
  if (u.minus_infinite) {
    res.minus_infinite = true;
    res.value = -std::numeric_limits<double>::infinity();
    return res;
  }
  const KlResult kx = conditional_kl_given_y(p, p_cv);
  const KlResult ky = conditional_kl_given_x(p, p_vc);
  if (kx.infinite || ky.infinite) {
    res.plus_infinite = true;
    res.value = std::numeric_limits<double>::infinity();
    return res;
  }
  res.value = u.value + kx.nats + ky.nats;
  return res;
}

EquilibriumReport check_equilibrium(const DiscreteJoint& p,
                                    const DiscreteJoint& p_vc,
                                    const DiscreteJoint& p_cv, double tol) {
  require_same_shape(p, p_vc, "check_equilibrium");
  require_same_shape(p, p_cv, "check_equilibrium");
  EquilibriumReport rep;
  for (std::size_t i = 0; i < p.cells(); ++i) {
    rep.max_dev_vc = std::max(rep.max_dev_vc, std::abs(p.p[i] - p_vc.p[i]));
    rep.max_dev_cv = std::max(rep.max_dev_cv, std::abs(p.p[i] - p_cv.p[i]));
  }
  rep.at_equilibrium = rep.max_dev_vc <= tol && rep.max_dev_cv <= tol;
  const DiscreteJoint p_half = mixture_half(p_vc, p_cv);
  const DiscriminatorTable dstar = optimal_discriminator(p, p_half);
  rep.objective_at_dstar = augmented_objective(p, p_vc, p_cv, dstar).value;
  return rep;
}

std::vector<double> marginal_x(const DiscreteJoint& j) {
  std::vector<double> m(j.rows, 0.0);
  for (std::size_t i = 0; i < j.rows; ++i)
    for (std::size_t c = 0; c < j.cols; ++c) m[i] += j.at(i, c);
  return m;
}

std::vector<double> marginal_y(const DiscreteJoint& j) {
  std::vector<double> m(j.cols, 0.0);
  for (std::size_t i = 0; i < j.rows; ++i)
    for (std::size_t c = 0; c < j.cols; ++c) m[c] += j.at(i, c);
  return m;
}

DiscreteJoint joint_from_x_marginal(std::span<const double> marg_x,
                                    const ConditionalKernel& k) {
  if (marg_x.size() != k.rows)
    throw std::invalid_argument("joint_from_x_marginal: size mismatch");
  DiscreteJoint out(k.rows, k.cols);
  for (std::size_t i = 0; i < k.rows; ++i)
    for (std::size_t j = 0; j < k.cols; ++j)
      out.at(i, j) = marg_x[i] * k.at(i, j);
  return out;
}

DiscreteJoint joint_from_y_marginal(const ConditionalKernel& k,
                                    std::span<const double> marg_y) {
  // kernel rows are indexed by z^y here: k(i|j) stored with j as the row
  if (marg_y.size() != k.rows)
    throw std::invalid_argument("joint_from_y_marginal: size mismatch");
  DiscreteJoint out(k.cols, k.rows);
  for (std::size_t j = 0; j < k.rows; ++j)
    for (std::size_t i = 0; i < k.cols; ++i)
      out.at(i, j) = marg_y[j] * k.at(j, i);
  return out;
}

DiscreteJoint random_joint(Rng& rng, std::size_t rows, std::size_t cols) {
  DiscreteJoint j(rows, cols);
  double sum = 0.0;
  for (double& v : j.p) {
    v = rng.uniform() + 1e-3;  // keep full support
    sum += v;
  }
  for (double& v : j.p) v /= sum;
  return j;
}

ConditionalKernel random_kernel(Rng& rng, std::size_t rows,
                                std::size_t cols) {
  ConditionalKernel k(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      k.at(i, j) = rng.uniform() + 1e-3;
      sum += k.at(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) k.at(i, j) /= sum;
  }
  return k;
}

JointTriple random_triple(Rng& rng, std::size_t rows, std::size_t cols) {
  JointTriple t;
  t.p = random_joint(rng, rows, cols);
  const auto px = marginal_x(t.p);
  const auto py = marginal_y(t.p);
  t.p_vc = joint_from_x_marginal(px, random_kernel(rng, rows, cols));
  t.p_cv = joint_from_y_marginal(random_kernel(rng, cols, rows), py);
  return t;
}

JointTriple balanced_triple(Rng& rng, std::size_t rows, std::size_t cols) {
  return balanced_triple_around(rng, random_joint(rng, rows, cols));
}

JointTriple balanced_triple_around(Rng& rng, const DiscreteJoint& p) {
  const std::size_t rows = p.rows, cols = p.cols;
  if (rows < 2 || cols < 2)
    throw std::invalid_argument("balanced_triple: need at least a 2x2 table");
  JointTriple t;
  t.p = p;
  // Sum of quadrupole bumps: +e at (i,j),(i',j'), -e at (i,j'),(i',j).
  // Row and column sums of the perturbation are zero, so both axes of
  // p +- delta keep p's marginals and their average is exactly p.
  DiscreteJoint delta(rows, cols);
  const std::size_t bumps = rows + cols;
  for (std::size_t b = 0; b < bumps; ++b) {
    const std::size_t i = rng.uniform_index(rows);
    std::size_t i2 = rng.uniform_index(rows - 1);
    if (i2 >= i) ++i2;
    const std::size_t j = rng.uniform_index(cols);
    std::size_t j2 = rng.uniform_index(cols - 1);
    if (j2 >= j) ++j2;
    const double e = rng.uniform(0.0, 1.0);
    delta.at(i, j) += e;
    delta.at(i2, j2) += e;
    delta.at(i, j2) -= e;
    delta.at(i2, j) -= e;
  }
  // scale so p +- delta stays nonnegative with slack
  double limit = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < delta.cells(); ++i) {
    const double a = std::abs(delta.p[i]);
    if (a > 0.0) limit = std::min(limit, t.p.p[i] / a);
  }
  if (!std::isfinite(limit)) limit = 0.0;
  const double scale = 0.5 * limit;
  t.p_vc = t.p;
  t.p_cv = t.p;
  for (std::size_t i = 0; i < delta.cells(); ++i) {
    t.p_vc.p[i] += scale * delta.p[i];
    t.p_cv.p[i] -= scale * delta.p[i];
  }
  return t;
}

std::string to_text(const DiscreteJoint& j) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < j.rows; ++i) {
    for (std::size_t c = 0; c < j.cols; ++c) {
      if (c) out += ' ';
      std::snprintf(buf, sizeof(buf), "%.17g", j.at(i, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace capmatch
