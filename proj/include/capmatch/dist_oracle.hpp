#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "capmatch/rng.hpp"

namespace capmatch {

// Finite-support joint distribution over latent cells (z^x index, z^y index).
// Everything in this header is a pure function over immutable tables, used
// to verify the minimax objective's landscape by exact computation, with no
// neural network involved.
struct DiscreteJoint {
  std::size_t rows = 0, cols = 0;
  std::vector<double> p;

  DiscreteJoint() = default;
  DiscreteJoint(std::size_t r, std::size_t c) : rows(r), cols(c), p(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return p[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return p[i * cols + j]; }
  std::size_t cells() const { return p.size(); }

  // entries >= 0 and summing to 1 within tol
  void validate(double tol = 1e-12) const;
};

// Row-stochastic kernel: for each source index a probability row over
// target indices.
struct ConditionalKernel {
  std::size_t rows = 0, cols = 0;
  std::vector<double> k;

  ConditionalKernel() = default;
  ConditionalKernel(std::size_t r, std::size_t c)
      : rows(r), cols(c), k(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return k[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return k[i * cols + j]; }
  void validate(double tol = 1e-12) const;
};

// Pointwise discriminator values; every used entry lies in (0, 1). Cells
// with no mass under either distribution are marked unused and set to 0.5.
struct DiscriminatorTable {
  std::size_t rows = 0, cols = 0;
  std::vector<double> d;
  std::vector<std::uint8_t> used;

  DiscriminatorTable() = default;
  DiscriminatorTable(std::size_t r, std::size_t c)
      : rows(r), cols(c), d(r * c, 0.5), used(r * c, 1) {}

  double& at(std::size_t i, std::size_t j) { return d[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return d[i * cols + j]; }
};

struct KlResult {
  double nats = 0.0;
  bool infinite = false;  // absolute-continuity violation
};

struct UtilityResult {
  double value = 0.0;
  bool minus_infinite = false;  // D hit {0,1} on a cell with positive mass
};

struct AugmentedResult {
  double value = 0.0;
  bool plus_infinite = false;   // conditional KL blew up
  bool minus_infinite = false;  // utility blew up
};

struct MarginalReport {
  bool applicable = false;     // p == (p_vc + p_cv)/2 within tol
  double mixture_deviation = 0.0;
  // max deviation of each learned marginal from the data marginal
  double dev_y_vc = 0.0, dev_y_cv = 0.0, dev_x_vc = 0.0, dev_x_cv = 0.0;
  double max_deviation() const;
};

struct EquilibriumReport {
  bool at_equilibrium = false;
  double max_dev_vc = 0.0, max_dev_cv = 0.0;
  double objective_at_dstar = 0.0;  // cross-check against -ln 4
};

// --- divergences (0*log 0 := 0 everywhere) ---------------------------------

// KL(p || q) in nats; q(i)=0 with p(i)>0 returns a tagged infinity rather
// than throwing so parameter sweeps can proceed.
KlResult kl_divergence(std::span<const double> p, std::span<const double> q);

// Jensen-Shannon divergence, always finite, in [0, ln 2].
double jsd(std::span<const double> p, std::span<const double> q);

// --- minimax objective pieces ----------------------------------------------

// cellwise (a + b)/2
DiscreteJoint mixture_half(const DiscreteJoint& p_vc, const DiscreteJoint& p_cv);

// D*(cell) = p / (p + p_half); cells with no mass anywhere get 0.5, unused.
DiscriminatorTable optimal_discriminator(const DiscreteJoint& p,
                                         const DiscreteJoint& p_half);

// Independent oracle: per-cell grid search over y in (0,1) maximizing
// p*log y + p_half*log(1-y). grid_resolution >= 1000.
DiscriminatorTable brute_force_optimal_d(const DiscreteJoint& p,
                                         const DiscreteJoint& p_half,
                                         int grid_resolution);

// sum over cells of p*log D + p_half*log(1-D), the discrete form of the
// integral objective; p_half derived from (p_vc + p_cv)/2.
UtilityResult utility_u(const DiscreteJoint& p, const DiscreteJoint& p_vc,
                        const DiscreteJoint& p_cv,
                        const DiscriminatorTable& d);

// Utility evaluated at the optimal discriminator. Equals
// 2*JSD(p || p_half) - ln 4; the identity is asserted by the test suites.
double value_v(const DiscreteJoint& p, const DiscreteJoint& p_vc,
               const DiscreteJoint& p_cv);

// Under the precondition p = (p_vc + p_cv)/2, verifies that both learned
// joints reproduce the data marginals on both axes.
MarginalReport check_marginal_consistency(const DiscreteJoint& p,
                                          const DiscreteJoint& p_vc,
                                          const DiscreteJoint& p_cv,
                                          double tol);

// utility at D plus the two conditional KL penalties
// E_{p(z^y)} KL[p(z^x|z^y) || p_cv(z^x|z^y)] and
// E_{p(z^x)} KL[p(z^y|z^x) || p_vc(z^y|z^x)].
AugmentedResult augmented_objective(const DiscreteJoint& p,
                                    const DiscreteJoint& p_vc,
                                    const DiscreteJoint& p_cv,
                                    const DiscriminatorTable& d);

// true iff all three joints agree cellwise within tol; reports the
// augmented objective at D* for cross-checking against -ln 4.
EquilibriumReport check_equilibrium(const DiscreteJoint& p,
                                    const DiscreteJoint& p_vc,
                                    const DiscreteJoint& p_cv, double tol);

// --- marginals, conditionals, constructions --------------------------------

std::vector<double> marginal_x(const DiscreteJoint& j);  // sum over z^y
std::vector<double> marginal_y(const DiscreteJoint& j);  // sum over z^x

// p_vc(i,j) = marg_x(i) * k(j|i); the structural form of the v->c joint.
DiscreteJoint joint_from_x_marginal(std::span<const double> marg_x,
                                    const ConditionalKernel& k_y_given_x);
// p_cv(i,j) = k(i|j) * marg_y(j)
DiscreteJoint joint_from_y_marginal(const ConditionalKernel& k_x_given_y,
                                    std::span<const double> marg_y);

// Full-support random joint (normalized positive uniforms).
DiscreteJoint random_joint(Rng& rng, std::size_t rows, std::size_t cols);
ConditionalKernel random_kernel(Rng& rng, std::size_t rows, std::size_t cols);

struct JointTriple {
  DiscreteJoint p, p_vc, p_cv;
};

// p random; p_vc/p_cv built with the structural marginal identities
// (p_vc shares p's z^x marginal, p_cv shares p's z^y marginal).
JointTriple random_triple(Rng& rng, std::size_t rows, std::size_t cols);

// Exact p = (p_vc + p_cv)/2 with p_vc != p_cv, via a perturbation with all
// row and column sums zero. Realizes the Lemma 2 optimum family.
JointTriple balanced_triple(Rng& rng, std::size_t rows, std::size_t cols);
JointTriple balanced_triple_around(Rng& rng, const DiscreteJoint& p);

// One row per line, space-separated decimals; debugging aid.
std::string to_text(const DiscreteJoint& j);

}  // namespace capmatch
