#include "capmatch/theory_suite.hpp"

#include <cmath>
#include <cstdio>

namespace capmatch {

namespace {

constexpr double kLn4 = 1.3862943611198906;

DiscriminatorTable random_discriminator(Rng& rng, std::size_t rows,
                                        std::size_t cols) {
  DiscriminatorTable d(rows, cols);
  for (double& v : d.d) v = rng.uniform(1e-6, 1.0 - 1e-6);
  return d;
}

}  // namespace

bool TheoryReport::all_pass() const {
  for (const TheoryCheck& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string TheoryReport::to_string() const {
  std::string out;
  char buf[160];
  for (const TheoryCheck& c : checks) {
    std::snprintf(buf, sizeof(buf), "%-44s max deviation %.3e (tol %.1e) %s\n",
                  c.name.c_str(), c.max_deviation, c.threshold,
                  c.pass ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

TheoryReport verify_theory(const TheoryOptions& opt) {
  Rng rng = Rng::stream(opt.seed, "theory");
  TheoryReport report;
  const std::size_t n = opt.support;

  // Closed-form D* against the per-cell grid search, and utility
  // dominance of D* over random discriminators.
  {
    TheoryCheck grid_check{"optimal-D: closed form vs grid", 0.0,
                           1.0 / static_cast<double>(opt.brute_force_grid),
                           false};
    TheoryCheck dominance{"optimal-D: U(D*) >= U(D) probes", 0.0, 0.0,
                          false};
    double worst_margin = 0.0;  // most negative U(D*) - U(D)
    for (int t = 0; t < opt.trials; ++t) {
      const JointTriple j = random_triple(rng, n, n);
      const DiscreteJoint p_half = mixture_half(j.p_vc, j.p_cv);
      const DiscriminatorTable dstar = optimal_discriminator(j.p, p_half);
      const DiscriminatorTable brute =
          brute_force_optimal_d(j.p, p_half, opt.brute_force_grid);
      for (std::size_t c = 0; c < dstar.d.size(); ++c)
        if (dstar.used[c])
          grid_check.max_deviation = std::max(
              grid_check.max_deviation, std::abs(dstar.d[c] - brute.d[c]));
      const double u_star = utility_u(j.p, j.p_vc, j.p_cv, dstar).value;
      for (int k = 0; k < opt.random_discriminators; ++k) {
        const DiscriminatorTable d = random_discriminator(rng, n, n);
        const double u = utility_u(j.p, j.p_vc, j.p_cv, d).value;
        worst_margin = std::min(worst_margin, u_star - u);
      }
    }
    grid_check.pass = grid_check.max_deviation <= grid_check.threshold;
    dominance.max_deviation = -worst_margin;  // 0 when never dominated
    dominance.threshold = 0.0;
    dominance.pass = worst_margin >= 0.0;
    report.checks.push_back(grid_check);
    report.checks.push_back(dominance);
  }

  // Value identity on arbitrary triples, the -ln 4 optimum with
  // D* = 1/2 at constructed p = p_1/2, and V >= -ln 4 always.
  {
    TheoryCheck identity{"value: V = 2*JSD(p||p_half) - ln4", 0.0,
                         opt.tolerance, false};
    TheoryCheck lower_bound{"value: V >= -ln4", 0.0, 0.0, false};
    TheoryCheck optimum{"value: V = -ln4 at p = p_half", 0.0, 1e-12, false};
    TheoryCheck dhalf{"optimal-D: 1/2 at p = p_half", 0.0, 1e-12, false};
    double worst_bound = 0.0;
    for (int t = 0; t < opt.trials; ++t) {
      const JointTriple j = random_triple(rng, n, n);
      const DiscreteJoint p_half = mixture_half(j.p_vc, j.p_cv);
      const double v = value_v(j.p, j.p_vc, j.p_cv);
      const double via_jsd = 2.0 * jsd(j.p.p, p_half.p) - kLn4;
      identity.max_deviation =
          std::max(identity.max_deviation, std::abs(v - via_jsd));
      worst_bound = std::min(worst_bound, v + kLn4);

      const JointTriple b = balanced_triple(rng, n, n);
      const double v_opt = value_v(b.p, b.p_vc, b.p_cv);
      optimum.max_deviation =
          std::max(optimum.max_deviation, std::abs(v_opt + kLn4));
      const DiscriminatorTable dstar =
          optimal_discriminator(b.p, mixture_half(b.p_vc, b.p_cv));
      for (std::size_t c = 0; c < dstar.d.size(); ++c)
        dhalf.max_deviation =
            std::max(dhalf.max_deviation, std::abs(dstar.d[c] - 0.5));
    }
    identity.pass = identity.max_deviation <= identity.threshold;
    lower_bound.max_deviation = -worst_bound;
    lower_bound.pass = worst_bound >= -1e-12;
    optimum.pass = optimum.max_deviation <= optimum.threshold;
    dhalf.pass = dhalf.max_deviation <= dhalf.threshold;
    report.checks.push_back(identity);
    report.checks.push_back(lower_bound);
    report.checks.push_back(optimum);
    report.checks.push_back(dhalf);
  }

  // Marginal consistency at the optimum: p = p_1/2 with
  // p_vc != p_cv still reproduces both data marginals.
  {
    TheoryCheck marg{"marginals: consistency at optimum", 0.0, 1e-10,
                     false};
    for (int t = 0; t < opt.trials; ++t) {
      const JointTriple b = balanced_triple(rng, n, n);
      const MarginalReport rep =
          check_marginal_consistency(b.p, b.p_vc, b.p_cv, 1e-9);
      if (!rep.applicable) {
        marg.max_deviation = 1.0;
        break;
      }
      marg.max_deviation = std::max(marg.max_deviation, rep.max_deviation());
    }
    marg.pass = marg.max_deviation <= marg.threshold;
    report.checks.push_back(marg);
  }

  // The augmented objective at D* attains -ln 4 exactly at
  // p = p_vc = p_cv, and any perturbed triple sits strictly above it.
  {
    TheoryCheck at_eq{"equilibrium: objective = -ln4", 0.0,
                      opt.tolerance, false};
    TheoryCheck off_eq{"equilibrium: strictly above off it", 0.0, 0.0,
                       false};
    double worst_gap = 1.0;  // min objective-(-ln4) over perturbed triples
    for (int t = 0; t < opt.trials; ++t) {
      DiscreteJoint p = random_joint(rng, n, n);
      const EquilibriumReport eq = check_equilibrium(p, p, p, 1e-12);
      at_eq.max_deviation =
          std::max(at_eq.max_deviation, std::abs(eq.objective_at_dstar + kLn4));

      // move 1% of the mass onto one cell of one of the joints
      DiscreteJoint q = p;
      const std::size_t cell = rng.uniform_index(q.cells());
      q.p[cell] += 0.01;
      const double norm = 1.0 / 1.01;
      for (double& v : q.p) v *= norm;
      const EquilibriumReport eq2 =
          (t % 2 == 0) ? check_equilibrium(p, q, p, 1e-12)
                       : check_equilibrium(p, p, q, 1e-12);
      worst_gap = std::min(worst_gap, eq2.objective_at_dstar + kLn4);
      if (eq2.at_equilibrium) worst_gap = -1.0;
    }
    at_eq.pass = at_eq.max_deviation <= at_eq.threshold;
    off_eq.max_deviation = worst_gap;
    off_eq.pass = worst_gap > 0.0;
    report.checks.push_back(at_eq);
    report.checks.push_back(off_eq);
  }

  // Approach to equilibrium: shrinking a perturbation family
  // drives the objective monotonically down to -ln 4.
  {
    TheoryCheck sweep{"equilibrium: monotone approach", 0.0, 0.0,
                      false};
    bool monotone = true;
    const int families = std::max(1, opt.trials / 2);
    for (int t = 0; t < families; ++t) {
      const DiscreteJoint p = random_joint(rng, n, n);
      const JointTriple b = balanced_triple_around(rng, p);
      double prev = std::numeric_limits<double>::infinity();
      for (double scale : {1.0, 0.5, 0.25, 0.125, 0.0625, 0.0}) {
        DiscreteJoint p_vc = p, p_cv = p;
        for (std::size_t c = 0; c < p.cells(); ++c) {
          const double d = b.p_vc.p[c] - p.p[c];  // zero-margin direction
          p_vc.p[c] += scale * d;
          p_cv.p[c] -= scale * d;
        }
        const EquilibriumReport eq = check_equilibrium(p, p_vc, p_cv, 1e-12);
        if (eq.objective_at_dstar > prev + 1e-12) monotone = false;
        prev = eq.objective_at_dstar;
      }
      sweep.max_deviation = std::max(sweep.max_deviation,
                                     std::abs(prev + kLn4));
    }
    sweep.pass = monotone && sweep.max_deviation <= opt.tolerance;
    report.checks.push_back(sweep);
  }

  return report;
}

}  // namespace capmatch
