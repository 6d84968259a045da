#include <cmath>
#include <stdexcept>

#include "capmatch/losses.hpp"
#include "capmatch/toyworld.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace capmatch;
using namespace capmatch::testing;

namespace {

constexpr double kLn2 = 0.6931471805599453;

struct LossFixture {
  ModelBundle m = small_bundle(2024);
  Rng rng{555};
  std::vector<Tensor> images;
  std::vector<std::vector<int>> captions;
  std::vector<Tensor> concepts;

  LossFixture() {
    for (int i = 0; i < 4; ++i) {
      images.push_back(random_vector(rng, m.config.feature_dim));
      std::vector<int> toks = {Vocabulary::kStartToken};
      for (int t = 0; t < 3 + i % 2; ++t)
        toks.push_back(
            2 + static_cast<int>(rng.uniform_index(m.config.vocab_size - 2)));
      toks.push_back(Vocabulary::kEndToken);
      captions.push_back(std::move(toks));
      concepts.push_back(random_vector(rng, m.config.concept_dim));
    }
  }

  std::vector<PairedItem> paired(std::size_t n) const {
    std::vector<PairedItem> out;
    for (std::size_t i = 0; i < n; ++i)
      out.push_back({&images[i], &captions[i]});
    return out;
  }

  BatchView view(std::size_t n_paired = 2) const {
    BatchView v;
    v.paired = paired(n_paired);
    v.unpaired_features = {&images[2], &images[3]};
    v.unpaired_tokens = {&captions[2], &captions[3]};
    return v;
  }
};

double scalar_of(ModelBundle& m,
                 const std::function<NodeId(ModelGraph&)>& build) {
  Tape tape;
  ModelGraph g(tape, m);
  return tape.scalar_value(build(g));
}

}  // namespace

TEST_CASE("ce_loss closed forms") {
  SUBCASE("confident correct logits vanish") {
    Tape tape;
    Tensor logits = Tensor::zeros({40});
    logits.data[7] = 50.0;
    const NodeId l = tape.softmax_cross_entropy(tape.input(logits), 7);
    CHECK(tape.scalar_value(l) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("uniform logits over vocab 40 give ln 40") {
    Tape tape;
    std::vector<NodeId> steps = {tape.input(Tensor::zeros({40})),
                                 tape.input(Tensor::zeros({40}))};
    const std::vector<int> targets = {3, 17};
    const NodeId l = ce_loss(tape, steps, targets);
    CHECK(tape.scalar_value(l) ==
          doctest::Approx(std::log(40.0)).epsilon(1e-12));  // 3.68888
  }
  SUBCASE("nonnegative on random logits") {
    Rng rng(1);
    Tape tape;
    for (int t = 0; t < 20; ++t) {
      const NodeId l = tape.softmax_cross_entropy(
          tape.input(random_vector(rng, 11, -3.0, 3.0)),
          static_cast<int>(rng.uniform_index(11)));
      CHECK(tape.scalar_value(l) >= 0.0);
    }
  }
  SUBCASE("length mismatch is an error") {
    Tape tape;
    std::vector<NodeId> steps = {tape.input(Tensor::zeros({5}))};
    const std::vector<int> targets = {1, 2};
    CHECK_THROWS_AS(ce_loss(tape, steps, targets), std::invalid_argument);
  }
}

TEST_CASE("pseudo CE weighting") {
  LossFixture fx;
  const LossWeights w;
  SUBCASE("all-zero confidences kill the loss") {
    std::vector<PseudoItem> xs = {{&fx.images[0], &fx.captions[1], 0.0}};
    std::vector<PseudoItem> ys = {{&fx.images[1], &fx.captions[0], 0.0}};
    const double v = scalar_of(fx.m, [&](ModelGraph& g) {
      return pseudo_ce(g, xs, ys, w);
    });
    CHECK(v == 0.0);
  }
  SUBCASE("alpha = 1 reduces to the unweighted pseudo objective") {
    std::vector<PseudoItem> xs = {{&fx.images[0], &fx.captions[1], 1.0}};
    std::vector<PseudoItem> ys;
    const double weighted = scalar_of(fx.m, [&](ModelGraph& g) {
      return pseudo_ce(g, xs, ys, w);
    });
    const double plain = scalar_of(fx.m, [&](ModelGraph& g) {
      return sequence_ce_mean(g, g.encode_image(fx.images[0]),
                              fx.captions[1]);
    });
    CHECK(weighted == doctest::Approx(w.lambda_x * plain).epsilon(1e-12));
  }
  SUBCASE("hand-weighted pair against the per-pair CE oracle") {
    std::vector<PseudoItem> xs = {{&fx.images[0], &fx.captions[1], 0.25},
                                  {&fx.images[1], &fx.captions[2], 0.75}};
    std::vector<PseudoItem> ys = {{&fx.images[2], &fx.captions[3], 0.5}};
    const double got = scalar_of(fx.m, [&](ModelGraph& g) {
      return pseudo_ce(g, xs, ys, w);
    });
    auto ce = [&](const Tensor& x, const std::vector<int>& y) {
      return scalar_of(fx.m, [&](ModelGraph& g) {
        return sequence_ce_mean(g, g.encode_image(x), y);
      });
    };
    const double expect =
        w.lambda_x * (0.25 * ce(fx.images[0], fx.captions[1]) +
                      0.75 * ce(fx.images[1], fx.captions[2])) +
        w.lambda_y * 0.5 * ce(fx.images[2], fx.captions[3]);
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("confidence outside [0,1] is rejected") {
    std::vector<PseudoItem> xs = {{&fx.images[0], &fx.captions[1], 1.5}};
    std::vector<PseudoItem> ys;
    Tape tape;
    ModelGraph g(tape, fx.m);
    CHECK_THROWS_AS(pseudo_ce(g, xs, ys, w), std::invalid_argument);
  }
}

TEST_CASE("gan utility value and structure") {
  LossFixture fx;
  const LossWeights w;
  SUBCASE("zero discriminator gives -2 ln 2") {
    ModelBundle m = small_bundle(77);
    zero_tensor(m.d.bilinear);
    zero_tensor(m.d.head.w);
    zero_tensor(m.d.head.b);
    Tape tape;
    ModelGraph g(tape, m);
    const BatchView v = fx.view();
    const GanNodes nodes =
        gan_utility(g, v.paired, v.unpaired_features, v.unpaired_tokens, w);
    CHECK(tape.scalar_value(nodes.utility) ==
          doctest::Approx(-2.0 * kLn2).epsilon(1e-12));
  }
  SUBCASE("aligned encoders and identity transformers zero the regression") {
    ModelBundle m = small_bundle(78);
    for (const NamedParam& p : named_parameters(m)) zero_tensor(*p.tensor);
    make_identity(m.t_vc);
    make_identity(m.t_cv);
    Tape tape;
    ModelGraph g(tape, m);
    const BatchView v = fx.view();
    const GanNodes nodes =
        gan_utility(g, v.paired, v.unpaired_features, v.unpaired_tokens, w);
    CHECK(tape.scalar_value(nodes.reg) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("the real-pair term moves only the discriminator") {
    Tape tape;
    ModelGraph g(tape, fx.m);
    const BatchView v = fx.view();
    const GanNodes nodes =
        gan_utility(g, v.paired, v.unpaired_features, v.unpaired_tokens, w);
    tape.backward(nodes.real_term);
    for (const NamedParam& p : generator_parameters(fx.m)) {
      const Tensor& grad = tape.grad(g.param_node(*p.tensor));
      for (double x : grad.data) CHECK(x == 0.0);
    }
    double disc_grad_mass = 0.0;
    for (const NamedParam& p : discriminator_parameters(fx.m))
      disc_grad_mass += squared_norm(tape.grad(g.param_node(*p.tensor)));
    CHECK(disc_grad_mass > 0.0);
  }
  SUBCASE("empty batches are rejected") {
    Tape tape;
    ModelGraph g(tape, fx.m);
    BatchView v = fx.view();
    v.paired.clear();
    CHECK_THROWS_AS(gan_utility(g, v.paired, v.unpaired_features,
                                v.unpaired_tokens, w),
                    std::invalid_argument);
  }
}

TEST_CASE("triplet loss against the log-likelihood oracle") {
  LossFixture fx;
  SUBCASE("degenerate negatives cancel exactly") {
    std::vector<TripletItem> ts = {
        {{&fx.images[0], &fx.captions[0]}, &fx.images[0], &fx.captions[0]}};
    const double v = scalar_of(fx.m, [&](ModelGraph& g) {
      return triplet_loss(g, ts);
    });
    CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("three-sequence case recomputed from raw log-probs") {
    std::vector<TripletItem> ts = {
        {{&fx.images[0], &fx.captions[0]}, &fx.images[1], &fx.captions[1]}};
    const double got = scalar_of(fx.m, [&](ModelGraph& g) {
      return triplet_loss(g, ts);
    });
    const Tensor z_pos = infer::encode_image(fx.m, fx.images[0]);
    const Tensor z_neg = infer::encode_image(fx.m, fx.images[1]);
    const double ll_pp =
        infer::sequence_log_prob(fx.m, z_pos, fx.captions[0]);
    const double ll_pu =
        infer::sequence_log_prob(fx.m, z_neg, fx.captions[0]);
    const double ll_up =
        infer::sequence_log_prob(fx.m, z_pos, fx.captions[1]);
    CHECK(got ==
          doctest::Approx(ll_pu + ll_up - 2.0 * ll_pp).epsilon(1e-9));
  }
  SUBCASE("widening the likelihood gap decreases the loss") {
    // compare against a bundle overfit toward the positive caption
    std::vector<TripletItem> ts = {
        {{&fx.images[0], &fx.captions[0]}, &fx.images[1], &fx.captions[1]}};
    const double before = scalar_of(fx.m, [&](ModelGraph& g) {
      return triplet_loss(g, ts);
    });
    // raise p(y_p | x_p) by biasing the output layer toward y_p's tokens
    ModelBundle better = fx.m;
    for (std::size_t t = 1; t < fx.captions[0].size(); ++t)
      better.h.out.b.data[static_cast<std::size_t>(fx.captions[0][t])] += 2.0;
    const double after = scalar_of(better, [&](ModelGraph& g) {
      return triplet_loss(g, ts);
    });
    CHECK(after < before);
  }
}

TEST_CASE("concept loss closed forms") {
  LossFixture fx;
  SUBCASE("perfect regression is zero") {
    ModelBundle m = small_bundle(79);
    for (const NamedParam& p : named_parameters(m)) zero_tensor(*p.tensor);
    const Tensor zero_concept = Tensor::zeros({m.config.concept_dim});
    std::vector<ConceptItem> items = {{&fx.images[0], &zero_concept}};
    const double v = scalar_of(m, [&](ModelGraph& g) {
      return concept_loss(g, items);
    });
    CHECK(v == 0.0);
  }
  SUBCASE("unit offset gives exactly one") {
    ModelBundle m = small_bundle(80);
    for (const NamedParam& p : named_parameters(m)) zero_tensor(*p.tensor);
    Tensor e1 = Tensor::zeros({m.config.concept_dim});
    e1.data[0] = 1.0;
    std::vector<ConceptItem> items = {{&fx.images[0], &e1},
                                      {&fx.images[1], &e1}};
    const double v = scalar_of(m, [&](ModelGraph& g) {
      return concept_loss(g, items);
    });
    CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("nonnegative and dim-checked") {
    const double v = scalar_of(fx.m, [&](ModelGraph& g) {
      std::vector<ConceptItem> items = {{&fx.images[0], &fx.concepts[0]}};
      return concept_loss(g, items);
    });
    CHECK(v >= 0.0);
    Tape tape;
    ModelGraph g(tape, fx.m);
    const Tensor wrong = Tensor::zeros({7});
    std::vector<ConceptItem> items = {{&fx.images[0], &wrong}};
    CHECK_THROWS_AS(concept_loss(g, items), std::invalid_argument);
  }
}

TEST_CASE("total loss composes exactly from its parts") {
  LossFixture fx;
  LossWeights w;
  BatchView v = fx.view();
  v.pseudo_image_anchored = {{&fx.images[2], &fx.captions[3], 0.6}};
  v.pseudo_caption_anchored = {{&fx.images[3], &fx.captions[2], 0.4}};
  v.triplets = {
      {{&fx.images[0], &fx.captions[0]}, &fx.images[2], &fx.captions[2]}};
  v.concepts = {{&fx.images[0], &fx.concepts[0]}};

  SUBCASE("all lambdas zero and bare flags reduce to supervised CE") {
    LossWeights zero;
    zero.lambda_x = zero.lambda_y = zero.lambda_reg = 0.0;
    zero.lambda_1 = zero.lambda_2 = zero.lambda_3 = 0.0;
    VariantFlags bare;
    Tape tape;
    ModelGraph g(tape, fx.m);
    const TotalLossNodes nodes = total_loss(g, v, zero, bare);
    const double plain = scalar_of(fx.m, [&](ModelGraph& g2) {
      return supervised_ce(g2, v.paired);
    });
    CHECK(tape.scalar_value(nodes.total) ==
          doctest::Approx(plain).epsilon(1e-12));
  }
  SUBCASE("default flags match the term-by-term oracle within 1e-12") {
    VariantFlags flags;
    flags.gan = flags.pseudo = flags.confidence = flags.triplet = true;
    flags.concept_transfer = true;
    Tape tape;
    ModelGraph g(tape, fx.m);
    const TotalLossNodes nodes = total_loss(g, v, w, flags);
    const double cap = scalar_of(fx.m, [&](ModelGraph& g2) {
      Tape& t = g2.tape();
      return t.add(supervised_ce(g2, v.paired),
                   pseudo_ce(g2, v.pseudo_image_anchored,
                             v.pseudo_caption_anchored, w));
    });
    double u_val = 0.0, reg_val = 0.0;
    {
      Tape t2;
      ModelGraph g2(t2, fx.m);
      const GanNodes gn = gan_utility(g2, v.paired, v.unpaired_features,
                                      v.unpaired_tokens, w);
      u_val = t2.scalar_value(gn.utility);
      reg_val = t2.scalar_value(gn.reg);
    }
    const double trip = scalar_of(fx.m, [&](ModelGraph& g2) {
      return triplet_loss(g2, v.triplets);
    });
    const double conc = scalar_of(fx.m, [&](ModelGraph& g2) {
      return concept_loss(g2, v.concepts);
    });
    const double expect = cap + w.lambda_1 * (u_val + reg_val) +
                          w.lambda_2 * trip + w.lambda_3 * conc;
    CHECK(tape.scalar_value(nodes.total) ==
          doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("ver1 flags leave pseudo, triplet, and concept inert") {
    VariantFlags flags;
    flags.gan = true;
    Tape tape;
    ModelGraph g(tape, fx.m);
    const TotalLossNodes nodes = total_loss(g, v, w, flags);
    CHECK(tape.scalar_value(nodes.triplet) == 0.0);
    CHECK(tape.scalar_value(nodes.concept_term) == 0.0);
    const double cap_only = scalar_of(fx.m, [&](ModelGraph& g2) {
      return supervised_ce(g2, v.paired);
    });
    CHECK(tape.scalar_value(nodes.cap) ==
          doctest::Approx(cap_only).epsilon(1e-12));
  }
  SUBCASE("noise handling without pseudo-labels is inconsistent") {
    VariantFlags flags;
    flags.confidence = true;
    Tape tape;
    ModelGraph g(tape, fx.m);
    CHECK_THROWS_AS(total_loss(g, v, w, flags), std::invalid_argument);
  }
  SUBCASE("negative weights are rejected") {
    LossWeights bad;
    bad.lambda_2 = -0.1;
    Tape tape;
    ModelGraph g(tape, fx.m);
    CHECK_THROWS_AS(total_loss(g, v, bad, VariantFlags{}),
                    std::invalid_argument);
  }
}

TEST_CASE("cyclegan loss values") {
  LossFixture fx;
  const LossWeights w;
  SUBCASE("mutual inverses zero the cycle term") {
    ModelBundle m = small_bundle(81);
    for (const NamedParam& p : named_parameters(m)) zero_tensor(*p.tensor);
    make_identity(m.t_vc);
    make_identity(m.t_cv);
    // zero latents pass through the identity transformers unchanged
    Tape tape;
    ModelGraph g(tape, m);
    const CycleGanNodes nodes = cyclegan_loss(g, fx.view(), w, true);
    CHECK(tape.scalar_value(nodes.cycle) == 0.0);
  }
  SUBCASE("constant-half critics contribute -2 ln 2 each") {
    ModelBundle m = small_bundle(82);
    for (const NamedParam& p : domain_discriminator_parameters(m))
      zero_tensor(*p.tensor);
    Tape tape;
    ModelGraph g(tape, m);
    const CycleGanNodes nodes = cyclegan_loss(g, fx.view(), w, true);
    CHECK(tape.scalar_value(nodes.adversarial) ==
          doctest::Approx(-4.0 * kLn2).epsilon(1e-12));
  }
  SUBCASE("the pure-unpaired variant drops the supervised term") {
    Tape tape;
    ModelGraph g(tape, fx.m);
    const CycleGanNodes nodes = cyclegan_loss(g, fx.view(), w, false);
    CHECK(tape.scalar_value(nodes.supervised) == 0.0);
  }
  SUBCASE("critic real terms never move the encoders") {
    Tape tape;
    ModelGraph g(tape, fx.m);
    const CycleGanNodes nodes = cyclegan_loss(g, fx.view(), w, false);
    tape.backward(nodes.disc_objective);
    // encoders receive gradient only through the translated fakes; the
    // stop-gradient on the real inputs keeps the critics' real terms off F,G
    double domain_mass = 0.0;
    for (const NamedParam& p : domain_discriminator_parameters(fx.m))
      domain_mass += squared_norm(tape.grad(g.param_node(*p.tensor)));
    CHECK(domain_mass > 0.0);
  }
}

TEST_CASE("every loss passes the finite-difference gate") {
  LossFixture fx;
  LossWeights w;
  BatchView v = fx.view();
  v.pseudo_image_anchored = {{&fx.images[2], &fx.captions[3], 0.6}};
  v.pseudo_caption_anchored = {{&fx.images[3], &fx.captions[2], 0.4}};
  v.triplets = {
      {{&fx.images[0], &fx.captions[0]}, &fx.images[2], &fx.captions[2]}};
  v.concepts = {{&fx.images[0], &fx.concepts[0]}};

  SUBCASE("supervised CE") {
    CHECK(model_grad_check(fx.m, [&](ModelGraph& g) {
            return supervised_ce(g, v.paired);
          }) <= 1e-4);
  }
  SUBCASE("pseudo CE") {
    CHECK(model_grad_check(fx.m, [&](ModelGraph& g) {
            return pseudo_ce(g, v.pseudo_image_anchored,
                             v.pseudo_caption_anchored, w);
          }) <= 1e-4);
  }
  SUBCASE("adversarial objective with regression, per player") {
    // the discriminator differentiates the full utility
    CHECK(model_grad_check_subset(
              fx.m, discriminator_parameters(fx.m),
              [&](ModelGraph& g) {
                const GanNodes n = gan_utility(
                    g, v.paired, v.unpaired_features, v.unpaired_tokens, w);
                return g.tape().add(n.utility, n.reg);
              }) <= 1e-4);
    // generators differentiate the fake terms plus the regression; the
    // real-pair term is a constant for them by construction
    CHECK(model_grad_check_subset(
              fx.m, generator_parameters(fx.m),
              [&](ModelGraph& g) {
                const GanNodes n = gan_utility(
                    g, v.paired, v.unpaired_features, v.unpaired_tokens, w);
                return g.tape().add(g.tape().sub(n.utility, n.real_term),
                                    n.reg);
              }) <= 1e-4);
  }
  SUBCASE("triplet") {
    CHECK(model_grad_check(fx.m, [&](ModelGraph& g) {
            return triplet_loss(g, v.triplets);
          }) <= 1e-4);
  }
  SUBCASE("concept") {
    CHECK(model_grad_check(fx.m, [&](ModelGraph& g) {
            return concept_loss(g, v.concepts);
          }) <= 1e-4);
  }
  SUBCASE("total with every flag, per player") {
    VariantFlags flags;
    flags.gan = flags.pseudo = flags.confidence = flags.triplet = true;
    flags.concept_transfer = true;
    CHECK(model_grad_check_subset(
              fx.m, discriminator_parameters(fx.m),
              [&](ModelGraph& g) {
                return total_loss(g, v, w, flags).total;
              }) <= 1e-4);
    CHECK(model_grad_check_subset(
              fx.m, generator_parameters(fx.m),
              [&](ModelGraph& g) {
                const TotalLossNodes n = total_loss(g, v, w, flags);
                return g.tape().sub(
                    n.total,
                    g.tape().mul_scalar(n.gan_real_term, w.lambda_1));
              }) <= 1e-4);
  }
  SUBCASE("cyclegan generator objective, per player") {
    // the transformers start as the exact identity, which parks the cycle
    // norm at sqrt(0); jitter them so the probe stays differentiable
    ModelBundle mm = fx.m;
    Rng jitter(5);
    for (FeatureTransformer* t : {&mm.t_vc, &mm.t_cv})
      for (Linear* l : {&t->l1, &t->l2, &t->l3, &t->l4})
        for (double& x : l->w.data) x += jitter.uniform(-0.05, 0.05);
    CHECK(model_grad_check_subset(
              mm, domain_discriminator_parameters(mm),
              [&](ModelGraph& g) {
                return cyclegan_loss(g, v, w, true).generator_total;
              },
              1e-6) <= 1e-4);
    CHECK(model_grad_check_subset(
              mm, generator_parameters(mm),
              [&](ModelGraph& g) {
                const CycleGanNodes n = cyclegan_loss(g, v, w, true);
                return g.tape().sub(
                    n.generator_total,
                    g.tape().mul_scalar(n.critic_real_terms, w.lambda_1));
              }) <= 1e-4);
  }
}
