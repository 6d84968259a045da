#include "capmatch/losses.hpp"

#include <stdexcept>
#include <string>

namespace capmatch {

namespace {

void require_nonneg(double v, const char* name) {
  if (v < 0.0)
    throw std::invalid_argument(std::string("LossWeights: ") + name +
                                " must be nonnegative");
}

NodeId accumulate_sum(Tape& tape, const std::vector<NodeId>& terms) {
  if (terms.empty()) return tape.constant(0.0);
  NodeId acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
  return acc;
}

NodeId accumulate_mean(Tape& tape, const std::vector<NodeId>& terms) {
  if (terms.empty()) return tape.constant(0.0);
  return tape.mul_scalar(accumulate_sum(tape, terms),
                         1.0 / static_cast<double>(terms.size()));
}

// shared encodings let the supervised and adversarial terms reuse one
// forward pass per paired example
struct PairedEncodings {
  std::vector<NodeId> z_x, z_y;
};

PairedEncodings encode_paired(ModelGraph& g,
                              std::span<const PairedItem> paired) {
  PairedEncodings enc;
  enc.z_x.reserve(paired.size());
  enc.z_y.reserve(paired.size());
  for (const PairedItem& item : paired) {
    enc.z_x.push_back(g.encode_image(*item.features));
    enc.z_y.push_back(g.encode_caption(*item.tokens));
  }
  return enc;
}

}  // namespace

void LossWeights::validate() const {
  require_nonneg(lambda_x, "lambda_x");
  require_nonneg(lambda_y, "lambda_y");
  require_nonneg(lambda_reg, "lambda_reg");
  require_nonneg(lambda_1, "lambda_1");
  require_nonneg(lambda_2, "lambda_2");
  require_nonneg(lambda_3, "lambda_3");
}

void VariantFlags::validate() const {
  if (confidence && !pseudo)
    throw std::invalid_argument(
        "VariantFlags: confidence re-weighting needs pseudo-labels");
}

NodeId ce_loss(Tape& tape, std::span<const NodeId> step_logits,
               std::span<const int> targets) {
  if (step_logits.size() != targets.size())
    throw std::invalid_argument(
        "ce_loss: " + std::to_string(step_logits.size()) + " logit steps vs " +
        std::to_string(targets.size()) + " targets");
  if (step_logits.empty())
    throw std::invalid_argument("ce_loss: empty sequence");
  std::vector<NodeId> terms;
  terms.reserve(step_logits.size());
  for (std::size_t t = 0; t < step_logits.size(); ++t)
    terms.push_back(tape.softmax_cross_entropy(step_logits[t], targets[t]));
  return accumulate_mean(tape, terms);
}

namespace {

NodeId sequence_ce(ModelGraph& g, NodeId z_x, std::span<const int> tokens,
                   bool mean) {
  Tape& tape = g.tape();
  const std::vector<NodeId> logits = g.teacher_logits(z_x, tokens);
  std::vector<NodeId> terms;
  terms.reserve(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t)
    terms.push_back(tape.softmax_cross_entropy(logits[t], tokens[t + 1]));
  return mean ? accumulate_mean(tape, terms) : accumulate_sum(tape, terms);
}

}  // namespace

NodeId sequence_ce_mean(ModelGraph& g, NodeId z_x,
                        std::span<const int> tokens) {
  return sequence_ce(g, z_x, tokens, true);
}

NodeId sequence_ce_sum(ModelGraph& g, NodeId z_x,
                       std::span<const int> tokens) {
  return sequence_ce(g, z_x, tokens, false);
}

NodeId supervised_ce(ModelGraph& g, std::span<const PairedItem> paired) {
  Tape& tape = g.tape();
  std::vector<NodeId> terms;
  terms.reserve(paired.size());
  for (const PairedItem& item : paired) {
    NodeId z = g.encode_image(*item.features);
    terms.push_back(sequence_ce_mean(g, z, *item.tokens));
  }
  return accumulate_sum(tape, terms);
}

NodeId pseudo_ce(ModelGraph& g, std::span<const PseudoItem> image_anchored,
                 std::span<const PseudoItem> caption_anchored,
                 const LossWeights& w) {
  Tape& tape = g.tape();
  auto weighted = [&](std::span<const PseudoItem> items) {
    std::vector<NodeId> terms;
    terms.reserve(items.size());
    for (const PseudoItem& item : items) {
      if (item.confidence < 0.0 || item.confidence > 1.0)
        throw std::invalid_argument("pseudo_ce: confidence " +
                                    std::to_string(item.confidence) +
                                    " outside [0,1]");
      NodeId z = g.encode_image(*item.features);
      terms.push_back(
          tape.mul_scalar(sequence_ce_mean(g, z, *item.tokens),
                          item.confidence));
    }
    return accumulate_sum(tape, terms);
  };
  NodeId x_side = tape.mul_scalar(weighted(image_anchored), w.lambda_x);
  NodeId y_side = tape.mul_scalar(weighted(caption_anchored), w.lambda_y);
  return tape.add(x_side, y_side);
}

GanNodes gan_utility_with(
    ModelGraph& g, std::span<const NodeId> paired_z_x,
    std::span<const NodeId> paired_z_y,
    std::span<const Tensor* const> unpaired_features,
    std::span<const std::vector<int>* const> unpaired_tokens,
    const LossWeights& w) {
  if (paired_z_x.empty() || unpaired_features.empty() ||
      unpaired_tokens.empty())
    throw std::invalid_argument("gan_utility: empty batch");
  Tape& tape = g.tape();

  std::vector<NodeId> real_terms, reg_terms;
  real_terms.reserve(paired_z_x.size());
  reg_terms.reserve(paired_z_x.size());
  for (std::size_t i = 0; i < paired_z_x.size(); ++i) {
    NodeId z_x = paired_z_x[i];
    NodeId z_y = paired_z_y[i];
    // the real-pair term trains the discriminator alone
    NodeId logit =
        g.pair_logit(tape.stop_gradient(z_x), tape.stop_gradient(z_y));
    real_terms.push_back(tape.log_sigmoid(logit));

    NodeId vc_residual = tape.sub(g.transform_vc(z_x), z_y);
    NodeId cv_residual = tape.sub(z_x, g.transform_cv(z_y));
    reg_terms.push_back(tape.add(tape.squared_norm(vc_residual),
                                 tape.squared_norm(cv_residual)));
  }

  std::vector<NodeId> fake_x_terms, fake_y_terms;
  std::vector<NodeId> surrogate_x, surrogate_y;
  fake_x_terms.reserve(unpaired_features.size());
  for (const Tensor* feats : unpaired_features) {
    NodeId z_x = g.encode_image(*feats);
    NodeId logit = g.pair_logit(z_x, g.transform_vc(z_x));
    fake_x_terms.push_back(tape.log_sigmoid(tape.mul_scalar(logit, -1.0)));
    surrogate_x.push_back(tape.log_sigmoid(logit));
  }
  fake_y_terms.reserve(unpaired_tokens.size());
  for (const std::vector<int>* tokens : unpaired_tokens) {
    NodeId z_y = g.encode_caption(*tokens);
    NodeId logit = g.pair_logit(g.transform_cv(z_y), z_y);
    fake_y_terms.push_back(tape.log_sigmoid(tape.mul_scalar(logit, -1.0)));
    surrogate_y.push_back(tape.log_sigmoid(logit));
  }

  GanNodes out;
  out.real_term = accumulate_mean(tape, real_terms);
  NodeId fake_x = tape.mul_scalar(accumulate_mean(tape, fake_x_terms), 0.5);
  NodeId fake_y = tape.mul_scalar(accumulate_mean(tape, fake_y_terms), 0.5);
  out.utility = tape.add(out.real_term, tape.add(fake_x, fake_y));
  out.gen_surrogate = tape.mul_scalar(
      tape.add(accumulate_mean(tape, surrogate_x),
               accumulate_mean(tape, surrogate_y)),
      -0.5);
  out.reg =
      tape.mul_scalar(accumulate_mean(tape, reg_terms), w.lambda_reg);
  return out;
}

GanNodes gan_utility(ModelGraph& g, std::span<const PairedItem> paired,
                     std::span<const Tensor* const> unpaired_features,
                     std::span<const std::vector<int>* const> unpaired_tokens,
                     const LossWeights& w) {
  const PairedEncodings enc = encode_paired(g, paired);
  return gan_utility_with(g, enc.z_x, enc.z_y, unpaired_features,
                          unpaired_tokens, w);
}

NodeId pair_mismatch_term(ModelGraph& g, std::span<const PairedItem> paired) {
  if (paired.size() < 2)
    throw std::invalid_argument("pair_mismatch_term: need at least two pairs");
  Tape& tape = g.tape();
  std::vector<NodeId> z_x, z_y;
  z_x.reserve(paired.size());
  z_y.reserve(paired.size());
  for (const PairedItem& item : paired) {
    z_x.push_back(tape.stop_gradient(g.encode_image(*item.features)));
    z_y.push_back(tape.stop_gradient(g.encode_caption(*item.tokens)));
  }
  std::vector<NodeId> terms;
  const std::size_t n = paired.size();
  for (std::size_t rot = 1; rot <= 8; ++rot) {
    if (rot >= n) break;
    for (std::size_t i = 0; i < n; ++i) {
      NodeId logit = g.pair_logit(z_x[i], z_y[(i + rot) % n]);
      terms.push_back(tape.log_sigmoid(tape.mul_scalar(logit, -1.0)));
    }
  }
  return accumulate_mean(tape, terms);
}

NodeId triplet_loss(ModelGraph& g, std::span<const TripletItem> triplets) {
  Tape& tape = g.tape();
  std::vector<NodeId> terms;
  terms.reserve(triplets.size());
  for (const TripletItem& t : triplets) {
    NodeId z_pos = g.encode_image(*t.positive.features);
    NodeId z_neg = g.encode_image(*t.negative_features);
    // log-likelihoods as negated summed CE
    NodeId ll_pp =
        tape.mul_scalar(sequence_ce_sum(g, z_pos, *t.positive.tokens), -1.0);
    NodeId ll_pu =
        tape.mul_scalar(sequence_ce_sum(g, z_neg, *t.positive.tokens), -1.0);
    NodeId ll_up =
        tape.mul_scalar(sequence_ce_sum(g, z_pos, *t.negative_tokens), -1.0);
    // -(ll_pp - ll_pu) - (ll_pp - ll_up)
    terms.push_back(
        tape.add(tape.add(ll_pu, ll_up), tape.mul_scalar(ll_pp, -2.0)));
  }
  return accumulate_sum(tape, terms);
}

NodeId concept_loss(ModelGraph& g, std::span<const ConceptItem> items) {
  Tape& tape = g.tape();
  const std::size_t concept_dim = g.bundle().config.concept_dim;
  std::vector<NodeId> terms;
  terms.reserve(items.size());
  for (const ConceptItem& item : items) {
    if (item.concept_vec->numel() != concept_dim)
      throw std::invalid_argument("concept_loss: concept dim " +
                                  item.concept_vec->shape_str() +
                                  " does not match " +
                                  std::to_string(concept_dim));
    NodeId pen = g.image_penultimate(*item.features);
    NodeId residual =
        tape.sub(g.concept_regress(pen), tape.input(*item.concept_vec));
    terms.push_back(tape.squared_norm(residual));
  }
  return accumulate_mean(tape, terms);
}

TotalLossNodes total_loss(ModelGraph& g, const BatchView& batch,
                          const LossWeights& w, const VariantFlags& flags) {
  w.validate();
  flags.validate();
  Tape& tape = g.tape();
  TotalLossNodes out;

  const PairedEncodings enc = encode_paired(g, batch.paired);
  {
    std::vector<NodeId> terms;
    terms.reserve(batch.paired.size());
    for (std::size_t i = 0; i < batch.paired.size(); ++i)
      terms.push_back(
          sequence_ce_mean(g, enc.z_x[i], *batch.paired[i].tokens));
    out.cap = accumulate_sum(tape, terms);
  }
  if (flags.pseudo)
    out.cap = tape.add(out.cap, pseudo_ce(g, batch.pseudo_image_anchored,
                                          batch.pseudo_caption_anchored, w));

  NodeId total = out.cap;
  NodeId trainer_total = out.cap;
  if (flags.gan) {
    GanNodes gan = gan_utility_with(g, enc.z_x, enc.z_y,
                                    batch.unpaired_features,
                                    batch.unpaired_tokens, w);
    out.utility = gan.utility;
    out.reg = gan.reg;
    out.gan_real_term = gan.real_term;
    total = tape.add(
        total, tape.mul_scalar(tape.add(gan.utility, gan.reg), w.lambda_1));
    trainer_total = tape.add(
        trainer_total,
        tape.mul_scalar(tape.add(gan.gen_surrogate, gan.reg), w.lambda_1));
  } else {
    out.utility = tape.constant(0.0);
    out.reg = tape.constant(0.0);
    out.gan_real_term = tape.constant(0.0);
  }

  out.triplet = flags.triplet ? triplet_loss(g, batch.triplets)
                              : tape.constant(0.0);
  if (flags.triplet) {
    NodeId weighted = tape.mul_scalar(out.triplet, w.lambda_2);
    total = tape.add(total, weighted);
    trainer_total = tape.add(trainer_total, weighted);
  }

  out.concept_term = flags.concept_transfer ? concept_loss(g, batch.concepts)
                              : tape.constant(0.0);
  if (flags.concept_transfer) {
    NodeId weighted = tape.mul_scalar(out.concept_term, w.lambda_3);
    total = tape.add(total, weighted);
    trainer_total = tape.add(trainer_total, weighted);
  }

  out.total = total;
  out.trainer_total = trainer_total;
  return out;
}

CycleGanNodes cyclegan_loss(ModelGraph& g, const BatchView& batch,
                            const LossWeights& w, bool include_supervised) {
  if (batch.unpaired_features.empty() || batch.unpaired_tokens.empty())
    throw std::invalid_argument("cyclegan_loss: empty batch");
  Tape& tape = g.tape();

  std::vector<NodeId> cycle_x, cycle_y;
  std::vector<NodeId> real_x, real_y, fake_on_x, fake_on_y;
  std::vector<NodeId> surrogate;
  for (const Tensor* feats : batch.unpaired_features) {
    NodeId z_x = g.encode_image(*feats);
    NodeId round_trip = g.transform_cv(g.transform_vc(z_x));
    cycle_x.push_back(
        tape.sqrt(tape.squared_norm(tape.sub(round_trip, z_x))));
    real_x.push_back(
        tape.log_sigmoid(g.domain_logit_x(tape.stop_gradient(z_x))));
    // translated image feature judged by the caption-domain critic
    NodeId fake_logit = g.domain_logit_y(g.transform_vc(z_x));
    fake_on_y.push_back(tape.log_sigmoid(tape.mul_scalar(fake_logit, -1.0)));
    surrogate.push_back(tape.log_sigmoid(fake_logit));
  }
  for (const std::vector<int>* tokens : batch.unpaired_tokens) {
    NodeId z_y = g.encode_caption(*tokens);
    NodeId round_trip = g.transform_vc(g.transform_cv(z_y));
    cycle_y.push_back(
        tape.sqrt(tape.squared_norm(tape.sub(round_trip, z_y))));
    real_y.push_back(
        tape.log_sigmoid(g.domain_logit_y(tape.stop_gradient(z_y))));
    NodeId fake_logit = g.domain_logit_x(g.transform_cv(z_y));
    fake_on_x.push_back(tape.log_sigmoid(tape.mul_scalar(fake_logit, -1.0)));
    surrogate.push_back(tape.log_sigmoid(fake_logit));
  }

  CycleGanNodes out;
  out.cycle = tape.add(accumulate_mean(tape, cycle_x),
                       accumulate_mean(tape, cycle_y));
  NodeId real_x_mean = accumulate_mean(tape, real_x);
  NodeId real_y_mean = accumulate_mean(tape, real_y);
  out.critic_real_terms = tape.add(real_x_mean, real_y_mean);
  NodeId adv_x = tape.add(real_x_mean, accumulate_mean(tape, fake_on_x));
  NodeId adv_y = tape.add(real_y_mean, accumulate_mean(tape, fake_on_y));
  out.adversarial = tape.add(adv_x, adv_y);
  out.disc_objective = out.adversarial;
  out.supervised = include_supervised ? supervised_ce(g, batch.paired)
                                      : tape.constant(0.0);
  out.generator_total = tape.add(
      out.supervised,
      tape.mul_scalar(tape.add(out.cycle, out.adversarial), w.lambda_1));
  NodeId gen_surrogate =
      tape.mul_scalar(accumulate_mean(tape, surrogate), -1.0);
  out.trainer_total = tape.add(
      out.supervised,
      tape.mul_scalar(tape.add(out.cycle, gen_surrogate), w.lambda_1));
  return out;
}

}  // namespace capmatch
