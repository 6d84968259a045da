#pragma once

#include <span>
#include <vector>

#include "capmatch/models.hpp"
#include "capmatch/tape.hpp"

namespace capmatch {

struct LossWeights {
  double lambda_x = 0.1;    // pseudo-captioned images
  double lambda_y = 0.1;    // pseudo-imaged captions
  double lambda_reg = 1.0;  // paired transformer regression
  double lambda_1 = 0.1;    // adversarial objective
  double lambda_2 = 0.1;    // triplet
  double lambda_3 = 0.1;    // concept regression

  void validate() const;  // all weights must be nonnegative
};

// Which loss terms are active; the ablation ladder maps onto these.
struct VariantFlags {
  bool gan = false;
  bool pseudo = false;
  bool confidence = false;  // requires pseudo
  bool triplet = false;
  bool concept_transfer = false;

  void validate() const;
};

// Non-owning batch item views; the dataset outlives every tape.
struct PairedItem {
  const Tensor* features;
  const std::vector<int>* tokens;
};

struct PseudoItem {
  const Tensor* features;
  const std::vector<int>* tokens;
  double confidence;  // in [0, 1]
};

struct TripletItem {
  PairedItem positive;
  const Tensor* negative_features;
  const std::vector<int>* negative_tokens;
};

struct ConceptItem {
  const Tensor* features;
  const Tensor* concept_vec;
};

struct BatchView {
  std::vector<PairedItem> paired;
  std::vector<const Tensor*> unpaired_features;
  std::vector<const std::vector<int>*> unpaired_tokens;
  std::vector<PseudoItem> pseudo_image_anchored;    // anchor image, matched caption
  std::vector<PseudoItem> pseudo_caption_anchored;  // matched image, anchor caption
  std::vector<TripletItem> triplets;
  std::vector<ConceptItem> concepts;
};

// mean over time steps of per-token cross entropy
NodeId ce_loss(Tape& tape, std::span<const NodeId> step_logits,
               std::span<const int> targets);

// teacher-forcing CE of tokens[1..] given z_x; mean or sum over steps
NodeId sequence_ce_mean(ModelGraph& g, NodeId z_x, std::span<const int> tokens);
NodeId sequence_ce_sum(ModelGraph& g, NodeId z_x, std::span<const int> tokens);

// sum over the paired batch of per-sequence mean CE
NodeId supervised_ce(ModelGraph& g, std::span<const PairedItem> paired);

// lambda_x * sum alpha_x CE(pseudo caption | image)
// + lambda_y * sum alpha_y CE(caption | pseudo image)
NodeId pseudo_ce(ModelGraph& g, std::span<const PseudoItem> image_anchored,
                 std::span<const PseudoItem> caption_anchored,
                 const LossWeights& w);

struct GanNodes {
  NodeId utility;    // U: real + 1/2 fake-x + 1/2 fake-y (means)
  NodeId reg;        // lambda_reg * paired-batch mean of both residuals
  NodeId real_term;  // the paired log D term alone; updates only D
  // Non-saturating surrogate for the generator step:
  // -1/2 mean log D(fake_x) - 1/2 mean log D(fake_y). Same fixed points as
  // minimizing the utility's fake terms, but bounded: descending
  // log(1 - D(fake)) directly drives the encoders into tanh saturation.
  NodeId gen_surrogate;
};

// The real-pair term carries stop-gradients toward the encoders, so its
// gradient touches D alone; the fake terms drive F, G and both transformers.
GanNodes gan_utility(ModelGraph& g, std::span<const PairedItem> paired,
                     std::span<const Tensor* const> unpaired_features,
                     std::span<const std::vector<int>* const> unpaired_tokens,
                     const LossWeights& w);

// mean log(1 - D(z_x_i, z_y_j)) over rotated mismatches of the paired
// batch, stop-gradded like the real term so it trains D alone. Ascended by
// the discriminator alongside the utility: synthesized negatives alone
// leave D blind to pair compatibility once the transformers align, because
// they only ever contrast true pairs against near-counterpart proposals.
NodeId pair_mismatch_term(ModelGraph& g, std::span<const PairedItem> paired);

// gan_utility over already-encoded paired latents (one forward per item)
GanNodes gan_utility_with(
    ModelGraph& g, std::span<const NodeId> paired_z_x,
    std::span<const NodeId> paired_z_y,
    std::span<const Tensor* const> unpaired_features,
    std::span<const std::vector<int>* const> unpaired_tokens,
    const LossWeights& w);

// sum over positives of -log[p(y_p|x_p)/p(y_p|x_u)] - log[p(y_p|x_p)/p(y_u|x_p)]
// with sequence likelihoods summed in log space under teacher forcing
NodeId triplet_loss(ModelGraph& g, std::span<const TripletItem> triplets);

// mean squared norm of R(F_penultimate(x)) - concept(x)
NodeId concept_loss(ModelGraph& g, std::span<const ConceptItem> items);

struct TotalLossNodes {
  NodeId total;          // literal composition with the minimax utility
  NodeId trainer_total;  // generator-step objective: fake terms replaced by
                         // the non-saturating surrogate
  NodeId cap;            // supervised CE (+ pseudo CE when active)
  NodeId utility;        // U before the lambda_1 weight; 0-node when inactive
  NodeId reg;
  NodeId triplet;
  NodeId concept_term;
  NodeId gan_real_term;  // the stop-gradient paired log D term; 0 when off
};

// cap + lambda_1 (U + reg) + lambda_2 triplet + lambda_3 concept over the
// active flags; the minimax sign is the trainer's business (the
// discriminator ascends `utility`, generators descend `total`).
TotalLossNodes total_loss(ModelGraph& g, const BatchView& batch,
                          const LossWeights& w, const VariantFlags& flags);

struct CycleGanNodes {
  NodeId disc_objective;   // ascended with respect to D_x, D_y only
  NodeId generator_total;  // supervised + lambda_1 (cycle + adversarial)
  NodeId trainer_total;    // generator objective with the non-saturating
                           // surrogate in place of the fake terms
  NodeId cycle;
  NodeId adversarial;
  NodeId supervised;
  NodeId critic_real_terms;  // stop-gradient real halves of the critics
};

// Feature-space translation baseline: per-modality critics judge real
// encodings against translated ones, plus round-trip consistency. The
// supervised term can be dropped to reproduce the untrainable pure-unpaired
// variant.
CycleGanNodes cyclegan_loss(ModelGraph& g, const BatchView& batch,
                            const LossWeights& w, bool include_supervised);

}  // namespace capmatch
