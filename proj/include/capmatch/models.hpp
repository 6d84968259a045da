#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "capmatch/adam.hpp"
#include "capmatch/rng.hpp"
#include "capmatch/tape.hpp"
#include "capmatch/tensor.hpp"

namespace capmatch {

// Single latent width d shared by both modalities; every transform and the
// decoder's hidden state live in this dimension.
struct ModelConfig {
  std::size_t feature_dim = 39;   // toyworld render width
  std::size_t latent_dim = 32;    // d
  std::size_t image_hidden = 64;  // F hidden width; also R's input
  std::size_t embed_dim = 32;
  std::size_t vocab_size = 30;
  std::size_t concept_dim = 13;

  bool operator==(const ModelConfig&) const = default;
};

struct Linear {
  Tensor w;  // [out x in]
  Tensor b;  // [out]
};

// Elman-style tanh cell: h' = tanh(w_h h + w_e e + b)
struct RnnCell {
  Tensor w_h, w_e, b;
};

struct ImageEncoder {         // F
  Linear h1, h2;              // relu after each
  Linear proj;                // penultimate (h2 output) -> d
};

struct CaptionEncoder {       // G
  Tensor embedding;           // [embed_dim x vocab], one column per token
  RnnCell cell;
};

struct CaptionDecoder {       // H; initial hidden state is z^x itself
  Tensor embedding;
  RnnCell cell;
  Linear out;                 // hidden -> vocab logits
};

struct FeatureTransformer {   // T_{v->c} / T_{c->v}: 4 FC layers, relu between
  Linear l1, l2, l3, l4;
};

struct PairDiscriminator {
  // log-bilinear pair scorer: logit = z_x^T W z_y + u^T [z_x; z_y] + b.
  // The bilinear form carries the pair-compatibility judgment; the linear
  // head absorbs per-modality cues. A deep concat-MLP here reaches the
  // same utility through marginal shortcuts and never learns to rank
  // counterparts, which starves the pseudo-label retrieval.
  Tensor bilinear;  // [d x d]
  Linear head;      // over concat(z_x, z_y) -> 1 logit
};

struct DomainDiscriminator {  // CycleGAN baseline's per-modality critics
  Linear l1, l2;
  Linear head;
};

struct ConceptHead {          // R on F's penultimate activations
  Linear l1;
  Linear head;
};

struct LatentPair {
  Tensor z_x, z_y;
};

struct DecodeConfig {
  enum class Mode { kTeacherForcing, kGreedy, kBeam };
  Mode mode = Mode::kBeam;
  int beam_width = 3;
  int max_length = 16;  // total token budget including start/end

  void validate() const;
};

struct ModelBundle {
  ModelConfig config;
  ImageEncoder f;
  CaptionEncoder g;
  CaptionDecoder h;
  FeatureTransformer t_vc, t_cv;
  PairDiscriminator d;
  ConceptHead r;
  DomainDiscriminator d_x, d_y;

  static ModelBundle init(const ModelConfig& cfg, Rng& rng);
};

// Deterministically ordered named views, shared by the optimizer, the
// checkpoint writer and gradient extraction.
std::vector<NamedParam> named_parameters(ModelBundle& m);
std::vector<NamedParam> generator_parameters(ModelBundle& m);      // F,G,H,T,R
std::vector<NamedParam> discriminator_parameters(ModelBundle& m);  // D
std::vector<NamedParam> domain_discriminator_parameters(ModelBundle& m);

// Records model applications on a tape. Parameters are registered as leaves
// on construction; the bundle must outlive the graph.
class ModelGraph {
 public:
  ModelGraph(Tape& tape, const ModelBundle& m);

  Tape& tape() { return *tape_; }
  const ModelBundle& bundle() const { return *model_; }
  NodeId param_node(const Tensor& t) const;

  NodeId encode_image(const Tensor& features);
  NodeId image_penultimate(const Tensor& features);
  NodeId encode_caption(std::span<const int> tokens);
  // logits for predicting tokens[1..] from z_x under teacher forcing
  std::vector<NodeId> teacher_logits(NodeId z_x, std::span<const int> tokens);
  NodeId transform_vc(NodeId z_x);
  NodeId transform_cv(NodeId z_y);
  NodeId pair_logit(NodeId z_x, NodeId z_y);
  NodeId pair_score(NodeId z_x, NodeId z_y);  // sigmoid of the logit
  NodeId concept_regress(NodeId penultimate);
  NodeId domain_logit_x(NodeId z);
  NodeId domain_logit_y(NodeId z);

 private:
  NodeId linear(const Linear& l, NodeId x);
  NodeId embed(const Tensor& table, int token);
  NodeId rnn_step(const RnnCell& cell, NodeId h, NodeId e);

  Tape* tape_;
  const ModelBundle* model_;
  std::unordered_map<const Tensor*, NodeId> nodes_;
};

// Inference fast path over raw tensors; matches the tape forward exactly.
namespace infer {

Tensor encode_image(const ModelBundle& m, const Tensor& features);
Tensor image_penultimate(const ModelBundle& m, const Tensor& features);
Tensor encode_caption(const ModelBundle& m, std::span<const int> tokens);
Tensor transform_vc(const ModelBundle& m, const Tensor& z_x);
Tensor transform_cv(const ModelBundle& m, const Tensor& z_y);
double discriminate(const ModelBundle& m, const Tensor& z_x,
                    const Tensor& z_y);  // sigmoid score in (0,1)
Tensor concept_regress(const ModelBundle& m, const Tensor& penultimate);

// Greedy or beam decode; returns the full token sequence including start
// and, unless the length budget ran out, the end token. Beam results are
// ranked by sum of token log-probabilities and never score below a
// narrower beam on the same input.
std::vector<int> decode(const ModelBundle& m, const Tensor& z_x,
                        const DecodeConfig& cfg);

// sum over steps of log p(token_t | prefix) under teacher forcing
double sequence_log_prob(const ModelBundle& m, const Tensor& z_x,
                         std::span<const int> tokens);

}  // namespace infer

}  // namespace capmatch
