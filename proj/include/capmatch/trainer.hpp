#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capmatch/adam.hpp"
#include "capmatch/losses.hpp"
#include "capmatch/metrics.hpp"
#include "capmatch/models.hpp"
#include "capmatch/pseudo.hpp"
#include "capmatch/toyworld.hpp"

namespace capmatch {

enum class Variant {
  kPairedOnly,
  kVer1,         // + adversarial pair matching
  kVer2,         // + pseudo-labels (alpha = 1) and triplet
  kFinal,        // + confidence re-weighting
  kFinalConcept, // + concept distillation
  kCycleGan,     // feature-space translation baseline
};

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
VariantFlags flags_for(Variant v);
const std::vector<Variant>& all_variants();

struct ExperimentConfig {
  Variant variant = Variant::kFinal;
  std::uint64_t seed = 42;

  // data
  std::size_t total = 10000;
  double paired_fraction = 0.01;
  double noise_std = 0.1;
  bool novel_words = false;
  bool domain_shift = false;
  std::size_t eval_size = 500;

  // optimization
  int epochs = 18;
  std::size_t batch_size = 100;
  int pretrain_steps = 200;
  double clip_norm = 5.0;
  // The likelihood-ratio triplet is unbounded below (nothing stops the
  // decoder from suppressing negative captions forever), so its gradient
  // contribution is clipped separately before joining the others.
  double triplet_clip = 1.0;
  // paired draws backing the discriminator step's real-pair expectation;
  // the mixed batch alone carries too few positives at 1% pairing
  std::size_t disc_real_samples = 100;
  AdamConfig adam;
  LossWeights weights;

  // retrieval and evaluation
  double pool_fraction = 0.01;
  std::size_t retrieval_pool = 100;
  int beam_width = 3;
  bool dump_assignments = false;

  ModelConfig model;
  int ablation_seeds = 5;  // used by the ablation runner

  void validate() const;
};

struct StepLosses {
  double cap = 0.0, utility = 0.0, reg = 0.0, triplet = 0.0, concept_term = 0.0;
  double total = 0.0;
};

struct EpochRow {
  int epoch = 0;
  double loss_cap = 0.0, loss_u = 0.0, loss_reg = 0.0;
  double loss_triplet = 0.0, loss_concept = 0.0;
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
  double recall_at_1 = 0.0, recall_at_5 = 0.0;
  double pseudo_acc = 0.0;
  std::uint64_t disc_evals = 0;
};

struct MetricsLog {
  std::vector<EpochRow> rows;
  std::string to_csv() const;
  const EpochRow& final_epoch() const;
};

// Alternating minimax training: one discriminator ascent then one generator
// descent per step, pseudo-labels refreshed from per-batch pools, metrics
// once per epoch. Deterministic per (config, seed).
class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& cfg);

  // Adversarial warm-up on paired data: discriminator ascent plus encoder and
  // transformer alignment, before any pseudo-labels are trusted.
  void pretrain_discriminator(int steps);

  StepLosses train_step();
  EpochRow run_epoch(int epoch_index);  // steps + evaluation row
  MetricsLog run(const std::filesystem::path& out_dir = {});

  ModelBundle& model() { return model_; }
  const DatasetSplits& data() const { return splits_; }
  const std::vector<PairedExample>& eval_pairs() const { return eval_pairs_; }
  const ExperimentConfig& config() const { return cfg_; }
  std::uint64_t total_disc_evals() const { return disc_evals_total_; }
  int steps_per_epoch() const;

 private:
  struct TrainBatch {
    std::vector<std::size_t> paired, ux, uy;
  };

  TrainBatch compose_batch();
  void discriminator_step(const TrainBatch& batch, StepLosses& losses);
  void refresh_pseudo_labels(const TrainBatch& batch, BatchView& view);
  void generator_step(const TrainBatch& batch, BatchView& view,
                      StepLosses& losses);
  BatchView base_view(const TrainBatch& batch) const;
  void apply_gradients(Tape& tape, ModelGraph& graph,
                       std::vector<NamedParam> params, AdamState& state);
  EpochRow evaluate(int epoch_index, const StepLosses& mean_losses);
  void write_samples(const std::filesystem::path& path) const;

  ExperimentConfig cfg_;
  VariantFlags flags_;
  DatasetSplits splits_;
  std::vector<PairedExample> eval_pairs_;
  std::vector<Tensor> paired_concepts_, unpaired_image_concepts_;
  ModelBundle model_;
  AdamState gen_adam_, disc_adam_, domain_adam_;
  Rng batch_rng_, pool_rng_, negative_rng_, pretrain_rng_, disc_rng_;
  std::vector<PseudoAssignment> epoch_assignments_;
  std::uint64_t disc_evals_epoch_ = 0, disc_evals_total_ = 0;

  friend struct TrainerProbe;
};

// Test seam: runs the two halves of a training step separately so the
// alternation contract can be checked by parameter hashing.
struct TrainerProbe {
  static void discriminator_step(Trainer& t);
  static void generator_step(Trainer& t);
};

MetricsLog run_experiment(const ExperimentConfig& cfg,
                          const std::filesystem::path& out_dir = {});

struct AblationRun {
  Variant variant;
  std::uint64_t seed;
  EpochRow final_epoch;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  double mean_bleu4(Variant v) const;
  double mean_pseudo_acc(Variant v) const;
  // final >= ver2 >= ver1 >= paired-only and final >= cyclegan
  bool ladder_ok() const;
  std::string to_csv() const;  // per-run rows then per-variant mean rows
  std::string ordering_summary() const;
};

// All six variants on identical seeds (base.seed + 0..seeds-1); each seed
// reuses the same dataset across variants.
AblationResult run_ablation(const ExperimentConfig& base, int seeds,
                            const std::filesystem::path& out_dir = {});

}  // namespace capmatch
