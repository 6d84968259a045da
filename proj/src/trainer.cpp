#include "capmatch/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "capmatch/checkpoint.hpp"
#include "capmatch/config.hpp"

namespace capmatch {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("train_step: non-finite ") + term +
                             " loss (" + std::to_string(v) + ")");
}

std::string caption_words(std::span<const int> tokens) {
  const Vocabulary& v = Vocabulary::instance();
  std::string out;
  for (int t : content_tokens(tokens)) {
    if (!out.empty()) out += ' ';
    out += v.word(t);
  }
  return out;
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "paired-only") return Variant::kPairedOnly;
  if (s == "ver1") return Variant::kVer1;
  if (s == "ver2") return Variant::kVer2;
  if (s == "final") return Variant::kFinal;
  if (s == "final-concept") return Variant::kFinalConcept;
  if (s == "cyclegan") return Variant::kCycleGan;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kPairedOnly: return "paired-only";
    case Variant::kVer1: return "ver1";
    case Variant::kVer2: return "ver2";
    case Variant::kFinal: return "final";
    case Variant::kFinalConcept: return "final-concept";
    case Variant::kCycleGan: return "cyclegan";
  }
  throw std::logic_error("bad variant");
}

VariantFlags flags_for(Variant v) {
  VariantFlags f;
  switch (v) {
    case Variant::kPairedOnly:
    case Variant::kCycleGan:
      break;
    case Variant::kVer1:
      f.gan = true;
      break;
    case Variant::kVer2:
      f.gan = f.pseudo = f.triplet = true;
      break;
    case Variant::kFinal:
      f.gan = f.pseudo = f.triplet = f.confidence = true;
      break;
    case Variant::kFinalConcept:
      f.gan = f.pseudo = f.triplet = f.confidence = f.concept_transfer = true;
      break;
  }
  return f;
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {
      Variant::kPairedOnly, Variant::kVer1,         Variant::kVer2,
      Variant::kFinal,      Variant::kFinalConcept, Variant::kCycleGan};
  return v;
}

void ExperimentConfig::validate() const {
  if (batch_size < 1)
    throw std::invalid_argument("config: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (total < 1) throw std::invalid_argument("config: total must be >= 1");
  if (paired_fraction <= 0.0 || paired_fraction > 1.0)
    throw std::invalid_argument("config: paired_fraction outside (0,1]");
  if (pool_fraction <= 0.0 || pool_fraction > 1.0)
    throw std::invalid_argument("config: pool_fraction outside (0,1]");
  if (pretrain_steps < 0)
    throw std::invalid_argument("config: pretrain_steps must be >= 0");
  if (clip_norm <= 0.0)
    throw std::invalid_argument("config: clip_norm must be positive");
  if (beam_width < 1)
    throw std::invalid_argument("config: beam_width must be >= 1");
  weights.validate();
}

std::string MetricsLog::to_csv() const {
  std::string out =
      "epoch,loss_cap,loss_U,loss_reg,loss_triplet,loss_concept,bleu1,bleu2,"
      "bleu3,bleu4,recall_at_1,recall_at_5,pseudo_acc,disc_evals\n";
  for (const EpochRow& r : rows) {
    out += std::to_string(r.epoch);
    for (double v : {r.loss_cap, r.loss_u, r.loss_reg, r.loss_triplet,
                     r.loss_concept, r.bleu1, r.bleu2, r.bleu3, r.bleu4,
                     r.recall_at_1, r.recall_at_5, r.pseudo_acc}) {
      out += ',';
      out += format_double(v);
    }
    out += ',';
    out += std::to_string(r.disc_evals);
    out += '\n';
  }
  return out;
}

const EpochRow& MetricsLog::final_epoch() const {
  if (rows.empty()) throw std::logic_error("MetricsLog: no rows");
  return rows.back();
}

Trainer::Trainer(const ExperimentConfig& cfg)
    : cfg_(cfg),
      flags_(flags_for(cfg.variant)),
      batch_rng_(Rng::stream(cfg.seed, "batches")),
      pool_rng_(Rng::stream(cfg.seed, "pools")),
      negative_rng_(Rng::stream(cfg.seed, "negatives")),
      pretrain_rng_(Rng::stream(cfg.seed, "pretrain")),
      disc_rng_(Rng::stream(cfg.seed, "disc-batch")) {
  cfg_.validate();
  SplitOptions opts;
  opts.noise_std = cfg_.noise_std;
  opts.novel_words = cfg_.novel_words;
  opts.domain_shift = cfg_.domain_shift;
  Rng data_rng = Rng::stream(cfg_.seed, "data");
  splits_ = make_splits(cfg_.total, cfg_.paired_fraction, opts, data_rng);
  Rng eval_rng = Rng::stream(cfg_.seed, "eval");
  eval_pairs_ = make_eval_pairs(cfg_.eval_size, cfg_.noise_std, eval_rng);

  paired_concepts_.reserve(splits_.paired.size());
  for (const PairedExample& ex : splits_.paired)
    paired_concepts_.push_back(concept_of(ex.scene));
  unpaired_image_concepts_.reserve(splits_.unpaired_images.size());
  for (const UnpairedImage& im : splits_.unpaired_images)
    unpaired_image_concepts_.push_back(concept_of(im.scene));

  Rng init_rng = Rng::stream(cfg_.seed, "init");
  model_ = ModelBundle::init(cfg_.model, init_rng);
  gen_adam_ = AdamState(generator_parameters(model_), cfg_.adam);
  disc_adam_ = AdamState(discriminator_parameters(model_), cfg_.adam);
  domain_adam_ = AdamState(domain_discriminator_parameters(model_), cfg_.adam);
}

int Trainer::steps_per_epoch() const {
  return static_cast<int>((cfg_.total + cfg_.batch_size - 1) /
                          cfg_.batch_size);
}

Trainer::TrainBatch Trainer::compose_batch() {
  // Each loss term gets a full-size sample of its own dataset, the way
  // parallel data loaders would feed the summed objective: batch_size
  // paired draws plus batch_size/2 from each unpaired split. Sizing the
  // paired part proportionally to the tiny paired set starves the
  // supervised and alignment terms of all but one example per step.
  TrainBatch batch;
  const std::size_t np = splits_.paired.size();
  const std::size_t nx = splits_.unpaired_images.size();
  const std::size_t ny = splits_.unpaired_captions.size();
  const std::size_t b = cfg_.batch_size;
  for (std::size_t i = 0; i < b; ++i)
    batch.paired.push_back(batch_rng_.uniform_index(np));
  if (cfg_.variant != Variant::kPairedOnly) {
    for (std::size_t i = 0; nx > 0 && i < b / 2; ++i)
      batch.ux.push_back(batch_rng_.uniform_index(nx));
    for (std::size_t i = 0; ny > 0 && i < b / 2; ++i)
      batch.uy.push_back(batch_rng_.uniform_index(ny));
  }
  return batch;
}

BatchView Trainer::base_view(const TrainBatch& batch) const {
  BatchView view;
  for (std::size_t id : batch.paired)
    view.paired.push_back({&splits_.paired[id].features,
                           &splits_.paired[id].caption.tokens});
  for (std::size_t id : batch.ux)
    view.unpaired_features.push_back(&splits_.unpaired_images[id].features);
  for (std::size_t id : batch.uy)
    view.unpaired_tokens.push_back(
        &splits_.unpaired_captions[id].caption.tokens);
  // the adversarial marginals fall back to paired samples when a split has
  // no unpaired data (paired_fraction = 1)
  if (view.unpaired_features.empty())
    for (std::size_t id : batch.paired)
      view.unpaired_features.push_back(&splits_.paired[id].features);
  if (view.unpaired_tokens.empty())
    for (std::size_t id : batch.paired)
      view.unpaired_tokens.push_back(&splits_.paired[id].caption.tokens);
  return view;
}

void Trainer::apply_gradients(Tape& tape, ModelGraph& graph,
                              std::vector<NamedParam> params,
                              AdamState& state) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const NamedParam& p : params)
    grads.push_back(tape.grad(graph.param_node(*p.tensor)));
  clip_global_norm(grads, cfg_.clip_norm);
  state.step(params, grads);
}

void Trainer::discriminator_step(const TrainBatch& batch, StepLosses& losses) {
  Tape tape;
  ModelGraph graph(tape, model_);
  BatchView view = base_view(batch);
  // densify the real-pair expectation beyond the mixed batch's few positives
  if (view.paired.size() < cfg_.disc_real_samples) {
    view.paired.clear();
    const std::size_t np = splits_.paired.size();
    for (std::size_t i = 0; i < std::min(np, cfg_.disc_real_samples); ++i)
      view.paired.push_back({&splits_.paired[i].features,
                             &splits_.paired[i].caption.tokens});
    while (view.paired.size() < cfg_.disc_real_samples) {
      const std::size_t id = disc_rng_.uniform_index(np);
      view.paired.push_back({&splits_.paired[id].features,
                             &splits_.paired[id].caption.tokens});
    }
  }
  NodeId objective;
  if (cfg_.variant == Variant::kCycleGan) {
    CycleGanNodes nodes = cyclegan_loss(graph, view, cfg_.weights, true);
    objective = nodes.disc_objective;
  } else {
    GanNodes nodes = gan_utility(graph, view.paired, view.unpaired_features,
                                 view.unpaired_tokens, cfg_.weights);
    objective = tape.add(
        nodes.utility,
        tape.mul_scalar(pair_mismatch_term(graph, view.paired), 2.0));
  }
  check_finite(tape.scalar_value(objective), "discriminator");
  // ascend the utility
  tape.backward(tape.mul_scalar(objective, -1.0));
  if (cfg_.variant == Variant::kCycleGan)
    apply_gradients(tape, graph, domain_discriminator_parameters(model_),
                    domain_adam_);
  else
    apply_gradients(tape, graph, discriminator_parameters(model_),
                    disc_adam_);
  losses.utility = tape.scalar_value(objective);
}

void Trainer::refresh_pseudo_labels(const TrainBatch& batch, BatchView& view) {
  const std::size_t nx = splits_.unpaired_images.size();
  const std::size_t ny = splits_.unpaired_captions.size();
  if (nx == 0 || ny == 0) return;
  const SearchPool image_pool = subsample_pool(nx, cfg_.pool_fraction,
                                               pool_rng_);
  const SearchPool caption_pool = subsample_pool(ny, cfg_.pool_fraction,
                                                 pool_rng_);
  std::uint64_t evals = 0;
  std::vector<PseudoAssignment> assignments = batch_assign(
      model_, batch.ux, splits_.unpaired_images, batch.uy,
      splits_.unpaired_captions, image_pool, caption_pool, evals);
  disc_evals_epoch_ += evals;
  disc_evals_total_ += evals;
  for (const PseudoAssignment& a : assignments) {
    const double alpha = flags_.confidence ? a.confidence : 1.0;
    if (a.direction == RetrievalDirection::kImageToCaption)
      view.pseudo_image_anchored.push_back(
          {&splits_.unpaired_images[a.anchor_id].features,
           &splits_.unpaired_captions[a.matched_id].caption.tokens, alpha});
    else
      view.pseudo_caption_anchored.push_back(
          {&splits_.unpaired_images[a.matched_id].features,
           &splits_.unpaired_captions[a.anchor_id].caption.tokens, alpha});
    epoch_assignments_.push_back(a);
  }
}

void Trainer::generator_step(const TrainBatch& batch, BatchView& view,
                             StepLosses& losses) {
  // triplet negatives: one random unpaired image and caption per positive
  std::vector<TripletItem> triplets;
  if (flags_.triplet && !splits_.unpaired_images.empty() &&
      !splits_.unpaired_captions.empty()) {
    // a subsample keeps the three extra decoder passes per positive cheap
    const std::size_t count = std::min<std::size_t>(32, view.paired.size());
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t xi =
          negative_rng_.uniform_index(splits_.unpaired_images.size());
      const std::size_t yi =
          negative_rng_.uniform_index(splits_.unpaired_captions.size());
      triplets.push_back(
          {view.paired[i], &splits_.unpaired_images[xi].features,
           &splits_.unpaired_captions[yi].caption.tokens});
    }
  }
  if (flags_.concept_transfer) {
    for (std::size_t id : batch.paired)
      view.concepts.push_back(
          {&splits_.paired[id].features, &paired_concepts_[id]});
    for (std::size_t id : batch.ux)
      view.concepts.push_back({&splits_.unpaired_images[id].features,
                               &unpaired_image_concepts_[id]});
  }

  // triplet flows through its own tape so its (unbounded) gradient can be
  // clipped on its own before joining the rest
  VariantFlags main_flags = flags_;
  main_flags.triplet = false;

  Tape tape;
  ModelGraph graph(tape, model_);
  NodeId root;
  if (cfg_.variant == Variant::kCycleGan) {
    CycleGanNodes nodes = cyclegan_loss(graph, view, cfg_.weights, true);
    root = nodes.trainer_total;
    losses.cap = tape.scalar_value(nodes.supervised);
    losses.utility = tape.scalar_value(nodes.adversarial);
    losses.reg = tape.scalar_value(nodes.cycle);
    losses.triplet = 0.0;
    losses.concept_term = 0.0;
  } else {
    TotalLossNodes nodes = total_loss(graph, view, cfg_.weights, main_flags);
    root = nodes.trainer_total;
    losses.cap = tape.scalar_value(nodes.cap);
    losses.utility = tape.scalar_value(nodes.utility);
    losses.reg = tape.scalar_value(nodes.reg);
    losses.concept_term = tape.scalar_value(nodes.concept_term);
  }
  losses.total = tape.scalar_value(root);
  check_finite(losses.cap, "captioning");
  check_finite(losses.utility, "utility");
  check_finite(losses.reg, "regression");
  check_finite(losses.concept_term, "concept");
  tape.backward(root);

  const auto params = generator_parameters(model_);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const NamedParam& p : params)
    grads.push_back(tape.grad(graph.param_node(*p.tensor)));

  if (!triplets.empty() && cfg_.weights.lambda_2 > 0.0) {
    Tape trip_tape;
    ModelGraph trip_graph(trip_tape, model_);
    NodeId trip = trip_tape.mul_scalar(triplet_loss(trip_graph, triplets),
                                       cfg_.weights.lambda_2);
    losses.triplet = trip_tape.scalar_value(trip) / cfg_.weights.lambda_2;
    check_finite(losses.triplet, "triplet");
    losses.total += trip_tape.scalar_value(trip);
    trip_tape.backward(trip);
    std::vector<Tensor> trip_grads;
    trip_grads.reserve(params.size());
    for (const NamedParam& p : params)
      trip_grads.push_back(trip_tape.grad(trip_graph.param_node(*p.tensor)));
    clip_global_norm(trip_grads, cfg_.triplet_clip);
    for (std::size_t i = 0; i < grads.size(); ++i)
      add_inplace(grads[i], trip_grads[i]);
  }

  check_finite(losses.total, "total");
  clip_global_norm(grads, cfg_.clip_norm);
  gen_adam_.step(params, grads);
}

StepLosses Trainer::train_step() {
  const TrainBatch batch = compose_batch();
  StepLosses losses;
  if (flags_.gan || cfg_.variant == Variant::kCycleGan)
    discriminator_step(batch, losses);
  BatchView view = base_view(batch);
  if (flags_.pseudo) refresh_pseudo_labels(batch, view);
  generator_step(batch, view, losses);
  return losses;
}

void Trainer::pretrain_discriminator(int steps) {
  if (cfg_.variant == Variant::kPairedOnly) return;
  const std::size_t np = splits_.paired.size();
  for (int s = 0; s < steps; ++s) {
    TrainBatch batch;
    for (std::size_t i = 0; i < cfg_.batch_size; ++i)
      batch.paired.push_back(pretrain_rng_.uniform_index(np));
    // paired samples stand in for both marginals at this stage
    BatchView view;
    for (std::size_t id : batch.paired) {
      view.paired.push_back({&splits_.paired[id].features,
                             &splits_.paired[id].caption.tokens});
      view.unpaired_features.push_back(&splits_.paired[id].features);
      view.unpaired_tokens.push_back(&splits_.paired[id].caption.tokens);
    }
    if (cfg_.variant == Variant::kCycleGan) {
      {
        Tape tape;
        ModelGraph graph(tape, model_);
        CycleGanNodes nodes = cyclegan_loss(graph, view, cfg_.weights, false);
        check_finite(tape.scalar_value(nodes.disc_objective), "pretrain");
        tape.backward(tape.mul_scalar(nodes.disc_objective, -1.0));
        apply_gradients(tape, graph, domain_discriminator_parameters(model_),
                        domain_adam_);
      }
      {
        // same captioner warm-up as the pair-discriminator variants
        Tape tape;
        ModelGraph graph(tape, model_);
        CycleGanNodes nodes = cyclegan_loss(graph, view, cfg_.weights, true);
        tape.backward(nodes.trainer_total);
        apply_gradients(tape, graph, generator_parameters(model_), gen_adam_);
      }
      continue;
    }
    {
      Tape tape;
      ModelGraph graph(tape, model_);
      GanNodes nodes = gan_utility(graph, view.paired, view.unpaired_features,
                                   view.unpaired_tokens, cfg_.weights);
      NodeId objective = tape.add(
          nodes.utility,
          tape.mul_scalar(pair_mismatch_term(graph, view.paired), 2.0));
      check_finite(tape.scalar_value(objective), "pretrain");
      tape.backward(tape.mul_scalar(objective, -1.0));
      apply_gradients(tape, graph, discriminator_parameters(model_),
                      disc_adam_);
    }
    {
      // captioner warm-up plus encoder/transformer alignment; structured
      // latents are what make the discriminator's pair judgment learnable
      Tape tape;
      ModelGraph graph(tape, model_);
      GanNodes nodes = gan_utility(graph, view.paired, view.unpaired_features,
                                   view.unpaired_tokens, cfg_.weights);
      NodeId objective = tape.add(
          supervised_ce(graph, view.paired),
          tape.mul_scalar(tape.add(nodes.gen_surrogate, nodes.reg),
                          cfg_.weights.lambda_1));
      tape.backward(objective);
      apply_gradients(tape, graph, generator_parameters(model_), gen_adam_);
    }
  }
}

EpochRow Trainer::evaluate(int epoch_index, const StepLosses& mean_losses) {
  EpochRow row;
  row.epoch = epoch_index;
  row.loss_cap = mean_losses.cap;
  row.loss_u = mean_losses.utility;
  row.loss_reg = mean_losses.reg;
  row.loss_triplet = mean_losses.triplet;
  row.loss_concept = mean_losses.concept_term;

  DecodeConfig dc;
  dc.mode = cfg_.beam_width > 1 ? DecodeConfig::Mode::kBeam
                                : DecodeConfig::Mode::kGreedy;
  dc.beam_width = cfg_.beam_width;
  dc.max_length = kMaxCaptionLen;
  CorpusBleu corpus;
  for (const PairedExample& ex : eval_pairs_) {
    const Tensor z = infer::encode_image(model_, ex.features);
    const std::vector<int> hyp = infer::decode(model_, z, dc);
    const std::vector<std::vector<int>> refs = {
        content_tokens(ex.caption.tokens)};
    corpus.add(content_tokens(hyp), refs);
  }
  const BleuReport rep = corpus.finalize();
  row.bleu1 = rep.bleu[0];
  row.bleu2 = rep.bleu[1];
  row.bleu3 = rep.bleu[2];
  row.bleu4 = rep.bleu[3];

  const std::size_t pool = std::min(cfg_.retrieval_pool, eval_pairs_.size());
  if (pool > 0) {
    const std::size_t ks[] = {1, 5};
    const std::vector<double> recall =
        retrieval_recall(model_, eval_pairs_, pool, ks);
    row.recall_at_1 = recall[0];
    row.recall_at_5 = recall[1];
  }

  row.pseudo_acc = pseudo_accuracy(epoch_assignments_, splits_.unpaired_images,
                                   splits_.unpaired_captions);
  row.disc_evals = disc_evals_epoch_;
  return row;
}

EpochRow Trainer::run_epoch(int epoch_index) {
  epoch_assignments_.clear();
  disc_evals_epoch_ = 0;
  StepLosses sums;
  const int steps = steps_per_epoch();
  for (int s = 0; s < steps; ++s) {
    const StepLosses l = train_step();
    sums.cap += l.cap;
    sums.utility += l.utility;
    sums.reg += l.reg;
    sums.triplet += l.triplet;
    sums.concept_term += l.concept_term;
    sums.total += l.total;
  }
  const double inv = 1.0 / static_cast<double>(std::max(1, steps));
  sums.cap *= inv;
  sums.utility *= inv;
  sums.reg *= inv;
  sums.triplet *= inv;
  sums.concept_term *= inv;
  sums.total *= inv;
  return evaluate(epoch_index, sums);
}

void Trainer::write_samples(const std::filesystem::path& path) const {
  std::ofstream out(path);
  DecodeConfig dc;
  dc.beam_width = cfg_.beam_width;
  dc.max_length = kMaxCaptionLen;
  const std::size_t count = std::min<std::size_t>(20, eval_pairs_.size());
  for (std::size_t i = 0; i < count; ++i) {
    const PairedExample& ex = eval_pairs_[i];
    const Tensor z = infer::encode_image(model_, ex.features);
    const std::vector<int> hyp = infer::decode(model_, z, dc);
    out << "ref: " << caption_words(ex.caption.tokens) << '\n'
        << "hyp: " << caption_words(hyp) << "\n\n";
  }
}

MetricsLog Trainer::run(const std::filesystem::path& out_dir) {
  const bool write = !out_dir.empty();
  if (write) {
    std::filesystem::create_directories(out_dir);
    std::ofstream manifest(out_dir / "manifest.txt");
    manifest << "capmatch 1.0.0\n";
    manifest << config_to_string(cfg_);
    manifest << "outputs: metrics.csv checkpoint.bin samples.txt";
    if (cfg_.dump_assignments) manifest << " assignments.csv";
    manifest << '\n';
  }

  pretrain_discriminator(cfg_.pretrain_steps);

  MetricsLog log;
  for (int e = 1; e <= cfg_.epochs; ++e) {
    log.rows.push_back(run_epoch(e));
    if (write && cfg_.dump_assignments) {
      std::ofstream out(out_dir /
                        ("assignments_epoch" + std::to_string(e) + ".csv"));
      dump_assignments(epoch_assignments_, out);
    }
  }

  if (write) {
    std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
    csv << log.to_csv();
    save_checkpoint(model_, out_dir / "checkpoint.bin");
    write_samples(out_dir / "samples.txt");
  }
  return log;
}

MetricsLog run_experiment(const ExperimentConfig& cfg,
                          const std::filesystem::path& out_dir) {
  Trainer trainer(cfg);
  return trainer.run(out_dir);
}

void TrainerProbe::discriminator_step(Trainer& t) {
  const Trainer::TrainBatch batch = t.compose_batch();
  StepLosses losses;
  t.discriminator_step(batch, losses);
}

void TrainerProbe::generator_step(Trainer& t) {
  const Trainer::TrainBatch batch = t.compose_batch();
  BatchView view = t.base_view(batch);
  if (t.flags_.pseudo) t.refresh_pseudo_labels(batch, view);
  StepLosses losses;
  t.generator_step(batch, view, losses);
}

double AblationResult::mean_bleu4(Variant v) const {
  double sum = 0.0;
  int count = 0;
  for (const AblationRun& r : runs)
    if (r.variant == v) {
      sum += r.final_epoch.bleu4;
      ++count;
    }
  return count ? sum / count : 0.0;
}

double AblationResult::mean_pseudo_acc(Variant v) const {
  double sum = 0.0;
  int count = 0;
  for (const AblationRun& r : runs)
    if (r.variant == v) {
      sum += r.final_epoch.pseudo_acc;
      ++count;
    }
  return count ? sum / count : 0.0;
}

bool AblationResult::ladder_ok() const {
  const double fin = mean_bleu4(Variant::kFinal);
  const double v2 = mean_bleu4(Variant::kVer2);
  const double v1 = mean_bleu4(Variant::kVer1);
  const double po = mean_bleu4(Variant::kPairedOnly);
  const double cg = mean_bleu4(Variant::kCycleGan);
  return fin >= v2 && v2 >= v1 && v1 >= po && fin >= cg;
}

std::string AblationResult::to_csv() const {
  std::string out =
      "variant,seed,bleu1,bleu2,bleu3,bleu4,recall_at_1,recall_at_5,"
      "pseudo_acc\n";
  auto append_row = [&](const std::string& name, const std::string& seed,
                        const EpochRow& r) {
    out += name + ',' + seed;
    for (double v : {r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.recall_at_1,
                     r.recall_at_5, r.pseudo_acc}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  };
  for (const AblationRun& r : runs)
    append_row(to_string(r.variant), std::to_string(r.seed), r.final_epoch);
  for (Variant v : all_variants()) {
    EpochRow mean;
    int count = 0;
    for (const AblationRun& r : runs)
      if (r.variant == v) {
        mean.bleu1 += r.final_epoch.bleu1;
        mean.bleu2 += r.final_epoch.bleu2;
        mean.bleu3 += r.final_epoch.bleu3;
        mean.bleu4 += r.final_epoch.bleu4;
        mean.recall_at_1 += r.final_epoch.recall_at_1;
        mean.recall_at_5 += r.final_epoch.recall_at_5;
        mean.pseudo_acc += r.final_epoch.pseudo_acc;
        ++count;
      }
    if (!count) continue;
    const double inv = 1.0 / count;
    mean.bleu1 *= inv;
    mean.bleu2 *= inv;
    mean.bleu3 *= inv;
    mean.bleu4 *= inv;
    mean.recall_at_1 *= inv;
    mean.recall_at_5 *= inv;
    mean.pseudo_acc *= inv;
    append_row(to_string(v), "mean", mean);
  }
  return out;
}

std::string AblationResult::ordering_summary() const {
  const double fin = mean_bleu4(Variant::kFinal);
  const double v2 = mean_bleu4(Variant::kVer2);
  const double v1 = mean_bleu4(Variant::kVer1);
  const double po = mean_bleu4(Variant::kPairedOnly);
  const double cg = mean_bleu4(Variant::kCycleGan);
  char buf[256];
  std::string out;
  auto line = [&](const char* name, double lhs, double rhs) {
    std::snprintf(buf, sizeof(buf), "%-28s %.4f >= %.4f margin %+.4f %s\n",
                  name, lhs, rhs, lhs - rhs, lhs >= rhs ? "ok" : "FAIL");
    out += buf;
  };
  line("final >= ver2", fin, v2);
  line("ver2 >= ver1", v2, v1);
  line("ver1 >= paired-only", v1, po);
  line("final >= cyclegan", fin, cg);
  return out;
}

AblationResult run_ablation(const ExperimentConfig& base, int seeds,
                            const std::filesystem::path& out_dir) {
  if (seeds < 1)
    throw std::invalid_argument("run_ablation: need at least one seed");
  AblationResult result;
  for (int s = 0; s < seeds; ++s) {
    for (Variant v : all_variants()) {
      ExperimentConfig cfg = base;
      cfg.variant = v;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      const MetricsLog log = run_experiment(cfg);
      result.runs.push_back({v, cfg.seed, log.final_epoch()});
    }
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / "ablation.csv", std::ios::binary);
    csv << result.to_csv();
    std::ofstream summary(out_dir / "ordering.txt");
    summary << result.ordering_summary();
  }
  return result;
}

}  // namespace capmatch
