#include "capmatch/pseudo.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace capmatch {

SearchPool subsample_pool(std::size_t unpaired_size, double fraction,
                          Rng& rng) {
  if (unpaired_size == 0)
    throw std::invalid_argument("subsample_pool: empty unpaired set");
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("subsample_pool: fraction outside (0,1]");
  const std::size_t size = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(fraction * static_cast<double>(unpaired_size))));
  SearchPool pool;
  pool.fraction = fraction;
  pool.candidates = rng.sample_without_replacement(unpaired_size, size);
  return pool;
}

std::size_t argmax_lowest_id(std::span<const double> scores) {
  if (scores.empty())
    throw std::invalid_argument("argmax_lowest_id: empty scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

PoolScorer::PoolScorer(const ModelBundle& m, const SearchPool& pool,
                       std::span<const UnpairedCaption> captions)
    : model_(&m), pool_(&pool),
      direction_(RetrievalDirection::kImageToCaption) {
  candidate_latents_.reserve(pool.candidates.size());
  for (std::size_t id : pool.candidates) {
    if (id >= captions.size())
      throw std::out_of_range("PoolScorer: candidate id outside caption set");
    candidate_latents_.push_back(
        infer::encode_caption(m, captions[id].caption.tokens));
  }
}

PoolScorer::PoolScorer(const ModelBundle& m, const SearchPool& pool,
                       std::span<const UnpairedImage> images)
    : model_(&m), pool_(&pool),
      direction_(RetrievalDirection::kCaptionToImage) {
  candidate_latents_.reserve(pool.candidates.size());
  for (std::size_t id : pool.candidates) {
    if (id >= images.size())
      throw std::out_of_range("PoolScorer: candidate id outside image set");
    candidate_latents_.push_back(infer::encode_image(m, images[id].features));
  }
}

PseudoAssignment PoolScorer::assign(const Tensor& anchor_latent,
                                    std::size_t anchor_id,
                                    std::uint64_t& disc_evals) const {
  if (candidate_latents_.empty())
    throw std::invalid_argument("PoolScorer: empty pool");
  double best_score = -1.0;
  std::size_t best_pos = 0;
  for (std::size_t pos = 0; pos < candidate_latents_.size(); ++pos) {
    // candidates are scanned in ascending id order, so a strict improvement
    // test breaks ties toward the lowest id
    const double score =
        direction_ == RetrievalDirection::kImageToCaption
            ? infer::discriminate(*model_, anchor_latent,
                                  candidate_latents_[pos])
            : infer::discriminate(*model_, candidate_latents_[pos],
                                  anchor_latent);
    ++disc_evals;
    if (score > best_score) {
      best_score = score;
      best_pos = pos;
    }
  }
  return PseudoAssignment{anchor_id, pool_->candidates[best_pos], best_score,
                          direction_};
}

PseudoAssignment assign_caption(const ModelBundle& m,
                                const Tensor& image_features,
                                std::size_t anchor_id, const SearchPool& pool,
                                std::span<const UnpairedCaption> captions,
                                std::uint64_t& disc_evals) {
  PoolScorer scorer(m, pool, captions);
  return scorer.assign(infer::encode_image(m, image_features), anchor_id,
                       disc_evals);
}

PseudoAssignment assign_image(const ModelBundle& m,
                              std::span<const int> caption_tokens,
                              std::size_t anchor_id, const SearchPool& pool,
                              std::span<const UnpairedImage> images,
                              std::uint64_t& disc_evals) {
  PoolScorer scorer(m, pool, images);
  return scorer.assign(infer::encode_caption(m, caption_tokens), anchor_id,
                       disc_evals);
}

std::vector<PseudoAssignment> batch_assign(
    const ModelBundle& m, std::span<const std::size_t> image_anchor_ids,
    std::span<const UnpairedImage> images,
    std::span<const std::size_t> caption_anchor_ids,
    std::span<const UnpairedCaption> captions, const SearchPool& image_pool,
    const SearchPool& caption_pool, std::uint64_t& disc_evals) {
  std::vector<PseudoAssignment> out;
  out.reserve(image_anchor_ids.size() + caption_anchor_ids.size());
  if (!image_anchor_ids.empty()) {
    PoolScorer caption_scorer(m, caption_pool, captions);
    for (std::size_t id : image_anchor_ids) {
      if (id >= images.size())
        throw std::out_of_range("batch_assign: image anchor outside set");
      out.push_back(caption_scorer.assign(
          infer::encode_image(m, images[id].features), id, disc_evals));
    }
  }
  if (!caption_anchor_ids.empty()) {
    PoolScorer image_scorer(m, image_pool, images);
    for (std::size_t id : caption_anchor_ids) {
      if (id >= captions.size())
        throw std::out_of_range("batch_assign: caption anchor outside set");
      out.push_back(image_scorer.assign(
          infer::encode_caption(m, captions[id].caption.tokens), id,
          disc_evals));
    }
  }
  return out;
}

void dump_assignments(std::span<const PseudoAssignment> assignments,
                      std::ostream& out) {
  out << "anchor_id,matched_id,confidence,direction\n";
  char buf[32];
  for (const PseudoAssignment& a : assignments) {
    std::snprintf(buf, sizeof(buf), "%.17g", a.confidence);
    out << a.anchor_id << ',' << a.matched_id << ',' << buf << ','
        << (a.direction == RetrievalDirection::kImageToCaption
                ? "image_to_caption"
                : "caption_to_image")
        << '\n';
  }
}

}  // namespace capmatch
