#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "capmatch/models.hpp"
#include "capmatch/rng.hpp"
#include "capmatch/toyworld.hpp"

namespace capmatch {

enum class RetrievalDirection { kImageToCaption, kCaptionToImage };

struct PseudoAssignment {
  std::size_t anchor_id;   // index into the anchor's unpaired set
  std::size_t matched_id;  // index into the counterpart unpaired set
  double confidence;       // the discriminator score of the returned pair
  RetrievalDirection direction;
};

struct SearchPool {
  std::vector<std::size_t> candidates;  // sorted ascending
  double fraction;
};

// Uniform sample without replacement of max(1, ceil(fraction * n))
// candidates; deterministic given the rng state.
SearchPool subsample_pool(std::size_t unpaired_size, double fraction,
                          Rng& rng);

// argmax with ties broken toward the lowest index; the scan order is the
// tie rule, exposed for property tests.
std::size_t argmax_lowest_id(std::span<const double> scores);

// Scores every pool candidate against one anchor latent and keeps the
// candidate-side encodings cached for the whole batch. Each call counts
// exactly pool-size discriminator evaluations into `disc_evals`.
class PoolScorer {
 public:
  PoolScorer(const ModelBundle& m, const SearchPool& pool,
             std::span<const UnpairedCaption> captions);
  PoolScorer(const ModelBundle& m, const SearchPool& pool,
             std::span<const UnpairedImage> images);

  PseudoAssignment assign(const Tensor& anchor_latent, std::size_t anchor_id,
                          std::uint64_t& disc_evals) const;

 private:
  const ModelBundle* model_;
  const SearchPool* pool_;
  RetrievalDirection direction_;
  std::vector<Tensor> candidate_latents_;
};

// Eqs. of the retrieval rule: the matched caption maximizes
// D(F(x), G(y)) over the pool, and vice versa for images.
PseudoAssignment assign_caption(const ModelBundle& m,
                                const Tensor& image_features,
                                std::size_t anchor_id, const SearchPool& pool,
                                std::span<const UnpairedCaption> captions,
                                std::uint64_t& disc_evals);
PseudoAssignment assign_image(const ModelBundle& m,
                              std::span<const int> caption_tokens,
                              std::size_t anchor_id, const SearchPool& pool,
                              std::span<const UnpairedImage> images,
                              std::uint64_t& disc_evals);

// Both directions for a batch of anchors, sharing one pool per direction.
// Discriminator evaluations total anchors x pool-size per direction.
std::vector<PseudoAssignment> batch_assign(
    const ModelBundle& m, std::span<const std::size_t> image_anchor_ids,
    std::span<const UnpairedImage> images,
    std::span<const std::size_t> caption_anchor_ids,
    std::span<const UnpairedCaption> captions, const SearchPool& image_pool,
    const SearchPool& caption_pool, std::uint64_t& disc_evals);

// CSV: anchor_id,matched_id,confidence,direction
void dump_assignments(std::span<const PseudoAssignment> assignments,
                      std::ostream& out);

}  // namespace capmatch
