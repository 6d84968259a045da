#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "capmatch/models.hpp"
#include "capmatch/pseudo.hpp"
#include "capmatch/toyworld.hpp"

namespace capmatch {

struct BleuReport {
  std::array<double, 4> precision{};  // modified n-gram precisions
  std::array<double, 4> bleu{};       // cumulative BLEU-1..4
  double brevity_penalty = 1.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;  // closest reference length
};

// Modified n-gram precision with clipping against the references and the
// usual brevity penalty; geometric mean over orders up to max_n. Tokens are
// compared verbatim, so strip start/end markers first.
BleuReport bleu(std::span<const int> hypothesis,
                std::span<const std::vector<int>> references, int max_n = 4);

// Corpus-style accumulation: clipped match and total counts pooled over
// sentences before the ratio is taken.
class CorpusBleu {
 public:
  explicit CorpusBleu(int max_n = 4);
  void add(std::span<const int> hypothesis,
           std::span<const std::vector<int>> references);
  BleuReport finalize() const;

 private:
  int max_n_;
  std::array<std::size_t, 4> matched_{};
  std::array<std::size_t, 4> total_{};
  std::size_t hyp_len_ = 0, ref_len_ = 0;
};

// recall@k over a pool of true pairs ranked by an arbitrary scorer;
// score(query, candidate) higher = more likely a pair.
using PairScoreFn = std::function<double(std::size_t, std::size_t)>;
std::vector<double> retrieval_recall_with(const PairScoreFn& score,
                                          std::size_t pool_size,
                                          std::span<const std::size_t> ks);

// Image queries ranking captions by the pair discriminator.
std::vector<double> retrieval_recall(const ModelBundle& m,
                                     std::span<const PairedExample> pairs,
                                     std::size_t pool_size,
                                     std::span<const std::size_t> ks);

// Fraction of assignments whose matched caption parses to exactly the
// anchor scene's attributes (and the mirror check for caption anchors).
// Unparseable captions count as mismatches.
double pseudo_accuracy(std::span<const PseudoAssignment> assignments,
                       std::span<const UnpairedImage> images,
                       std::span<const UnpairedCaption> captions);

// Exact expected accuracy of a uniformly random assignment over the two
// unpaired sets, computed by counting attribute-signature collisions.
double random_match_baseline(std::span<const UnpairedImage> images,
                             std::span<const UnpairedCaption> captions);

}  // namespace capmatch
