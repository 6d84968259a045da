#include "capmatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace capmatch {

namespace {

using NGram = std::vector<int>;

void count_ngrams(std::span<const int> tokens, int n,
                  std::map<NGram, std::size_t>& counts) {
  if (tokens.size() < static_cast<std::size_t>(n)) return;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[NGram(tokens.begin() + i, tokens.begin() + i + n)];
}

// clipped matches and hypothesis total for one order
void clipped_counts(std::span<const int> hyp,
                    std::span<const std::vector<int>> refs, int n,
                    std::size_t& matched, std::size_t& total) {
  std::map<NGram, std::size_t> hyp_counts;
  count_ngrams(hyp, n, hyp_counts);
  std::map<NGram, std::size_t> ref_max;
  for (const std::vector<int>& r : refs) {
    std::map<NGram, std::size_t> rc;
    count_ngrams(r, n, rc);
    for (const auto& [g, c] : rc) ref_max[g] = std::max(ref_max[g], c);
  }
  matched = 0;
  total = 0;
  for (const auto& [g, c] : hyp_counts) {
    total += c;
    auto it = ref_max.find(g);
    if (it != ref_max.end()) matched += std::min(c, it->second);
  }
}

std::size_t closest_ref_length(std::size_t hyp_len,
                               std::span<const std::vector<int>> refs) {
  std::size_t best = refs.front().size();
  for (const std::vector<int>& r : refs) {
    const auto d = [&](std::size_t L) {
      return L > hyp_len ? L - hyp_len : hyp_len - L;
    };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best))
      best = r.size();
  }
  return best;
}

BleuReport finalize_counts(const std::array<std::size_t, 4>& matched,
                           const std::array<std::size_t, 4>& total,
                           std::size_t hyp_len, std::size_t ref_len,
                           int max_n) {
  BleuReport rep;
  rep.hypothesis_length = hyp_len;
  rep.reference_length = ref_len;
  rep.brevity_penalty =
      (hyp_len == 0)
          ? 0.0
          : (hyp_len >= ref_len
                 ? 1.0
                 : std::exp(1.0 - static_cast<double>(ref_len) /
                                      static_cast<double>(hyp_len)));
  for (int n = 0; n < max_n; ++n)
    rep.precision[n] =
        total[n] == 0 ? 0.0
                      : static_cast<double>(matched[n]) /
                            static_cast<double>(total[n]);
  for (int n = 0; n < max_n; ++n) {
    double log_sum = 0.0;
    bool zero = false;
    for (int k = 0; k <= n; ++k) {
      if (rep.precision[k] == 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(rep.precision[k]);
    }
    rep.bleu[n] = zero ? 0.0
                       : rep.brevity_penalty *
                             std::exp(log_sum / static_cast<double>(n + 1));
  }
  return rep;
}

void validate_bleu_args(std::span<const std::vector<int>> references,
                        int max_n) {
  if (max_n < 1 || max_n > 4)
    throw std::invalid_argument("bleu: max_n must be in [1,4]");
  if (references.empty())
    throw std::invalid_argument("bleu: need at least one reference");
}

}  // namespace

BleuReport bleu(std::span<const int> hypothesis,
                std::span<const std::vector<int>> references, int max_n) {
  validate_bleu_args(references, max_n);
  std::array<std::size_t, 4> matched{}, total{};
  for (int n = 1; n <= max_n; ++n)
    clipped_counts(hypothesis, references, n, matched[n - 1], total[n - 1]);
  return finalize_counts(matched, total, hypothesis.size(),
                         closest_ref_length(hypothesis.size(), references),
                         max_n);
}

CorpusBleu::CorpusBleu(int max_n) : max_n_(max_n) {
  if (max_n < 1 || max_n > 4)
    throw std::invalid_argument("CorpusBleu: max_n must be in [1,4]");
}

void CorpusBleu::add(std::span<const int> hypothesis,
                     std::span<const std::vector<int>> references) {
  validate_bleu_args(references, max_n_);
  for (int n = 1; n <= max_n_; ++n) {
    std::size_t m = 0, t = 0;
    clipped_counts(hypothesis, references, n, m, t);
    matched_[n - 1] += m;
    total_[n - 1] += t;
  }
  hyp_len_ += hypothesis.size();
  ref_len_ += closest_ref_length(hypothesis.size(), references);
}

BleuReport CorpusBleu::finalize() const {
  return finalize_counts(matched_, total_, hyp_len_, ref_len_, max_n_);
}

std::vector<double> retrieval_recall_with(const PairScoreFn& score,
                                          std::size_t pool_size,
                                          std::span<const std::size_t> ks) {
  if (pool_size == 0)
    throw std::invalid_argument("retrieval_recall: empty pool");
  std::vector<double> recall(ks.size(), 0.0);
  for (std::size_t q = 0; q < pool_size; ++q) {
    const double true_score = score(q, q);
    std::size_t rank = 1;
    for (std::size_t c = 0; c < pool_size; ++c) {
      if (c == q) continue;
      if (score(q, c) > true_score) ++rank;
    }
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (rank <= ks[i]) recall[i] += 1.0;
  }
  for (double& r : recall) r /= static_cast<double>(pool_size);
  return recall;
}

std::vector<double> retrieval_recall(const ModelBundle& m,
                                     std::span<const PairedExample> pairs,
                                     std::size_t pool_size,
                                     std::span<const std::size_t> ks) {
  if (pool_size > pairs.size())
    throw std::invalid_argument("retrieval_recall: pool exceeds eval set");
  std::vector<Tensor> z_x(pool_size), z_y(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) {
    z_x[i] = infer::encode_image(m, pairs[i].features);
    z_y[i] = infer::encode_caption(m, pairs[i].caption.tokens);
  }
  return retrieval_recall_with(
      [&](std::size_t q, std::size_t c) {
        return infer::discriminate(m, z_x[q], z_y[c]);
      },
      pool_size, ks);
}

namespace {

bool attributes_match(const Scene& scene, const ToyCaption& caption) {
  const std::optional<Scene> parsed = parse_caption(caption.tokens);
  if (!parsed) return false;
  return parsed->objects == scene.objects;
}

std::string attr_signature(const Scene& s) {
  std::string sig;
  for (const ToyObject& o : s.objects) {
    sig += static_cast<char>('a' + o.shape);
    sig += static_cast<char>('a' + o.color);
    sig += static_cast<char>('a' + o.size);
  }
  return sig;
}

}  // namespace

double pseudo_accuracy(std::span<const PseudoAssignment> assignments,
                       std::span<const UnpairedImage> images,
                       std::span<const UnpairedCaption> captions) {
  if (assignments.empty()) return 0.0;
  std::size_t hits = 0;
  for (const PseudoAssignment& a : assignments) {
    if (a.direction == RetrievalDirection::kImageToCaption) {
      if (a.anchor_id >= images.size() || a.matched_id >= captions.size())
        throw std::out_of_range("pseudo_accuracy: assignment id outside sets");
      hits += attributes_match(images[a.anchor_id].scene,
                               captions[a.matched_id].caption);
    } else {
      if (a.anchor_id >= captions.size() || a.matched_id >= images.size())
        throw std::out_of_range("pseudo_accuracy: assignment id outside sets");
      hits += attributes_match(images[a.matched_id].scene,
                               captions[a.anchor_id].caption);
    }
  }
  return static_cast<double>(hits) / static_cast<double>(assignments.size());
}

double random_match_baseline(std::span<const UnpairedImage> images,
                             std::span<const UnpairedCaption> captions) {
  if (images.empty() || captions.empty()) return 0.0;
  std::map<std::string, std::size_t> image_sigs;
  for (const UnpairedImage& im : images) ++image_sigs[attr_signature(im.scene)];
  std::size_t collisions = 0;
  for (const UnpairedCaption& uc : captions) {
    const std::optional<Scene> parsed = parse_caption(uc.caption.tokens);
    if (!parsed) continue;
    auto it = image_sigs.find(attr_signature(*parsed));
    if (it != image_sigs.end()) collisions += it->second;
  }
  return static_cast<double>(collisions) /
         (static_cast<double>(images.size()) *
          static_cast<double>(captions.size()));
}

}  // namespace capmatch
