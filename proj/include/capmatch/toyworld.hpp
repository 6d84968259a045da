#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capmatch/rng.hpp"
#include "capmatch/tensor.hpp"

namespace capmatch {

// Synthetic two-modality world standing in for images and captions: scenes
// of 1-3 attributed objects, template-grammar captions over a small
// vocabulary, and an oracle concept vector per scene.

inline constexpr int kNumShapes = 5;
inline constexpr int kNumColors = 6;
inline constexpr int kNumSizes = 2;
inline constexpr int kMaxObjects = 3;
inline constexpr int kAttrDim = kNumShapes + kNumColors + kNumSizes;  // 13
inline constexpr int kFeatureDim = kMaxObjects * kAttrDim;            // 39
// start + "a size color shape" + 2 x "and a size color shape" + end
inline constexpr int kMaxCaptionLen = 1 + 4 + 2 * 5 + 1;  // 16

struct ToyObject {
  int shape = 0;
  int color = 0;
  int size = 0;

  bool operator==(const ToyObject&) const = default;
};

struct Scene {
  std::vector<ToyObject> objects;  // 1..kMaxObjects, in caption order

  bool operator==(const Scene&) const = default;
};

struct ToyCaption {
  std::vector<int> tokens;  // starts with kStartToken, ends with kEndToken

  bool operator==(const ToyCaption&) const = default;
};

// Fixed vocabulary. Base attribute words are used by the canonical grammar;
// each has one synonym used only by novel-word injection, so injected words
// can appear in unpaired captions without ever entering the paired set.
class Vocabulary {
 public:
  static constexpr int kEndToken = 0;
  static constexpr int kStartToken = 1;
  static constexpr int kArticleToken = 2;  // "a"
  static constexpr int kAndToken = 3;

  static const Vocabulary& instance();

  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(int id) const { return words_[id]; }
  int id(const std::string& word) const;  // -1 when unknown

  int shape_word(int shape) const;
  int color_word(int color) const;
  int size_word(int size) const;

  bool is_attribute_word(int tok) const;
  bool is_synonym(int tok) const;
  int synonym_of(int base_tok) const;
  // synonyms map back to their base word; other ids map to themselves
  int canonical(int tok) const;

 private:
  Vocabulary();
  std::vector<std::string> words_;
  int first_attr_, first_synonym_;
};

// uniform attributes, object count uniform over 1..3, reproducible per rng
Scene generate_scene(Rng& rng);
// attribute-frequency skew standing in for a shifted unpaired domain
Scene generate_scene_skewed(Rng& rng);

// Concatenated one-hot attribute blocks per object slot (absent slots
// zeroed) plus i.i.d. Gaussian noise on every coordinate.
Tensor render_features(const Scene& scene, double noise_std, Rng& rng);

// "a <size> <color> <shape> [and a <size> <color> <shape> ...]"
ToyCaption caption_of(const Scene& scene);

// Mean of the per-object attribute one-hot encodings; the oracle stand-in
// for an external scene-understanding concept vector.
Tensor concept_of(const Scene& scene);

// Inverse of the grammar; synonyms are canonicalized. nullopt when the
// token sequence is not a well-formed caption.
std::optional<Scene> parse_caption(std::span<const int> tokens);

// caption tokens without start/end markers
std::vector<int> content_tokens(std::span<const int> tokens);

struct PairedExample {
  Scene scene;
  Tensor features;
  ToyCaption caption;
};

struct UnpairedImage {
  Scene scene;  // ground truth kept for evaluation only
  Tensor features;
};

struct UnpairedCaption {
  ToyCaption caption;
};

struct SplitOptions {
  double noise_std = 0.1;
  bool novel_words = false;
  bool domain_shift = false;
};

struct DatasetSplits {
  std::vector<PairedExample> paired;
  std::vector<UnpairedImage> unpaired_images;
  std::vector<UnpairedCaption> unpaired_captions;
};

// paired count = ceil(paired_fraction * total); the remaining samples are
// split alternately into image-only and caption-only sets, so no sample
// contributes to more than one split.
DatasetSplits make_splits(std::size_t total, double paired_fraction,
                          const SplitOptions& options, Rng& rng);

// fresh held-out pairs for evaluation
std::vector<PairedExample> make_eval_pairs(std::size_t count,
                                           double noise_std, Rng& rng);

// header line with the vocabulary, then one whitespace-delimited record per
// line: scene attributes, feature vector, caption tokens, split tag.
void dump_dataset(const DatasetSplits& splits, std::ostream& out);
DatasetSplits load_dataset(std::istream& in);

}  // namespace capmatch
