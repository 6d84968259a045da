#include "capmatch/toyworld.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace capmatch {

namespace {

const char* kShapeWords[kNumShapes] = {"circle", "square", "triangle", "star",
                                       "diamond"};
const char* kColorWords[kNumColors] = {"red",    "blue",   "green",
                                       "yellow", "purple", "orange"};
const char* kSizeWords[kNumSizes] = {"small", "big"};
// one synonym per base attribute word, same order
const char* kSynonyms[kAttrDim] = {"disc",   "box",     "wedge",  "spark",
                                   "gem",    "crimson", "azure",  "emerald",
                                   "golden", "violet",  "amber",  "tiny",
                                   "huge"};

int skewed_index(Rng& rng, int n) {
  // weight i+1 on value i
  const int total = n * (n + 1) / 2;
  int r = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(total)));
  for (int i = 0; i < n; ++i) {
    r -= i + 1;
    if (r < 0) return i;
  }
  return n - 1;
}

ToyObject parse_object_tokens(int size_tok, int color_tok, int shape_tok) {
  const Vocabulary& v = Vocabulary::instance();
  ToyObject obj;
  obj.size = v.canonical(size_tok) - v.size_word(0);
  obj.color = v.canonical(color_tok) - v.color_word(0);
  obj.shape = v.canonical(shape_tok) - v.shape_word(0);
  if (obj.size < 0 || obj.size >= kNumSizes || obj.color < 0 ||
      obj.color >= kNumColors || obj.shape < 0 || obj.shape >= kNumShapes)
    obj.shape = -1;  // marks failure for the caller
  return obj;
}

}  // namespace

Vocabulary::Vocabulary() {
  words_ = {"<end>", "<start>", "a", "and"};
  first_attr_ = static_cast<int>(words_.size());
  for (const char* w : kShapeWords) words_.push_back(w);
  for (const char* w : kColorWords) words_.push_back(w);
  for (const char* w : kSizeWords) words_.push_back(w);
  first_synonym_ = static_cast<int>(words_.size());
  for (const char* w : kSynonyms) words_.push_back(w);
}

const Vocabulary& Vocabulary::instance() {
  static const Vocabulary v;
  return v;
}

int Vocabulary::id(const std::string& word) const {
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i] == word) return static_cast<int>(i);
  return -1;
}

int Vocabulary::shape_word(int shape) const { return first_attr_ + shape; }
int Vocabulary::color_word(int color) const {
  return first_attr_ + kNumShapes + color;
}
int Vocabulary::size_word(int size) const {
  return first_attr_ + kNumShapes + kNumColors + size;
}

bool Vocabulary::is_attribute_word(int tok) const {
  return tok >= first_attr_ && tok < first_synonym_;
}

bool Vocabulary::is_synonym(int tok) const {
  return tok >= first_synonym_ && tok < size();
}

int Vocabulary::synonym_of(int base_tok) const {
  if (!is_attribute_word(base_tok))
    throw std::invalid_argument("synonym_of: not an attribute word");
  return base_tok - first_attr_ + first_synonym_;
}

int Vocabulary::canonical(int tok) const {
  if (is_synonym(tok)) return tok - first_synonym_ + first_attr_;
  return tok;
}

Scene generate_scene(Rng& rng) {
  Scene s;
  const int count = 1 + static_cast<int>(rng.uniform_index(kMaxObjects));
  for (int i = 0; i < count; ++i) {
    ToyObject o;
    o.shape = static_cast<int>(rng.uniform_index(kNumShapes));
    o.color = static_cast<int>(rng.uniform_index(kNumColors));
    o.size = static_cast<int>(rng.uniform_index(kNumSizes));
    s.objects.push_back(o);
  }
  return s;
}

Scene generate_scene_skewed(Rng& rng) {
  Scene s;
  const int count = 1 + static_cast<int>(rng.uniform_index(kMaxObjects));
  for (int i = 0; i < count; ++i) {
    ToyObject o;
    o.shape = skewed_index(rng, kNumShapes);
    o.color = skewed_index(rng, kNumColors);
    o.size = skewed_index(rng, kNumSizes);
    s.objects.push_back(o);
  }
  return s;
}

Tensor render_features(const Scene& scene, double noise_std, Rng& rng) {
  if (scene.objects.empty() ||
      scene.objects.size() > static_cast<std::size_t>(kMaxObjects))
    throw std::invalid_argument("render_features: scene must hold 1.." +
                                std::to_string(kMaxObjects) + " objects");
  if (noise_std < 0.0)
    throw std::invalid_argument("render_features: negative noise std");
  Tensor f({static_cast<std::size_t>(kFeatureDim)});
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ToyObject& o = scene.objects[i];
    const std::size_t base = i * kAttrDim;
    f.data[base + static_cast<std::size_t>(o.shape)] = 1.0;
    f.data[base + kNumShapes + static_cast<std::size_t>(o.color)] = 1.0;
    f.data[base + kNumShapes + kNumColors + static_cast<std::size_t>(o.size)] =
        1.0;
  }
  if (noise_std > 0.0)
    for (double& x : f.data) x += rng.normal(0.0, noise_std);
  return f;
}

ToyCaption caption_of(const Scene& scene) {
  const Vocabulary& v = Vocabulary::instance();
  ToyCaption c;
  c.tokens.push_back(Vocabulary::kStartToken);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (i) c.tokens.push_back(Vocabulary::kAndToken);
    c.tokens.push_back(Vocabulary::kArticleToken);
    const ToyObject& o = scene.objects[i];
    c.tokens.push_back(v.size_word(o.size));
    c.tokens.push_back(v.color_word(o.color));
    c.tokens.push_back(v.shape_word(o.shape));
  }
  c.tokens.push_back(Vocabulary::kEndToken);
  return c;
}

Tensor concept_of(const Scene& scene) {
  Tensor v({static_cast<std::size_t>(kAttrDim)});
  for (const ToyObject& o : scene.objects) {
    v.data[static_cast<std::size_t>(o.shape)] += 1.0;
    v.data[kNumShapes + static_cast<std::size_t>(o.color)] += 1.0;
    v.data[kNumShapes + kNumColors + static_cast<std::size_t>(o.size)] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(scene.objects.size());
  for (double& x : v.data) x *= inv;
  return v;
}

std::optional<Scene> parse_caption(std::span<const int> tokens) {
  if (tokens.size() < 6) return std::nullopt;
  if (tokens.front() != Vocabulary::kStartToken ||
      tokens.back() != Vocabulary::kEndToken)
    return std::nullopt;
  Scene s;
  std::size_t i = 1;
  const std::size_t end = tokens.size() - 1;
  while (i < end) {
    if (!s.objects.empty()) {
      if (tokens[i] != Vocabulary::kAndToken) return std::nullopt;
      ++i;
    }
    if (i + 3 >= end + 1 || tokens[i] != Vocabulary::kArticleToken)
      return std::nullopt;
    if (i + 4 > end) return std::nullopt;
    ToyObject o = parse_object_tokens(tokens[i + 1], tokens[i + 2],
                                      tokens[i + 3]);
    if (o.shape < 0) return std::nullopt;
    s.objects.push_back(o);
    if (s.objects.size() > static_cast<std::size_t>(kMaxObjects))
      return std::nullopt;
    i += 4;
  }
  if (s.objects.empty()) return std::nullopt;
  return s;
}

std::vector<int> content_tokens(std::span<const int> tokens) {
  std::vector<int> out;
  for (int t : tokens)
    if (t != Vocabulary::kStartToken && t != Vocabulary::kEndToken)
      out.push_back(t);
  return out;
}

DatasetSplits make_splits(std::size_t total, double paired_fraction,
                          const SplitOptions& options, Rng& rng) {
  if (paired_fraction <= 0.0 || paired_fraction > 1.0)
    throw std::invalid_argument("make_splits: paired_fraction outside (0,1]");
  const std::size_t n_paired = static_cast<std::size_t>(
      std::ceil(paired_fraction * static_cast<double>(total)));
  if (n_paired == 0)
    throw std::invalid_argument("make_splits: no paired samples");

  // membership by provenance id, then generation in id order
  const std::vector<std::size_t> paired_ids =
      rng.sample_without_replacement(total, n_paired);
  std::vector<std::uint8_t> tag(total, 0);  // 0 unpaired, 1 paired
  for (std::size_t id : paired_ids) tag[id] = 1;

  DatasetSplits splits;
  bool next_unpaired_is_image = true;
  for (std::size_t id = 0; id < total; ++id) {
    if (tag[id]) {
      Scene scene = generate_scene(rng);
      PairedExample ex;
      ex.features = render_features(scene, options.noise_std, rng);
      ex.caption = caption_of(scene);
      ex.scene = std::move(scene);
      splits.paired.push_back(std::move(ex));
    } else {
      Scene scene = options.domain_shift ? generate_scene_skewed(rng)
                                         : generate_scene(rng);
      if (next_unpaired_is_image) {
        UnpairedImage im;
        im.features = render_features(scene, options.noise_std, rng);
        im.scene = std::move(scene);
        splits.unpaired_images.push_back(std::move(im));
      } else {
        splits.unpaired_captions.push_back({caption_of(scene)});
      }
      next_unpaired_is_image = !next_unpaired_is_image;
    }
  }

  if (options.novel_words && !splits.unpaired_captions.empty()) {
    const Vocabulary& v = Vocabulary::instance();
    bool injected = false;
    for (UnpairedCaption& uc : splits.unpaired_captions)
      for (int& t : uc.caption.tokens)
        if (v.is_attribute_word(t) && rng.uniform() < 0.5) {
          t = v.synonym_of(t);
          injected = true;
        }
    if (!injected) {
      for (int& t : splits.unpaired_captions[0].caption.tokens)
        if (v.is_attribute_word(t)) {
          t = v.synonym_of(t);
          break;
        }
    }
  }
  return splits;
}

std::vector<PairedExample> make_eval_pairs(std::size_t count,
                                           double noise_std, Rng& rng) {
  std::vector<PairedExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Scene scene = generate_scene(rng);
    PairedExample ex;
    ex.features = render_features(scene, noise_std, rng);
    ex.caption = caption_of(scene);
    ex.scene = std::move(scene);
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

void dump_scene(const Scene& s, std::ostream& out) {
  out << s.objects.size();
  for (const ToyObject& o : s.objects)
    out << ' ' << o.shape << ' ' << o.color << ' ' << o.size;
}

void dump_features(const Tensor& f, std::ostream& out) {
  char buf[32];
  out << f.numel();
  for (double x : f.data) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    out << ' ' << buf;
  }
}

void dump_tokens(const std::vector<int>& toks, std::ostream& out) {
  out << toks.size();
  for (int t : toks) out << ' ' << t;
}

Scene read_scene(std::istream& in) {
  std::size_t n = 0;
  if (!(in >> n)) throw std::runtime_error("dataset: truncated scene");
  Scene s;
  for (std::size_t i = 0; i < n; ++i) {
    ToyObject o;
    if (!(in >> o.shape >> o.color >> o.size))
      throw std::runtime_error("dataset: truncated object");
    s.objects.push_back(o);
  }
  return s;
}

Tensor read_features(std::istream& in) {
  std::size_t n = 0;
  if (!(in >> n)) throw std::runtime_error("dataset: truncated features");
  Tensor f({n});
  for (std::size_t i = 0; i < n; ++i)
    if (!(in >> f.data[i]))
      throw std::runtime_error("dataset: truncated feature value");
  return f;
}

std::vector<int> read_tokens(std::istream& in) {
  std::size_t n = 0;
  if (!(in >> n)) throw std::runtime_error("dataset: truncated tokens");
  std::vector<int> toks(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!(in >> toks[i])) throw std::runtime_error("dataset: truncated token");
  return toks;
}

}  // namespace

void dump_dataset(const DatasetSplits& splits, std::ostream& out) {
  const Vocabulary& v = Vocabulary::instance();
  out << "vocab " << v.size();
  for (int i = 0; i < v.size(); ++i) out << ' ' << v.word(i);
  out << '\n';
  for (const PairedExample& ex : splits.paired) {
    dump_scene(ex.scene, out);
    out << ' ';
    dump_features(ex.features, out);
    out << ' ';
    dump_tokens(ex.caption.tokens, out);
    out << " paired\n";
  }
  for (const UnpairedImage& im : splits.unpaired_images) {
    dump_scene(im.scene, out);
    out << ' ';
    dump_features(im.features, out);
    out << " 0 unpaired_image\n";
  }
  for (const UnpairedCaption& uc : splits.unpaired_captions) {
    out << "0 0 ";
    dump_tokens(uc.caption.tokens, out);
    out << " unpaired_caption\n";
  }
}

DatasetSplits load_dataset(std::istream& in) {
  std::string word;
  int vocab_size = 0;
  if (!(in >> word >> vocab_size) || word != "vocab")
    throw std::runtime_error("dataset: bad header");
  const Vocabulary& v = Vocabulary::instance();
  if (vocab_size != v.size())
    throw std::runtime_error("dataset: vocabulary size mismatch");
  for (int i = 0; i < vocab_size; ++i) {
    if (!(in >> word)) throw std::runtime_error("dataset: truncated header");
    if (word != v.word(i))
      throw std::runtime_error("dataset: vocabulary word mismatch at " +
                               std::to_string(i));
  }
  DatasetSplits splits;
  while (true) {
    Scene scene;
    {
      std::size_t n = 0;
      if (!(in >> n)) break;  // end of file
      for (std::size_t i = 0; i < n; ++i) {
        ToyObject o;
        if (!(in >> o.shape >> o.color >> o.size))
          throw std::runtime_error("dataset: truncated object");
        scene.objects.push_back(o);
      }
    }
    Tensor features = read_features(in);
    std::vector<int> tokens = read_tokens(in);
    std::string tag;
    if (!(in >> tag)) throw std::runtime_error("dataset: missing split tag");
    if (tag == "paired") {
      PairedExample ex;
      ex.scene = std::move(scene);
      ex.features = std::move(features);
      ex.caption.tokens = std::move(tokens);
      splits.paired.push_back(std::move(ex));
    } else if (tag == "unpaired_image") {
      UnpairedImage im;
      im.scene = std::move(scene);
      im.features = std::move(features);
      splits.unpaired_images.push_back(std::move(im));
    } else if (tag == "unpaired_caption") {
      UnpairedCaption uc;
      uc.caption.tokens = std::move(tokens);
      splits.unpaired_captions.push_back(std::move(uc));
    } else {
      throw std::runtime_error("dataset: unknown split tag '" + tag + "'");
    }
  }
  return splits;
}

}  // namespace capmatch
