#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "capmatch/toyworld.hpp"
#include "doctest.h"

using namespace capmatch;

TEST_CASE("scene generation is deterministic per seed and in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 200; ++i) {
    const Scene sa = generate_scene(a);
    const Scene sb = generate_scene(b);
    CHECK(sa == sb);
    CHECK(sa.objects.size() >= 1);
    CHECK(sa.objects.size() <= 3);
    for (const ToyObject& o : sa.objects) {
      CHECK(o.shape >= 0);
      CHECK(o.shape < kNumShapes);
      CHECK(o.color >= 0);
      CHECK(o.color < kNumColors);
      CHECK(o.size >= 0);
      CHECK(o.size < kNumSizes);
    }
  }
}

TEST_CASE("attribute frequencies sit within 3 sigma of uniform") {
  Rng rng(777);
  std::vector<int> shape_counts(kNumShapes, 0);
  std::vector<int> color_counts(kNumColors, 0);
  int draws = 0;
  for (int i = 0; i < 10000; ++i) {
    const Scene s = generate_scene(rng);
    for (const ToyObject& o : s.objects) {
      ++shape_counts[static_cast<std::size_t>(o.shape)];
      ++color_counts[static_cast<std::size_t>(o.color)];
      ++draws;
    }
  }
  auto within = [&](int count, double p) {
    const double mean = draws * p;
    const double sigma = std::sqrt(draws * p * (1.0 - p));
    return std::abs(count - mean) <= 3.0 * sigma;
  };
  for (int c : shape_counts) CHECK(within(c, 1.0 / kNumShapes));
  for (int c : color_counts) CHECK(within(c, 1.0 / kNumColors));
}

TEST_CASE("noiseless features are exact one-hot blocks") {
  Scene s;
  s.objects = {{2, 4, 1}};
  Rng rng(1);
  const Tensor f = render_features(s, 0.0, rng);
  CHECK(f.numel() == static_cast<std::size_t>(kFeatureDim));
  double sum = 0.0;
  for (double x : f.data) {
    CHECK((x == 0.0 || x == 1.0));
    sum += x;
  }
  CHECK(sum == 3.0);  // one hot per attribute of the single object
  CHECK(f.data[2] == 1.0);
  CHECK(f.data[kNumShapes + 4] == 1.0);
  CHECK(f.data[kNumShapes + kNumColors + 1] == 1.0);
}

TEST_CASE("one attribute flip changes exactly two coordinates") {
  Scene a, b;
  a.objects = {{0, 0, 0}, {1, 2, 1}};
  b = a;
  b.objects[1].color = 3;
  Rng rng(1);
  const Tensor fa = render_features(a, 0.0, rng);
  const Tensor fb = render_features(b, 0.0, rng);
  int diff = 0;
  for (std::size_t i = 0; i < fa.numel(); ++i)
    diff += fa.data[i] != fb.data[i];
  CHECK(diff == 2);
}

TEST_CASE("caption grammar round-trips through the parser") {
  Rng rng(31337);
  for (int i = 0; i < 300; ++i) {
    const Scene s = generate_scene(rng);
    const ToyCaption c = caption_of(s);
    CHECK(c.tokens.front() == Vocabulary::kStartToken);
    CHECK(c.tokens.back() == Vocabulary::kEndToken);
    CHECK(c.tokens.size() <= static_cast<std::size_t>(kMaxCaptionLen));
    CHECK(caption_of(s) == c);  // deterministic
    const std::optional<Scene> parsed = parse_caption(c.tokens);
    REQUIRE(parsed.has_value());
    CHECK(*parsed == s);
  }
}

TEST_CASE("parser canonicalizes synonyms and rejects garbage") {
  const Vocabulary& v = Vocabulary::instance();
  Scene s;
  s.objects = {{1, 2, 0}};
  ToyCaption c = caption_of(s);
  for (int& t : c.tokens)
    if (v.is_attribute_word(t)) t = v.synonym_of(t);
  const std::optional<Scene> parsed = parse_caption(c.tokens);
  REQUIRE(parsed.has_value());
  CHECK(*parsed == s);

  CHECK(!parse_caption(std::vector<int>{}).has_value());
  CHECK(!parse_caption(std::vector<int>{1, 2, 3, 0}).has_value());
  std::vector<int> truncated(c.tokens.begin(), c.tokens.end() - 2);
  CHECK(!parse_caption(truncated).has_value());
}

TEST_CASE("concept vector is the mean of per-object encodings") {
  SUBCASE("single object is its own encoding") {
    Scene s;
    s.objects = {{3, 1, 1}};
    const Tensor v = concept_of(s);
    CHECK(v.numel() == static_cast<std::size_t>(kAttrDim));
    CHECK(v.data[3] == 1.0);
    CHECK(v.data[kNumShapes + 1] == 1.0);
    CHECK(v.data[kNumShapes + kNumColors + 1] == 1.0);
  }
  SUBCASE("two identical objects average to the same vector") {
    Scene s1, s2;
    s1.objects = {{2, 2, 0}};
    s2.objects = {{2, 2, 0}, {2, 2, 0}};
    const Tensor v1 = concept_of(s1);
    const Tensor v2 = concept_of(s2);
    for (std::size_t i = 0; i < v1.numel(); ++i)
      CHECK(v1.data[i] == v2.data[i]);
  }
  SUBCASE("mixed scene is the hand-computed mean") {
    Scene s;
    s.objects = {{0, 0, 0}, {1, 1, 1}};
    const Tensor v = concept_of(s);
    CHECK(v.data[0] == 0.5);
    CHECK(v.data[1] == 0.5);
    CHECK(v.data[kNumShapes] == 0.5);
    CHECK(v.data[kNumShapes + kNumColors] == 0.5);
  }
}

TEST_CASE("splits honor the paired fraction and provenance disjointness") {
  Rng rng(5);
  const DatasetSplits s = make_splits(10000, 0.01, SplitOptions{}, rng);
  CHECK(s.paired.size() == 100);  // the 1% setup
  CHECK(s.unpaired_images.size() + s.unpaired_captions.size() == 9900);
  CHECK(std::abs(static_cast<long>(s.unpaired_images.size()) -
                 static_cast<long>(s.unpaired_captions.size())) <= 1);
  for (std::size_t i = 0; i < 50; ++i)
    CHECK(caption_of(s.paired[i].scene) == s.paired[i].caption);
}

TEST_CASE("fraction one keeps everything paired") {
  Rng rng(6);
  const DatasetSplits s = make_splits(500, 1.0, SplitOptions{}, rng);
  CHECK(s.paired.size() == 500);
  CHECK(s.unpaired_images.empty());
  CHECK(s.unpaired_captions.empty());
}

TEST_CASE("invalid fractions are rejected") {
  Rng rng(7);
  CHECK_THROWS_AS(make_splits(100, 0.0, SplitOptions{}, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_splits(100, 1.5, SplitOptions{}, rng),
                  std::invalid_argument);
}

TEST_CASE("novel-word injection leaves words unique to unpaired captions") {
  Rng rng(8);
  SplitOptions opts;
  opts.novel_words = true;
  const DatasetSplits s = make_splits(2000, 0.05, opts, rng);
  std::set<int> paired_vocab, unpaired_vocab;
  for (const PairedExample& ex : s.paired)
    for (int t : ex.caption.tokens) paired_vocab.insert(t);
  for (const UnpairedCaption& uc : s.unpaired_captions)
    for (int t : uc.caption.tokens) unpaired_vocab.insert(t);
  std::vector<int> only_unpaired;
  for (int t : unpaired_vocab)
    if (!paired_vocab.count(t)) only_unpaired.push_back(t);
  CHECK(!only_unpaired.empty());
  const Vocabulary& v = Vocabulary::instance();
  for (int t : only_unpaired) CHECK(v.is_synonym(t));
}

TEST_CASE("splits are deterministic per seed") {
  Rng a(11), b(11);
  const DatasetSplits sa = make_splits(300, 0.1, SplitOptions{}, a);
  const DatasetSplits sb = make_splits(300, 0.1, SplitOptions{}, b);
  REQUIRE(sa.paired.size() == sb.paired.size());
  for (std::size_t i = 0; i < sa.paired.size(); ++i) {
    CHECK(sa.paired[i].scene == sb.paired[i].scene);
    CHECK(sa.paired[i].features.data == sb.paired[i].features.data);
  }
}

TEST_CASE("domain shift skews unpaired attribute frequencies") {
  Rng rng(9);
  SplitOptions opts;
  opts.domain_shift = true;
  const DatasetSplits s = make_splits(6000, 0.01, opts, rng);
  std::vector<int> counts(kNumColors, 0);
  for (const UnpairedImage& im : s.unpaired_images)
    for (const ToyObject& o : im.scene.objects)
      ++counts[static_cast<std::size_t>(o.color)];
  // weight grows with the id, so the last color clearly beats the first
  CHECK(counts.back() > counts.front() * 2);
}

TEST_CASE("dataset dump and load round-trip") {
  Rng rng(10);
  SplitOptions opts;
  opts.novel_words = true;
  const DatasetSplits s = make_splits(200, 0.1, opts, rng);
  std::stringstream buf;
  dump_dataset(s, buf);
  const DatasetSplits r = load_dataset(buf);
  REQUIRE(r.paired.size() == s.paired.size());
  REQUIRE(r.unpaired_images.size() == s.unpaired_images.size());
  REQUIRE(r.unpaired_captions.size() == s.unpaired_captions.size());
  for (std::size_t i = 0; i < s.paired.size(); ++i) {
    CHECK(r.paired[i].scene == s.paired[i].scene);
    CHECK(r.paired[i].features.data == s.paired[i].features.data);
    CHECK(r.paired[i].caption == s.paired[i].caption);
  }
  for (std::size_t i = 0; i < s.unpaired_captions.size(); ++i)
    CHECK(r.unpaired_captions[i].caption == s.unpaired_captions[i].caption);
}

TEST_CASE("eval pairs are fresh and reproducible") {
  Rng a(12), b(12);
  const auto ea = make_eval_pairs(50, 0.1, a);
  const auto eb = make_eval_pairs(50, 0.1, b);
  REQUIRE(ea.size() == 50);
  for (std::size_t i = 0; i < ea.size(); ++i) {
    CHECK(ea[i].scene == eb[i].scene);
    CHECK(ea[i].features.data == eb[i].features.data);
  }
}
