#include <cmath>
#include <sstream>
#include <stdexcept>

#include "capmatch/pseudo.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace capmatch;
using namespace capmatch::testing;

namespace {

// small unpaired world drawn from the toy generator
struct RetrievalFixture {
  ModelBundle m;
  std::vector<UnpairedImage> images;
  std::vector<UnpairedCaption> captions;

  explicit RetrievalFixture(std::size_t n = 40, std::uint64_t seed = 7) {
    ModelConfig cfg;  // full-size encoders over real toy features
    Rng init(seed);
    m = ModelBundle::init(cfg, init);
    Rng rng(seed + 1);
    for (std::size_t i = 0; i < n; ++i) {
      const Scene s = generate_scene(rng);
      UnpairedImage im;
      im.features = render_features(s, 0.05, rng);
      im.scene = s;
      images.push_back(std::move(im));
      captions.push_back({caption_of(generate_scene(rng))});
    }
  }
};

}  // namespace

TEST_CASE("pool sizing follows the 1% rule") {
  Rng rng(1);
  SUBCASE("N = 100000 at fraction 0.01 yields exactly 1000") {
    const SearchPool pool = subsample_pool(100000, 0.01, rng);
    CHECK(pool.candidates.size() == 1000);
  }
  SUBCASE("fraction one selects everything") {
    const SearchPool pool = subsample_pool(250, 1.0, rng);
    CHECK(pool.candidates.size() == 250);
    for (std::size_t i = 0; i < 250; ++i) CHECK(pool.candidates[i] == i);
  }
  SUBCASE("tiny fractions keep at least one candidate") {
    const SearchPool pool = subsample_pool(10, 0.01, rng);
    CHECK(pool.candidates.size() == 1);
  }
  SUBCASE("same seed reproduces the pool") {
    Rng a(9), b(9);
    const SearchPool pa = subsample_pool(5000, 0.01, a);
    const SearchPool pb = subsample_pool(5000, 0.01, b);
    CHECK(pa.candidates == pb.candidates);
  }
  SUBCASE("bad arguments are rejected") {
    CHECK_THROWS_AS(subsample_pool(0, 0.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(subsample_pool(10, 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(subsample_pool(10, 1.5, rng), std::invalid_argument);
  }
}

TEST_CASE("argmax tie rule and monotone-transform invariance") {
  SUBCASE("ties break toward the lowest index") {
    const std::vector<double> scores = {0.3, 0.7, 0.7, 0.1};
    CHECK(argmax_lowest_id(scores) == 1);
  }
  SUBCASE("any strictly increasing transform keeps the argmax") {
    Rng rng(13);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> scores(17);
      for (double& s : scores) s = rng.uniform();
      std::vector<double> mapped(scores.size());
      for (std::size_t i = 0; i < scores.size(); ++i)
        mapped[i] = std::exp(3.0 * scores[i]) + 2.0;
      CHECK(argmax_lowest_id(scores) == argmax_lowest_id(mapped));
    }
  }
}

TEST_CASE("assignment over a singleton pool returns that candidate") {
  RetrievalFixture fx(5);
  SearchPool pool;
  pool.fraction = 0.2;
  pool.candidates = {3};
  std::uint64_t evals = 0;
  const PseudoAssignment a = assign_caption(
      fx.m, fx.images[0].features, 0, pool, fx.captions, evals);
  CHECK(a.matched_id == 3);
  CHECK(a.anchor_id == 0);
  CHECK(a.direction == RetrievalDirection::kImageToCaption);
  CHECK(evals == 1);
  CHECK(a.confidence > 0.0);
  CHECK(a.confidence < 1.0);
}

TEST_CASE("assignment equals the exhaustive-scan oracle") {
  RetrievalFixture fx(30);
  Rng rng(3);
  const SearchPool pool = subsample_pool(fx.captions.size(), 0.5, rng);
  std::uint64_t evals = 0;
  const PseudoAssignment got = assign_caption(
      fx.m, fx.images[4].features, 4, pool, fx.captions, evals);
  // oracle: scan every candidate with raw discriminator calls
  const Tensor zx = infer::encode_image(fx.m, fx.images[4].features);
  double best = -1.0;
  std::size_t best_id = 0;
  for (std::size_t id : pool.candidates) {
    const double s = infer::discriminate(
        fx.m, zx, infer::encode_caption(fx.m, fx.captions[id].caption.tokens));
    if (s > best) {
      best = s;
      best_id = id;
    }
  }
  CHECK(got.matched_id == best_id);
  CHECK(got.confidence == doctest::Approx(best).epsilon(1e-12));
  CHECK(evals == pool.candidates.size());
}

TEST_CASE("mirror direction retrieves images for captions") {
  RetrievalFixture fx(20);
  Rng rng(4);
  const SearchPool pool = subsample_pool(fx.images.size(), 0.5, rng);
  std::uint64_t evals = 0;
  const PseudoAssignment a =
      assign_image(fx.m, fx.captions[2].caption.tokens, 2, pool, fx.images,
                   evals);
  CHECK(a.direction == RetrievalDirection::kCaptionToImage);
  CHECK(evals == pool.candidates.size());
  const Tensor zy = infer::encode_caption(fx.m, fx.captions[2].caption.tokens);
  double best = -1.0;
  std::size_t best_id = 0;
  for (std::size_t id : pool.candidates) {
    const double s = infer::discriminate(
        fx.m, infer::encode_image(fx.m, fx.images[id].features), zy);
    if (s > best) {
      best = s;
      best_id = id;
    }
  }
  CHECK(a.matched_id == best_id);
}

TEST_CASE("assignments are deterministic given parameters and pool") {
  RetrievalFixture fx(25);
  Rng rng(5);
  const SearchPool pool = subsample_pool(fx.captions.size(), 0.4, rng);
  std::uint64_t e1 = 0, e2 = 0;
  const PseudoAssignment a = assign_caption(
      fx.m, fx.images[1].features, 1, pool, fx.captions, e1);
  const PseudoAssignment b = assign_caption(
      fx.m, fx.images[1].features, 1, pool, fx.captions, e2);
  CHECK(a.matched_id == b.matched_id);
  CHECK(a.confidence == b.confidence);
}

TEST_CASE("batch evaluation count is anchors times pool per direction") {
  RetrievalFixture fx(50);
  Rng rng(6);
  const SearchPool image_pool = subsample_pool(fx.images.size(), 0.2, rng);
  const SearchPool caption_pool = subsample_pool(fx.captions.size(), 0.3, rng);
  const std::vector<std::size_t> image_anchors = {0, 1, 2, 3, 4, 5, 6};
  const std::vector<std::size_t> caption_anchors = {7, 8, 9};
  std::uint64_t evals = 0;
  const auto assignments =
      batch_assign(fx.m, image_anchors, fx.images, caption_anchors,
                   fx.captions, image_pool, caption_pool, evals);
  CHECK(assignments.size() == image_anchors.size() + caption_anchors.size());
  CHECK(evals == image_anchors.size() * caption_pool.candidates.size() +
                     caption_anchors.size() * image_pool.candidates.size());
  for (const PseudoAssignment& a : assignments) {
    CHECK(a.confidence > 0.0);
    CHECK(a.confidence < 1.0);
  }
}

TEST_CASE("assignment dump is well-formed CSV") {
  std::vector<PseudoAssignment> as = {
      {1, 2, 0.5, RetrievalDirection::kImageToCaption},
      {3, 4, 0.25, RetrievalDirection::kCaptionToImage}};
  std::stringstream s;
  dump_assignments(as, s);
  CHECK(s.str() ==
        "anchor_id,matched_id,confidence,direction\n"
        "1,2,0.5,image_to_caption\n"
        "3,4,0.25,caption_to_image\n");
}
