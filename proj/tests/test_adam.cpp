#include <cmath>
#include <stdexcept>
#include <vector>

#include "capmatch/adam.hpp"
#include "doctest.h"

using namespace capmatch;

namespace {

// reference recurrence, evaluated independently of the implementation
double adam_oracle_single_step(double x0, double g, const AdamConfig& cfg) {
  const double m = (1.0 - cfg.beta1) * g;
  const double v = (1.0 - cfg.beta2) * g * g;
  const double mhat = m / (1.0 - cfg.beta1);
  const double vhat = v / (1.0 - cfg.beta2);
  return x0 - cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
}

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::from_vector({1.0, -2.0});
  std::vector<NamedParam> params = {{"p", &p}};
  AdamState state(params, AdamConfig{});
  std::vector<Tensor> grads = {Tensor::zeros({2})};
  state.step(params, grads);
  CHECK(p.data[0] == 1.0);
  CHECK(p.data[1] == -2.0);
}

TEST_CASE("step counter increments by exactly one per call") {
  Tensor p = Tensor::scalar(0.0);
  std::vector<NamedParam> params = {{"p", &p}};
  AdamState state(params, AdamConfig{});
  std::vector<Tensor> grads = {Tensor::scalar(0.1)};
  for (int i = 1; i <= 5; ++i) {
    state.step(params, grads);
    CHECK(state.step_count() == i);
  }
}

TEST_CASE("single step on x^2 matches the reference recurrence") {
  Tensor p = Tensor::scalar(1.0);
  std::vector<NamedParam> params = {{"x", &p}};
  const AdamConfig cfg;  // stock defaults: lr 5e-4, betas 0.9/0.999
  AdamState state(params, cfg);
  std::vector<Tensor> grads = {Tensor::scalar(2.0)};  // d/dx x^2 at 1
  state.step(params, grads);
  CHECK(p.data[0] ==
        doctest::Approx(adam_oracle_single_step(1.0, 2.0, cfg))
            .epsilon(1e-15));
  // the update is essentially lr in magnitude at the first step
  CHECK(p.data[0] == doctest::Approx(1.0 - 5e-4).epsilon(1e-6));
}

TEST_CASE("NaN gradient names the parameter") {
  Tensor p = Tensor::from_vector({1.0, 2.0});
  std::vector<NamedParam> params = {{"f.h1.w", &p}};
  AdamState state(params, AdamConfig{});
  std::vector<Tensor> grads = {Tensor::from_vector(
      {0.0, std::numeric_limits<double>::quiet_NaN()})};
  CHECK_THROWS_WITH_AS(state.step(params, grads),
                       "adam: NaN gradient in parameter 'f.h1.w' at index 1",
                       std::runtime_error);
}

TEST_CASE("descends a quadratic bowl") {
  Tensor p = Tensor::scalar(1.0);
  std::vector<NamedParam> params = {{"x", &p}};
  AdamConfig cfg;
  cfg.lr = 0.05;
  AdamState state(params, cfg);
  for (int i = 0; i < 400; ++i) {
    std::vector<Tensor> grads = {Tensor::scalar(2.0 * p.data[0])};
    state.step(params, grads);
  }
  CHECK(std::abs(p.data[0]) < 0.05);
}

TEST_CASE("invalid hyperparameters are rejected") {
  Tensor p = Tensor::scalar(0.0);
  std::vector<NamedParam> params = {{"p", &p}};
  AdamConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(AdamState(params, bad), std::invalid_argument);
  bad = AdamConfig{};
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(AdamState(params, bad), std::invalid_argument);
}

TEST_CASE("global norm clipping rescales to the bound") {
  std::vector<Tensor> grads = {Tensor::from_vector({3.0, 0.0}),
                               Tensor::from_vector({0.0, 4.0})};
  const double before = clip_global_norm(grads, 1.0);
  CHECK(before == doctest::Approx(5.0));
  double sq = 0.0;
  for (const Tensor& g : grads) sq += squared_norm(g);
  CHECK(std::sqrt(sq) == doctest::Approx(1.0));
}
