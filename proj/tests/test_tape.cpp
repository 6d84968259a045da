#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "capmatch/gradcheck.hpp"
#include "capmatch/rng.hpp"
#include "capmatch/tape.hpp"
#include "doctest.h"

using namespace capmatch;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape,
                     double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul by the identity returns the input") {
  Tape tape;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Rng rng(3);
  Tensor a = random_tensor(rng, {3, 4});
  NodeId out = tape.matmul(tape.input(eye), tape.input(a));
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(tape.value(out).data[i] == doctest::Approx(a.data[i]).epsilon(1e-15));
}

TEST_CASE("sigmoid at zero is one half") {
  Tape tape;
  NodeId s = tape.sigmoid(tape.constant(0.0));
  CHECK(tape.scalar_value(s) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax cross entropy of uniform logits is log vocab") {
  Tape tape;
  NodeId ce =
      tape.softmax_cross_entropy(tape.input(Tensor::zeros({3})), 1);
  CHECK(tape.scalar_value(ce) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));  // ~1.098612
}

TEST_CASE("shape mismatches name the op and both shapes") {
  Tape tape;
  NodeId a = tape.input(Tensor::zeros({2, 3}));
  NodeId b = tape.input(Tensor::zeros({4}));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       "matmul: shape mismatch [2x3] vs [4]",
                       std::invalid_argument);
  CHECK_THROWS_AS(tape.add(a, b), std::invalid_argument);
}

TEST_CASE("derivative of x squared at 3 is 6") {
  Tape tape;
  NodeId x = tape.parameter(Tensor::scalar(3.0));
  NodeId y = tape.squared_norm(x);
  tape.backward(y);
  CHECK(tape.grad(x).data[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("gradient of a constant is zero everywhere") {
  Tape tape;
  NodeId x = tape.parameter(Tensor::from_vector({1.0, 2.0}));
  NodeId c = tape.constant(5.0);
  tape.backward(c);
  CHECK(tape.grad(x).data[0] == 0.0);
  CHECK(tape.grad(x).data[1] == 0.0);
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  NodeId x = tape.parameter(Tensor::from_vector({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("stop gradient blocks the flow exactly") {
  Tape tape;
  NodeId x = tape.parameter(Tensor::from_vector({1.0, -2.0, 0.5}));
  NodeId y = tape.parameter(Tensor::from_vector({2.0, 1.0, 1.0}));
  NodeId blocked = tape.squared_norm(tape.stop_gradient(x));
  NodeId open = tape.squared_norm(y);
  tape.backward(tape.add(blocked, open));
  for (double g : tape.grad(x).data) CHECK(g == 0.0);
  CHECK(tape.grad(y).data[0] == doctest::Approx(4.0));
}

TEST_CASE("every primitive matches central finite differences") {
  // evaluated away from relu/sqrt kinks; 100 random inputs across shapes
  Rng rng(20240815);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tensor> params;
    params.push_back(random_tensor(rng, {3, 4}));   // matrix
    params.push_back(random_tensor(rng, {4}));      // vector
    params.push_back(random_tensor(rng, {3}));      // bias
    for (Tensor& p : params)
      for (double& x : p.data)
        if (std::abs(x) < 0.05) x += 0.1;  // keep relu inputs off the kink
    const int target = static_cast<int>(rng.uniform_index(3));
    LossBuilder loss = [target](Tape& t,
                                std::span<const NodeId> ps) -> NodeId {
      NodeId v = t.matmul(ps[0], ps[1]);
      NodeId biased = t.add(v, ps[2]);
      NodeId path1 = t.sum(t.relu(biased));
      NodeId path2 = t.mean(t.tanh(v));
      NodeId path3 = t.squared_norm(t.sigmoid(biased));
      NodeId path4 = t.softmax_cross_entropy(biased, target);
      NodeId path5 = t.sum(t.log_sigmoid(t.concat(v, ps[2])));
      NodeId path6 = t.log(t.add(t.squared_norm(ps[1]), t.constant(1.0)));
      NodeId path7 = t.sqrt(t.add(t.squared_norm(ps[2]), t.constant(0.5)));
      NodeId acc = t.add(path1, t.mul_scalar(path2, 1.7));
      acc = t.add(acc, path3);
      acc = t.add(acc, path4);
      acc = t.add(acc, t.mul_scalar(path5, 0.3));
      acc = t.add(acc, path6);
      return t.add(acc, path7);
    };
    worst = std::max(worst, grad_check(loss, params, 1e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor(rng, {5});
    const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    auto grad_of = [&](double ca, double cb) {
      Tape t;
      NodeId p = t.parameter(x);
      NodeId l1 = t.squared_norm(p);
      NodeId l2 = t.sum(t.tanh(p));
      t.backward(t.add(t.mul_scalar(l1, ca), t.mul_scalar(l2, cb)));
      return t.grad(p);
    };
    const Tensor combined = grad_of(a, b);
    const Tensor g1 = grad_of(1.0, 0.0);
    const Tensor g2 = grad_of(0.0, 1.0);
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(std::abs(combined.data[i] - (a * g1.data[i] + b * g2.data[i])) <
            1e-12);
  }
}

TEST_CASE("grad_check oracle behaves on known cases") {
  // quadratic bowl: analytic gradient exact
  {
    Tensor x0 = Tensor::from_vector({1.0, -2.0, 3.0});
    LossBuilder bowl = [](Tape& t, std::span<const NodeId> ps) {
      return t.squared_norm(ps[0]);
    };
    CHECK(grad_check(bowl, std::vector<Tensor>{x0}, 1e-5) < 1e-8);
  }
  // relu probed away from the kink
  {
    Tensor x0 = Tensor::from_vector({0.7, -0.9, 1.3});
    LossBuilder relu_loss = [](Tape& t, std::span<const NodeId> ps) {
      return t.sum(t.relu(ps[0]));
    };
    CHECK(grad_check(relu_loss, std::vector<Tensor>{x0}, 1e-5) < 1e-6);
  }
  // detached input gets exactly zero gradient
  {
    Tape t;
    NodeId x = t.parameter(Tensor::from_vector({1.0, 2.0}));
    NodeId y = t.parameter(Tensor::from_vector({3.0, 4.0}));
    t.backward(t.add(t.squared_norm(t.stop_gradient(x)), t.squared_norm(y)));
    for (double g : t.grad(x).data) CHECK(g == 0.0);
  }
  // non-finite loss is an error
  {
    Tensor x0 = Tensor::scalar(3.0);
    LossBuilder nonfinite = [](Tape& t, std::span<const NodeId> ps) {
      return t.mul_scalar(ps[0], std::numeric_limits<double>::infinity());
    };
    CHECK_THROWS_AS(grad_check(nonfinite, std::vector<Tensor>{x0}, 1e-5),
                    std::runtime_error);
  }
}

TEST_CASE("log rejects non-positive inputs") {
  Tape tape;
  CHECK_THROWS_AS(tape.log(tape.constant(0.0)), std::domain_error);
  CHECK_THROWS_AS(tape.log(tape.constant(-1.0)), std::domain_error);
}
