#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "fedcl/errors.hpp"
#include "fedcl/mlp.hpp"
#include "fedcl/rng.hpp"
#include "oracles.hpp"

using namespace fedcl;

namespace {

Matrix random_inputs(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.data) x = scale * rng.normal();
  return m;
}

Batch random_batch(Rng& rng, int rows, int cols, int classes) {
  Batch batch;
  batch.inputs = random_inputs(rng, rows, cols);
  batch.labels.resize(rows);
  for (int& y : batch.labels) y = static_cast<int>(rng.below(classes));
  return batch;
}

}  // namespace

TEST_CASE("param_count matches the layout formula") {
  CHECK(param_count({{2, 3, 2}}) == 17);
  CHECK(param_count({{4, 4}}) == 20);
  CHECK(param_count({{10, 20, 20, 5}}) == 745);
}

TEST_CASE("param_count rejects invalid shapes") {
  CHECK_THROWS_AS(param_count({{5}}), ConfigError);
  CHECK_THROWS_AS(param_count({{4, 0, 2}}), ConfigError);
}

TEST_CASE("forward with zero params is uniform") {
  const MlpShape shape{{3, 4}};
  ParamVector params(param_count(shape), 0.0);
  Matrix inputs(2, 3);
  inputs.at(0, 0) = 1.5;
  inputs.at(1, 2) = -0.5;
  const auto out = forward(shape, params, inputs);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 4; ++c) {
      CHECK(out.probabilities.at(r, c) == doctest::Approx(0.25).epsilon(1e-12));
    }
  }
}

TEST_CASE("one dominant logit wins the argmax") {
  const MlpShape shape{{2, 3}};
  ParamVector params(param_count(shape), 0.0);
  // weight from input 0 to class 1 large, everything else zero
  params[2] = 50.0;  // row-major: class 1 row starts at index 2
  Matrix inputs(1, 2);
  inputs.at(0, 0) = 1.0;
  const auto out = forward(shape, params, inputs);
  CHECK(out.probabilities.at(0, 1) > 0.999);
}

TEST_CASE("forward rejects mismatched input width") {
  const MlpShape shape{{3, 2}};
  ParamVector params(param_count(shape), 0.0);
  Matrix inputs(1, 4);
  CHECK_THROWS_AS(forward(shape, params, inputs), DimensionError);
}

TEST_CASE("forward rows are valid distributions and match the oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpShape shape{{4, 6, 3}, trial % 2 ? Activation::Tanh : Activation::Relu};
    Rng init(stream_key(7, trial, 0, Stream::ParamInit));
    const ParamVector params = init_params(shape, init);
    const Matrix inputs = random_inputs(rng, 5, 4);
    const auto out = forward(shape, params, inputs);
    const auto ref = oracle::naive_forward(shape, params, inputs);
    for (int r = 0; r < 5; ++r) {
      double sum = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double p = out.probabilities.at(r, c);
        CHECK(p >= 0.0);
        sum += p;
        CHECK(std::fabs(p - ref[r][c]) <= 1e-12);
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("loss_hard basics") {
  const MlpShape shape{{2, 4}};
  SUBCASE("uniform prediction is log C") {
    ParamVector params(param_count(shape), 0.0);
    Batch batch;
    batch.inputs = Matrix(1, 2);
    batch.labels = {2};
    CHECK(loss_hard(shape, params, batch) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("confident correct prediction is ~0") {
    ParamVector params(param_count(shape), 0.0);
    params[2] = 200.0;  // class 1 row, input 0
    Batch batch;
    batch.inputs = Matrix(1, 2);
    batch.inputs.at(0, 0) = 1.0;
    batch.labels = {1};
    CHECK(loss_hard(shape, params, batch) < 1e-12);
  }
}

TEST_CASE("losses and accuracy match the oracle on seeded instances") {
  Rng rng(99);
  for (int trial = 0; trial < 8; ++trial) {
    const MlpShape shape{{3, 5, 4}, trial % 2 ? Activation::Tanh : Activation::Relu};
    Rng init(stream_key(11, trial, 0, Stream::ParamInit));
    const ParamVector params = init_params(shape, init);
    const Batch batch = random_batch(rng, 6, 3, 4);

    CHECK(std::fabs(loss_hard(shape, params, batch) -
                    oracle::naive_loss_hard(shape, params, batch)) <= 1e-12);
    CHECK(accuracy(shape, params, batch) ==
          oracle::naive_accuracy(shape, params, batch));

    const auto targets = forward(shape, params, batch.inputs);
    CHECK(std::fabs(loss_soft(shape, params, batch.inputs, targets) -
                    oracle::naive_loss_soft(shape, params, batch.inputs,
                                            targets.probabilities)) <= 1e-12);
  }
}

TEST_CASE("one-hot soft targets reduce to the hard loss and gradient") {
  Rng rng(7);
  const MlpShape shape{{3, 4, 2}, Activation::Tanh};
  Rng init(stream_key(3, 0, 0, Stream::ParamInit));
  const ParamVector params = init_params(shape, init);
  const Batch batch = random_batch(rng, 5, 3, 2);

  LogitTargets onehot{Matrix(5, 2)};
  for (int r = 0; r < 5; ++r) onehot.probabilities.at(r, batch.labels[r]) = 1.0;

  CHECK(loss_soft(shape, params, batch.inputs, onehot) ==
        doctest::Approx(loss_hard(shape, params, batch)).epsilon(1e-15));
  const auto gh = grad_hard(shape, params, batch);
  const auto gs = grad_soft(shape, params, batch.inputs, onehot);
  REQUIRE(gh.size() == gs.size());
  for (std::size_t i = 0; i < gh.size(); ++i) CHECK(gh[i] == gs[i]);
}

TEST_CASE("grad_hard matches central finite differences") {
  Rng rng(31337);
  const MlpShape shape{{3, 4, 2}, Activation::Tanh};
  Rng init(stream_key(5, 1, 0, Stream::ParamInit));
  const ParamVector params = init_params(shape, init);
  const Batch batch = random_batch(rng, 4, 3, 2);

  const auto analytic = grad_hard(shape, params, batch);
  const auto fd = oracle::fd_gradient(
      [&](const ParamVector& p) { return loss_hard(shape, p, batch); }, params);
  CHECK(oracle::max_rel_fd_error(analytic, fd) <= 1e-4);
}

TEST_CASE("grad_soft matches central finite differences") {
  Rng rng(424242);
  const MlpShape shape{{3, 4, 2}, Activation::Relu};
  Rng init(stream_key(5, 2, 0, Stream::ParamInit));
  const ParamVector params = init_params(shape, init);
  const Matrix inputs = random_inputs(rng, 4, 3);

  Rng other(stream_key(5, 3, 0, Stream::ParamInit));
  const ParamVector other_params = init_params(shape, other);
  const auto targets = forward(shape, other_params, inputs);

  const auto analytic = grad_soft(shape, params, inputs, targets);
  const auto fd = oracle::fd_gradient(
      [&](const ParamVector& p) { return loss_soft(shape, p, inputs, targets); },
      params);
  CHECK(oracle::max_rel_fd_error(analytic, fd) <= 1e-4);
}

TEST_CASE("grad_soft against own outputs vanishes") {
  Rng rng(55);
  const MlpShape shape{{4, 5, 3}, Activation::Relu};
  Rng init(stream_key(5, 4, 0, Stream::ParamInit));
  const ParamVector params = init_params(shape, init);
  const Matrix inputs = random_inputs(rng, 6, 4);
  const auto targets = forward(shape, params, inputs);
  const auto grad = grad_soft(shape, params, inputs, targets);
  CHECK(std::sqrt(norm_sq(grad)) <= 1e-10);
}

TEST_CASE("duplicating every sample leaves the mean gradient unchanged") {
  Rng rng(666);
  const MlpShape shape{{3, 4, 2}, Activation::Tanh};
  Rng init(stream_key(5, 5, 0, Stream::ParamInit));
  const ParamVector params = init_params(shape, init);
  const Batch batch = random_batch(rng, 3, 3, 2);

  Batch doubled;
  doubled.inputs = Matrix(6, 3);
  doubled.labels.resize(6);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      doubled.inputs.at(r, c) = batch.inputs.at(r, c);
      doubled.inputs.at(r + 3, c) = batch.inputs.at(r, c);
    }
    doubled.labels[r] = batch.labels[r];
    doubled.labels[r + 3] = batch.labels[r];
  }

  const auto g1 = grad_hard(shape, params, batch);
  const auto g2 = grad_hard(shape, params, doubled);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(std::fabs(g1[i] - g2[i]) <= 1e-15);
  }
}

TEST_CASE("gradient is ~zero at a (near) perfect fit") {
  // Single layer driven to saturation on its own argmax labels.
  const MlpShape shape{{2, 2}};
  ParamVector params(param_count(shape), 0.0);
  params[0] = 100.0;   // class 0 <- input 0
  params[3] = 100.0;   // class 1 <- input 1
  Batch batch;
  batch.inputs = Matrix(2, 2);
  batch.inputs.at(0, 0) = 1.0;
  batch.inputs.at(1, 1) = 1.0;
  batch.labels = {0, 1};
  CHECK(loss_hard(shape, params, batch) < 1e-12);
  const auto grad = grad_hard(shape, params, batch);
  CHECK(std::sqrt(norm_sq(grad)) < 1e-8);
}

TEST_CASE("accuracy tie-break picks the lowest class index") {
  const MlpShape shape{{2, 4}};
  ParamVector params(param_count(shape), 0.0);  // all logits equal -> class 0
  Batch batch;
  batch.inputs = Matrix(4, 2);
  batch.labels = {0, 1, 2, 3};
  CHECK(accuracy(shape, params, batch) == doctest::Approx(0.25));

  Batch zeros = batch;
  zeros.labels = {0, 0, 0, 0};
  CHECK(accuracy(shape, params, zeros) == doctest::Approx(1.0));
}

TEST_CASE("init_params is deterministic per stream and within bounds") {
  const MlpShape shape{{6, 8, 3}};
  Rng a(stream_key(42, 1, 0, Stream::ParamInit));
  Rng b(stream_key(42, 1, 0, Stream::ParamInit));
  const ParamVector pa = init_params(shape, a);
  const ParamVector pb = init_params(shape, b);
  CHECK(pa == pb);

  const double limit0 = std::sqrt(6.0 / (6 + 8));
  for (std::size_t i = 0; i < 48; ++i) {
    CHECK(std::fabs(pa[i]) <= limit0);
  }
  // biases of layer 0
  for (std::size_t i = 48; i < 56; ++i) CHECK(pa[i] == 0.0);
}
