#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "mdmm/net.hpp"

using namespace mdmm;

namespace {

// Independent dense-math oracle: recompute the forward pass coordinate by
// coordinate from the flat parameter layout.
Matrix forward_oracle(const NetSpec& spec, std::span<const double> params, const Matrix& batch) {
  Matrix act = batch;
  std::size_t offset = 0;
  const std::size_t n_layers = spec.layer_dims.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int in = spec.layer_dims[l];
    const int out = spec.layer_dims[l + 1];
    Matrix next(act.rows(), out);
    for (long r = 0; r < act.rows(); ++r) {
      for (int j = 0; j < out; ++j) {
        double sum = params[offset + static_cast<std::size_t>(in) * out + j];  // bias
        for (int i = 0; i < in; ++i) {
          sum += act(r, i) * params[offset + static_cast<std::size_t>(j) * in + i];
        }
        next(r, j) = sum;
      }
    }
    offset += static_cast<std::size_t>(in + 1) * out;
    if (l + 1 < n_layers) {
      if (spec.activation == Activation::Tanh) {
        next = next.array().tanh();
      } else {
        next = next.cwiseMax(0.0);
      }
    }
    act = std::move(next);
  }
  return act;
}

// Central finite differences of a scalar loss over every parameter.
template <typename LossFn>
std::vector<double> finite_difference_grads(Net& net, LossFn&& loss, double h = 1e-5) {
  std::vector<double> fd(net.param_count());
  auto params = net.params();
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    fd[i] = (up - down) / (2 * h);
  }
  return fd;
}

void check_close(double got, double want, double rel = 1e-4, double abs_floor = 1e-8) {
  const double tol = std::max(abs_floor, rel * std::max(std::abs(got), std::abs(want)));
  CHECK(std::abs(got - want) <= tol);
}

}  // namespace

TEST_CASE("zero parameters map any batch to zero") {
  Net net({{3, 5, 2}, Activation::Tanh, 1});
  std::fill(net.params().begin(), net.params().end(), 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-2, 2);
  Matrix batch(4, 3);
  for (long i = 0; i < batch.size(); ++i) batch(i / 3, i % 3) = dist(rng);
  CHECK(net.forward(batch).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity single-layer net passes input through") {
  Net net({{3, 3}, Activation::Tanh, 1});
  std::fill(net.params().begin(), net.params().end(), 0.0);
  auto p = net.params();
  for (int i = 0; i < 3; ++i) p[static_cast<std::size_t>(i) * 3 + i] = 1.0;  // column-major W = I
  Matrix batch(2, 3);
  batch << 1, 2, 3, -1, 0.5, 4;
  const Matrix out = net.forward(batch);
  CHECK((out - batch).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("forward matches the hand-rolled oracle on a random 4-8-4 net") {
  NetSpec spec{{4, 8, 4}, Activation::Tanh, 42};
  Net net(spec);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-1, 1);
  Matrix batch(6, 4);
  for (long i = 0; i < batch.rows(); ++i) {
    for (long j = 0; j < 4; ++j) batch(i, j) = dist(rng);
  }
  const Matrix got = net.forward(batch);
  const Matrix want = forward_oracle(spec, net.params(), batch);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward rejects mismatched batch width") {
  Net net({{4, 8, 4}, Activation::Tanh, 0});
  CHECK_THROWS_AS(net.forward(Matrix::Zero(2, 3)), DimensionMismatch);
}

TEST_CASE("backward before forward is an error") {
  Net net({{4, 8, 4}, Activation::Tanh, 0});
  CHECK_THROWS_AS(net.backward(Matrix::Zero(2, 4)), BackwardBeforeForward);
}

TEST_CASE("zero upstream gradient leaves the buffer zero") {
  Net net({{4, 8, 4}, Activation::Tanh, 3});
  net.forward(Matrix::Ones(2, 4));
  net.clear_grads();
  net.backward(Matrix::Zero(2, 4));
  for (double g : net.grads()) CHECK(g == 0.0);
}

TEST_CASE("linear 1-1 net has weight grad x and bias grad 1") {
  Net net({{1, 1}, Activation::Tanh, 0});
  net.params()[0] = 0.7;
  net.params()[1] = -0.2;
  Matrix x(1, 1);
  x << 2.5;
  net.forward(x);
  net.clear_grads();
  net.backward(Matrix::Ones(1, 1));  // loss = output
  CHECK(net.grads()[0] == doctest::Approx(2.5));
  CHECK(net.grads()[1] == doctest::Approx(1.0));
}

TEST_CASE("backward matches central finite differences on random nets") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dist(-1.5, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    const int in = 2 + static_cast<int>(rng() % 4);
    const int hidden = 2 + static_cast<int>(rng() % 6);
    const int out = 1 + static_cast<int>(rng() % 3);
    const Activation act = (trial % 3 == 0) ? Activation::ReLU : Activation::Tanh;
    NetSpec spec{{in, hidden, out}, act, rng()};
    Net net(spec);
    Matrix batch(3, in);
    for (long i = 0; i < batch.rows(); ++i) {
      for (int j = 0; j < in; ++j) batch(i, j) = dist(rng);
    }
    Matrix target(3, out);
    for (long i = 0; i < target.rows(); ++i) {
      for (int j = 0; j < out; ++j) target(i, j) = dist(rng);
    }

    // scalar loss: 0.5 * sum((y - target)^2)
    auto loss = [&] {
      const Matrix y = net.forward(batch);
      return 0.5 * (y - target).squaredNorm();
    };
    const Matrix y = net.forward(batch);
    net.clear_grads();
    net.backward(y - target);
    const auto fd = finite_difference_grads(net, loss);
    for (std::size_t i = 0; i < fd.size(); ++i) check_close(net.grads()[i], fd[i]);
  }
}

TEST_CASE("backward is linear in the upstream gradient") {
  Net net({{4, 6, 3}, Activation::Tanh, 9});
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> dist(-1, 1);
  Matrix batch(5, 4), g1(5, 3), g2(5, 3);
  for (long i = 0; i < batch.rows(); ++i) {
    for (int j = 0; j < 4; ++j) batch(i, j) = dist(rng);
    for (int j = 0; j < 3; ++j) {
      g1(i, j) = dist(rng);
      g2(i, j) = dist(rng);
    }
  }
  net.forward(batch);
  net.clear_grads();
  net.backward(g1 + g2);
  std::vector<double> combined(net.grads().begin(), net.grads().end());

  net.clear_grads();
  net.backward(g1);
  std::vector<double> a(net.grads().begin(), net.grads().end());
  net.clear_grads();
  net.backward(g2);
  std::vector<double> b(net.grads().begin(), net.grads().end());

  for (std::size_t i = 0; i < combined.size(); ++i) {
    CHECK(std::abs(combined[i] - (a[i] + b[i])) <= 1e-12);
  }
}

TEST_CASE("gradients accumulate until cleared") {
  Net net({{2, 3, 1}, Activation::Tanh, 4});
  const Matrix batch = Matrix::Ones(2, 2);
  net.forward(batch);
  net.clear_grads();
  net.backward(Matrix::Ones(2, 1));
  std::vector<double> once(net.grads().begin(), net.grads().end());
  net.backward(Matrix::Ones(2, 1));
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(net.grads()[i] == doctest::Approx(2 * once[i]).epsilon(1e-14));
  }
}

TEST_CASE("AdamW: zero gradient and zero decay leave parameters unchanged") {
  Net net({{2, 2}, Activation::Tanh, 8});
  std::vector<double> before(net.params().begin(), net.params().end());
  AdamW opt;
  opt.weight_decay = 0.0;
  std::vector<double> zeros(net.param_count(), 0.0);
  opt.step(net.params(), zeros);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(net.params()[i] == before[i]);
  CHECK(opt.step_count == 1);
}

TEST_CASE("AdamW first step moves by approximately -step_size * sign(g)") {
  std::vector<double> params{1.0, -2.0, 0.5};
  std::vector<double> grads{0.3, -1.7, 2.2};
  AdamW opt;
  opt.weight_decay = 0.0;
  opt.step_size = 1e-3;
  opt.step(params, grads);
  CHECK(params[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-4));
  CHECK(params[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-4));
  CHECK(params[2] == doctest::Approx(0.5 - 1e-3).epsilon(1e-4));
}

TEST_CASE("AdamW decreases a quadratic objective") {
  std::vector<double> theta{1.0};
  AdamW opt;
  opt.step_size = 0.05;
  opt.weight_decay = 0.0;
  double prev = theta[0] * theta[0];
  for (int i = 0; i < 10; ++i) {
    std::vector<double> g{2.0 * theta[0]};
    opt.step(theta, g);
    const double now = theta[0] * theta[0];
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("AdamW rejects NaN gradients and mismatched sizes") {
  std::vector<double> params{1.0, 2.0};
  AdamW opt;
  std::vector<double> bad{0.0, std::nan("")};
  CHECK_THROWS_AS(opt.step(params, bad), NonFiniteValue);
  std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(opt.step(params, wrong), DimensionMismatch);
}

TEST_CASE("identical seeds give bitwise-identical training") {
  auto train = [](std::uint64_t seed) {
    Net net({{3, 5, 2}, Activation::Tanh, seed});
    AdamW opt;
    opt.step_size = 1e-2;
    Matrix batch = Matrix::Ones(4, 3);
    for (int k = 0; k < 25; ++k) {
      const Matrix y = net.forward(batch);
      net.clear_grads();
      net.backward(y);
      opt.step(net.params(), net.grads());
    }
    return std::vector<double>(net.params().begin(), net.params().end());
  };
  const auto a = train(77);
  const auto b = train(77);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("snapshot round trip preserves spec and parameters") {
  Net net({{4, 8, 2}, Activation::ReLU, 123});
  const auto path = std::filesystem::temp_directory_path() / "mdmm_snapshot_test.bin";
  save_snapshot(path.string(), net, 321);
  const Snapshot snap = load_snapshot(path.string());
  CHECK(snap.spec.layer_dims == net.spec().layer_dims);
  CHECK(snap.spec.activation == Activation::ReLU);
  CHECK(snap.spec.init_seed == 123);
  CHECK(snap.step_count == 321);
  REQUIRE(snap.params.size() == net.param_count());
  for (std::size_t i = 0; i < snap.params.size(); ++i) CHECK(snap.params[i] == net.params()[i]);
  std::filesystem::remove(path);
}
