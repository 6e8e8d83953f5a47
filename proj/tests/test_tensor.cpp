#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "csda/csdt.hpp"
#include "csda/gradcheck.hpp"
#include "csda/nn_ops.hpp"
#include "csda/rng.hpp"
#include "csda/tensor.hpp"

using namespace csda;

namespace {

Tensor random_tensor(Rng& rng, const Shape& dims, double lo = -1.0, double hi = 1.0) {
  Tensor t(dims, 0.0);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Max relative gradient error of f over `trials` random inputs.
double op_gradcheck(const ScalarFn& f, const Shape& dims, int trials,
                    double lo = -1.0, double hi = 1.0, std::uint64_t seed = 11) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(t)));
    const Tensor x = random_tensor(rng, dims, lo, hi);
    worst = std::max(worst, finite_difference_check(f, x, 1e-5));
  }
  return worst;
}

}  // namespace

TEST_CASE("trace of a 2x2 matrix") {
  Tensor m(Shape{2, 2}, {1, 2, 3, 4});
  CHECK(trace(m).item() == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("hadamard elementwise product") {
  Tensor a(Shape{2, 2}, {1, -1, 2, 0});
  Tensor b(Shape{2, 2}, {3, 3, 3, 3});
  Tensor c = hadamard(a, b);
  CHECK(c.data == std::vector<double>{3, -3, 6, 0});
}

TEST_CASE("sigmoid at zero") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("backward through a product") {
  Tape tape;
  Tensor x = tape.leaf(Shape{1}, {2.0});
  Tensor y = tape.leaf(Shape{1}, {3.0});
  Tensor loss = hadamard(x, y);
  tape.backward(loss);
  CHECK(tape.grad(x)[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(tape.grad(y)[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("backward through sigmoid at zero") {
  Tape tape;
  Tensor x = tape.leaf(Shape{1}, {0.0});
  Tensor loss = sigmoid(x);
  tape.backward(loss);
  CHECK(tape.grad(x)[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("backward through trace of an outer product") {
  Tape tape;
  Tensor u = tape.leaf(Shape{2}, {3.0, 4.0});
  Tensor loss = trace(outer(u, u));
  tape.backward(loss);
  CHECK(tape.grad(u)[0] == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(tape.grad(u)[1] == doctest::Approx(8.0).epsilon(1e-14));
}

TEST_CASE("gradients accumulate across two uses of one leaf") {
  Tape tape;
  Tensor x = tape.leaf(Shape{1}, {1.5});
  Tensor loss = add(x, x);
  tape.backward(loss);
  CHECK(tape.grad(x)[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("shape mismatch names the op and both shapes") {
  Tensor a(Shape{2, 2}, 0.0);
  Tensor b(Shape{3}, 0.0);
  CHECK_THROWS_WITH_AS(add(a, b),
                       doctest::Contains("add"), std::invalid_argument);
  try {
    add(a, b);
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,2]") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
}

TEST_CASE("log of a non-positive value throws") {
  CHECK_THROWS_AS(log_op(Tensor::scalar(0.0)), std::domain_error);
  CHECK_THROWS_AS(log_op(Tensor::scalar(-1.0)), std::domain_error);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape tape;
  Tensor x = tape.leaf(Shape{2}, {1.0, 2.0});
  Tensor y = add(x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("forward results are bit-identical across runs") {
  Rng rng(3);
  Tensor a = random_tensor(rng, Shape{4, 4});
  Tensor b = random_tensor(rng, Shape{4, 4});
  Tensor r1 = matmul(a, b);
  Tensor r2 = matmul(a, b);
  CHECK(r1.data == r2.data);
}

TEST_CASE("finite differences on a quadratic are nearly exact") {
  Rng rng(5);
  Tensor x = random_tensor(rng, Shape{8});
  auto f = [](Tape&, const Tensor& v) { return trace(outer(v, v)); };
  CHECK(finite_difference_check(f, x, 1e-5) < 1e-6);
}

TEST_CASE("every elementwise and reduction op passes gradcheck on 20 inputs") {
  Rng fixed(99);
  const Tensor other = random_tensor(fixed, Shape{3, 4});

  auto wrap = [](auto op) {
    return [op](Tape&, const Tensor& x) { return mean_all(op(x)); };
  };

  CHECK(op_gradcheck(wrap([&](const Tensor& x) { return add(x, other); }),
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck(wrap([&](const Tensor& x) { return sub(x, other); }),
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck(wrap([&](const Tensor& x) { return sub(other, x); }),
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck(wrap([](const Tensor& x) { return scalar_mul(x, -2.5); }),
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck(wrap([](const Tensor& x) { return add_scalar(x, 0.7); }),
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck(wrap([&](const Tensor& x) { return hadamard(x, other); }),
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck(wrap([](const Tensor& x) { return sigmoid(x); }),
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck(wrap([](const Tensor& x) { return log_op(x); }),
                     Shape{3, 4}, 20, 0.2, 2.0) < 1e-4);
  CHECK(op_gradcheck(wrap([](const Tensor& x) { return pow_const(x, 2.5); }),
                     Shape{3, 4}, 20, 0.2, 1.0) < 1e-4);
  CHECK(op_gradcheck([](Tape&, const Tensor& x) { return mean_all(x); },
                     Shape{3, 4}, 20) < 1e-4);
  // relu: keep inputs away from the kink
  {
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      Rng rng(Rng::derive(31, static_cast<std::uint64_t>(t)));
      Tensor x(Shape{3, 4}, 0.0);
      for (auto& v : x.data) {
        v = rng.uniform(-1.0, 1.0);
        if (std::abs(v) < 1e-2) v += (v < 0 ? -1.0 : 1.0) * 2e-2;
      }
      auto f = [](Tape&, const Tensor& v) { return mean_all(relu(v)); };
      worst = std::max(worst, finite_difference_check(f, x, 1e-5));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("matrix ops pass gradcheck on 20 inputs") {
  Rng fixed(123);
  const Tensor m = random_tensor(fixed, Shape{4, 3});
  const Tensor v = random_tensor(fixed, Shape{4});

  CHECK(op_gradcheck([&](Tape&, const Tensor& x) { return mean_all(matmul(x, m)); },
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck([&](Tape&, const Tensor& x) { return mean_all(matmul(m, x)); },
                     Shape{3, 4}, 20) < 1e-4);
  CHECK(op_gradcheck([&](Tape&, const Tensor& x) { return mean_all(outer(x, v)); },
                     Shape{3}, 20) < 1e-4);
  CHECK(op_gradcheck([&](Tape&, const Tensor& x) { return mean_all(outer(v, x)); },
                     Shape{3}, 20) < 1e-4);
  CHECK(op_gradcheck([](Tape&, const Tensor& x) { return trace(x); },
                     Shape{4, 4}, 20) < 1e-4);
  const Tensor half = random_tensor(fixed, Shape{2, 3, 3, 2});
  CHECK(op_gradcheck(
            [&](Tape&, const Tensor& x) {
              return mean_all(concat_channels(x, half));
            },
            Shape{2, 3, 3, 2}, 20) < 1e-4);
  CHECK(op_gradcheck(
            [&](Tape&, const Tensor& x) {
              return mean_all(concat_channels(half, x));
            },
            Shape{2, 3, 3, 2}, 20) < 1e-4);
}

TEST_CASE("spatial ops pass gradcheck on 20 inputs") {
  Rng fixed(7);
  const Tensor w = random_tensor(fixed, Shape{3, 3, 2, 3});
  const Tensor b = random_tensor(fixed, Shape{3});
  const Tensor wt = random_tensor(fixed, Shape{2, 2, 2, 3});
  const Tensor x0 = random_tensor(fixed, Shape{1, 4, 4, 2});

  CHECK(op_gradcheck(
            [&](Tape&, const Tensor& x) { return mean_all(conv2d(x, w, b)); },
            Shape{1, 4, 4, 2}, 20) < 1e-4);
  CHECK(op_gradcheck(
            [&](Tape&, const Tensor& wv) { return mean_all(conv2d(x0, wv, b)); },
            Shape{3, 3, 2, 3}, 20) < 1e-4);
  CHECK(op_gradcheck(
            [&](Tape&, const Tensor& bv) { return mean_all(conv2d(x0, w, bv)); },
            Shape{3}, 20) < 1e-4);
  CHECK(op_gradcheck(
            [&](Tape&, const Tensor& x) {
              return mean_all(conv_transpose2d_x2(x, wt, b));
            },
            Shape{1, 4, 4, 2}, 20) < 1e-4);
  CHECK(op_gradcheck(
            [&](Tape&, const Tensor& wv) {
              return mean_all(conv_transpose2d_x2(x0, wv, b));
            },
            Shape{2, 2, 2, 3}, 20) < 1e-4);

  // maxpool: regenerate windows whose top two values nearly tie
  {
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      Rng rng(Rng::derive(77, static_cast<std::uint64_t>(t)));
      Tensor x(Shape{1, 4, 4, 2}, 0.0);
      for (std::size_t i = 0; i < x.data.size(); ++i)
        x.data[i] = rng.uniform() + 1e-3 * static_cast<double>(i % 7);
      auto f = [](Tape&, const Tensor& v) { return mean_all(maxpool2x2(v)); };
      worst = std::max(worst, finite_difference_check(f, x, 1e-6));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("conv2d output shape and channel mismatch error") {
  Rng rng(1);
  Tensor x = random_tensor(rng, Shape{2, 6, 6, 3});
  Tensor w = random_tensor(rng, Shape{3, 3, 3, 5});
  Tensor b(Shape{5}, 0.0);
  Tensor y = conv2d(x, w, b);
  CHECK(y.dims == Shape{2, 6, 6, 5});
  Tensor w_bad = random_tensor(rng, Shape{3, 3, 4, 5});
  CHECK_THROWS_AS(conv2d(x, w_bad, b), std::invalid_argument);
}

TEST_CASE("maxpool2x2 halves spatial extents and picks window maxima") {
  Tensor x(Shape{1, 2, 2, 1}, {0.1, 0.9, 0.3, 0.2});
  Tensor y = maxpool2x2(x);
  CHECK(y.dims == Shape{1, 1, 1, 1});
  CHECK(y.data[0] == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("csdt round-trip is bit-exact at 32-bit precision") {
  Rng rng(9);
  Tensor t = random_tensor(rng, Shape{2, 3, 4});
  std::stringstream ss;
  write_csdt(ss, t);
  Tensor back = read_csdt(ss);
  REQUIRE(back.dims == t.dims);
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(static_cast<float>(back.data[i]) == static_cast<float>(t.data[i]));

  // second round trip reproduces the payload exactly
  std::stringstream s1, s2;
  write_csdt(s1, back);
  Tensor again = read_csdt(s1);
  write_csdt(s2, again);
  std::stringstream s3;
  write_csdt(s3, back);
  CHECK(s2.str() == s3.str());
}

TEST_CASE("csdt rejects a bad magic") {
  std::stringstream ss;
  ss << "NOPE";
  CHECK_THROWS_AS(read_csdt(ss), std::runtime_error);
}
