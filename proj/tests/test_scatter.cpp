#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "csda/gradcheck.hpp"
#include "csda/rng.hpp"
#include "csda/scatter.hpp"

using namespace csda;

namespace {

// Two class-1 pixels then two class-0 pixels, 2 channels.
Tensor example_pixels() {
  return Tensor(Shape{4, 2}, {0.8, 0.2, 0.6, 0.4, 0.1, 0.9, 0.2, 0.7});
}

Tensor example_mask() { return Tensor(Shape{4}, {1, 1, 0, 0}); }

}  // namespace

TEST_CASE("class means of the worked example") {
  ClassStats stats = class_stats(example_pixels(), example_mask());
  CHECK(stats.n1 == 2);
  CHECK(stats.n0 == 2);
  CHECK(stats.mu1.data[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(stats.mu1.data[1] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(stats.mu0.data[0] == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(stats.mu0.data[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("population covariance of two points") {
  // class 1 is {(0.8,0.2),(0.6,0.4)}; one class-0 pixel keeps both classes nonempty
  Tensor y3(Shape{3, 2}, {0.8, 0.2, 0.6, 0.4, 0.5, 0.5});
  Tensor m3(Shape{3}, {1, 1, 0});
  ClassStats stats = class_stats(y3, m3);
  const std::vector<double> want{0.01, -0.01, -0.01, 0.01};
  for (int i = 0; i < 4; ++i)
    CHECK(stats.cov1.data[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("covariances are symmetric with nonnegative diagonal") {
  Rng rng(21);
  Tensor y(Shape{40, 3}, 0.0);
  for (auto& v : y.data) v = rng.uniform();
  Tensor mask(Shape{40}, 0.0);
  for (auto& v : mask.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  mask.data[0] = 0.0;
  mask.data[1] = 1.0;
  ClassStats stats = class_stats(y, mask);
  for (const Tensor* cov : {&stats.cov0, &stats.cov1}) {
    for (int i = 0; i < 3; ++i) {
      CHECK(cov->data[i * 3 + i] >= 0.0);
      for (int j = 0; j < 3; ++j)
        CHECK(cov->data[i * 3 + j] ==
              doctest::Approx(cov->data[j * 3 + i]).epsilon(1e-14));
    }
  }
  CHECK(stats.n0 + stats.n1 == 40);
}

TEST_CASE("an empty class raises EmptyClass") {
  Tensor y(Shape{3, 2}, 0.5);
  Tensor mask(Shape{3}, {1, 1, 1});
  CHECK_THROWS_AS(class_stats(y, mask), EmptyClassError);
}

TEST_CASE("scatter pair of the worked example") {
  ClassStats stats = class_stats(example_pixels(), example_mask());
  Tensor u = mean_diff(stats);
  CHECK(u.data[0] == doctest::Approx(-0.55).epsilon(1e-14));
  CHECK(u.data[1] == doctest::Approx(0.5).epsilon(1e-14));
  ScatterPair pair = scatter_pair(stats);
  const std::vector<double> want{0.3025, -0.275, -0.275, 0.25};
  for (int i = 0; i < 4; ++i)
    CHECK(pair.s_b.data[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("identical class means give a zero between-class scatter") {
  Tensor y(Shape{4, 2}, {0.3, 0.6, 0.5, 0.2, 0.3, 0.6, 0.5, 0.2});
  Tensor mask(Shape{4}, {1, 1, 0, 0});
  ScatterPair pair = scatter_pair(class_stats(y, mask));
  for (double v : pair.s_b.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("fisher_trace worked examples") {
  Tensor i2(Shape{2, 2}, {1, 0, 0, 1});
  Tensor u(Shape{2}, {3, 4});
  Tensor s_b = outer(u, u);
  CHECK(fisher_trace(i2, s_b) == doctest::Approx(25.0).epsilon(1e-9));

  Tensor zero(Shape{2, 2}, 0.0);
  CHECK(fisher_trace(i2, zero) == doctest::Approx(0.0).epsilon(1e-15));

  Tensor d22(Shape{2, 2}, {2, 0, 0, 2});
  Tensor u2(Shape{2}, {2, 0});
  CHECK(fisher_trace(d22, outer(u2, u2)) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("fisher_trace is invariant to nonsingular congruence transforms") {
  Rng rng(33);
  const int d = 3;
  Tensor u(Shape{d}, 0.0);
  for (auto& v : u.data) v = rng.uniform(-1, 1);
  Tensor s_b = outer(u, u);
  Tensor s_w(Shape{d, d}, 0.0);
  // s_w = A A^T + 100 I: a large smallest eigenvalue keeps the 1e-9 ridge
  // inside fisher_trace far below the 1e-8 invariance tolerance
  std::vector<double> a(d * d);
  for (auto& v : a) v = rng.uniform(-10, 10);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double s = i == j ? 100.0 : 0.0;
      for (int k = 0; k < d; ++k) s += a[i * d + k] * a[j * d + k];
      s_w.data[i * d + j] = s;
    }
  const double base = fisher_trace(s_w, s_b);

  int checked = 0;
  for (int trial = 0; checked < 50; ++trial) {
    REQUIRE(trial < 200);
    std::vector<double> w(d * d);
    for (auto& v : w) v = rng.uniform(-1, 1);
    // reject badly conditioned W
    double det = w[0] * (w[4] * w[8] - w[5] * w[7]) -
                 w[1] * (w[3] * w[8] - w[5] * w[6]) +
                 w[2] * (w[3] * w[7] - w[4] * w[6]);
    if (std::abs(det) < 0.3) continue;
    auto congruence = [&](const Tensor& m) {
      Tensor out(Shape{d, d}, 0.0);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double s = 0;
          for (int p = 0; p < d; ++p)
            for (int q = 0; q < d; ++q)
              s += w[p * d + i] * m.data[p * d + q] * w[q * d + j];
          out.data[i * d + j] = s;
        }
      return out;
    };
    const double t = fisher_trace(congruence(s_w), congruence(s_b));
    CHECK(std::abs(t - base) / std::abs(base) < 1e-8);
    ++checked;
  }
}

TEST_CASE("class_stats gradients match finite differences") {
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(Rng::derive(41, static_cast<std::uint64_t>(trial)));
    Tensor y(Shape{12, 2}, 0.0);
    for (auto& v : y.data) v = rng.uniform(0.1, 0.9);
    Tensor mask(Shape{12}, 0.0);
    for (auto& v : mask.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    mask.data[0] = 0.0;
    mask.data[1] = 1.0;
    auto f = [&](Tape&, const Tensor& x) {
      ClassStats stats = class_stats(x, mask);
      ScatterPair pair = scatter_pair(stats);
      return add(trace(pair.s_w), trace(pair.s_b));
    };
    worst = std::max(worst, finite_difference_check(f, y, 1e-5));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("permuting pixel order leaves ClassStats bit-identical") {
  Rng rng(55);
  const int n = 16;
  Tensor y(Shape{n, 2}, 0.0);
  for (auto& v : y.data) v = rng.uniform();
  Tensor mask(Shape{n}, 0.0);
  for (int i = 0; i < n; ++i) mask.data[i] = i % 3 == 0 ? 1.0 : 0.0;

  // reverse within each class keeps the class partition but reorders pixels
  Tensor y2 = y;
  Tensor m2 = mask;
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = n - 1 - i;
  for (int i = 0; i < n; ++i) {
    y2.data[2 * i] = y.data[2 * idx[i]];
    y2.data[2 * i + 1] = y.data[2 * idx[i] + 1];
    m2.data[i] = mask.data[idx[i]];
  }
  ClassStats a = class_stats(y, mask);
  ClassStats b = class_stats(y2, m2);
  CHECK(a.mu0.data == b.mu0.data);
  CHECK(a.mu1.data == b.mu1.data);
  CHECK(a.cov0.data == b.cov0.data);
  CHECK(a.cov1.data == b.cov1.data);
}

TEST_CASE("solve_linear rejects a singular system") {
  std::vector<double> a{1, 2, 2, 4};
  std::vector<double> b{1, 1};
  CHECK_THROWS_AS(detail::solve_linear(a, b, 2), std::runtime_error);
}
