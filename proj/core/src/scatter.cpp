#include "csda/scatter.hpp"

#include <cmath>

namespace csda {

namespace {

// Exact accumulator (Shewchuk partials, as in Python's fsum). The result
// is the correctly rounded sum, so it does not depend on the order the
// terms arrive in; class_stats relies on this for its bit-identical
// permutation invariant.
class ExactSum {
 public:
  void add(double x) {
    std::size_t used = 0;
    for (std::size_t i = 0; i < partials_.size(); ++i) {
      double y = partials_[i];
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[used++] = lo;
      x = hi;
    }
    partials_.resize(used);
    partials_.push_back(x);
  }

  double value() const {
    double s = 0.0;
    for (double p : partials_) s += p;
    return s;
  }

 private:
  std::vector<double> partials_;
};

// Masked moment node: mean and covariance of the selected pixels, with
// custom backward rules (the mean-dependence inside the covariance
// cancels because centered values sum to zero).
struct ClassMoments {
  Tensor mu;
  Tensor cov;
};

ClassMoments masked_moments(const Tensor& y, const std::vector<std::size_t>& pixels,
                            int d) {
  const std::size_t n = pixels.size();
  std::vector<ExactSum> mu_sum(static_cast<std::size_t>(d));
  for (std::size_t k : pixels)
    for (int j = 0; j < d; ++j)
      mu_sum[static_cast<std::size_t>(j)].add(y.data[k * d + j]);
  std::vector<double> mu(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j)
    mu[static_cast<std::size_t>(j)] =
        mu_sum[static_cast<std::size_t>(j)].value() / static_cast<double>(n);

  // centered values, reused by both forward cov and backward
  std::vector<double> centered(n * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      centered[i * d + j] = y.data[pixels[i] * d + j] - mu[static_cast<std::size_t>(j)];

  std::vector<ExactSum> cov_sum(static_cast<std::size_t>(d) * d);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      const double ca = centered[i * d + a];
      for (int b = 0; b < d; ++b)
        cov_sum[static_cast<std::size_t>(a) * d + b].add(ca * centered[i * d + b]);
    }
  std::vector<double> cov(static_cast<std::size_t>(d) * d);
  for (std::size_t idx = 0; idx < cov.size(); ++idx)
    cov[idx] = cov_sum[idx].value() / static_cast<double>(n);

  ClassMoments out;
  if (!y.tracked()) {
    out.mu = Tensor(Shape{d}, std::move(mu));
    out.cov = Tensor(Shape{d, d}, std::move(cov));
    return out;
  }
  Tape& tape = *y.tape;
  const int ny = y.node;
  out.mu = tape.record(Shape{d}, std::move(mu),
                       [ny, d, n, pixels](Tape& t, const std::vector<double>& g) {
                         const double inv = 1.0 / static_cast<double>(n);
                         for (std::size_t k : pixels)
                           for (int j = 0; j < d; ++j)
                             t.accumulate(ny, k * d + static_cast<std::size_t>(j),
                                          g[static_cast<std::size_t>(j)] * inv);
                       });
  out.cov = tape.record(
      Shape{d, d}, std::move(cov),
      [ny, d, n, pixels, centered = std::move(centered)](Tape& t,
                                                         const std::vector<double>& g) {
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) {
            double s = 0.0;
            for (int b = 0; b < d; ++b)
              s += (g[static_cast<std::size_t>(c) * d + b] +
                    g[static_cast<std::size_t>(b) * d + c]) *
                   centered[i * d + b];
            t.accumulate(ny, pixels[i] * d + static_cast<std::size_t>(c), s * inv);
          }
      });
  return out;
}

}  // namespace

ClassStats class_stats(const Tensor& y, const Tensor& mask) {
  if (y.rank() < 2)
    throw std::invalid_argument("class_stats: y must carry a channel axis, got " +
                                shape_str(y.dims));
  const int d = y.dims.back();
  const std::size_t pixels = y.size() / static_cast<std::size_t>(d);
  if (mask.size() != pixels)
    throw std::invalid_argument("op class_stats: shape mismatch " + shape_str(y.dims) +
                                " vs " + shape_str(mask.dims));

  std::vector<std::size_t> idx0, idx1;
  for (std::size_t k = 0; k < pixels; ++k) {
    const double m = mask.data[k];
    if (m == 0.0)
      idx0.push_back(k);
    else if (m == 1.0)
      idx1.push_back(k);
    else
      throw std::invalid_argument("class_stats: mask value not in {0,1}: " +
                                  std::to_string(m));
  }
  if (idx0.empty()) throw EmptyClassError("class_stats: class 0 empty in pooled batch");
  if (idx1.empty()) throw EmptyClassError("class_stats: class 1 empty in pooled batch");

  ClassMoments m0 = masked_moments(y, idx0, d);
  ClassMoments m1 = masked_moments(y, idx1, d);
  ClassStats stats;
  stats.mu0 = std::move(m0.mu);
  stats.cov0 = std::move(m0.cov);
  stats.mu1 = std::move(m1.mu);
  stats.cov1 = std::move(m1.cov);
  stats.n0 = idx0.size();
  stats.n1 = idx1.size();
  return stats;
}

Tensor mean_diff(const ClassStats& stats) { return sub(stats.mu0, stats.mu1); }

ScatterPair scatter_pair(const ClassStats& stats) {
  Tensor u = sub(stats.mu0, stats.mu1);
  ScatterPair pair;
  pair.s_b = outer(u, u);
  pair.s_w = add(stats.cov0, stats.cov1);
  return pair;
}

namespace detail {

std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, int d) {
  for (int col = 0; col < d; ++col) {
    int pivot = col;
    for (int r = col + 1; r < d; ++r)
      if (std::abs(a[static_cast<std::size_t>(r) * d + col]) >
          std::abs(a[static_cast<std::size_t>(pivot) * d + col]))
        pivot = r;
    if (std::abs(a[static_cast<std::size_t>(pivot) * d + col]) < 1e-30)
      throw std::runtime_error("solve_linear: singular matrix");
    if (pivot != col) {
      for (int c = 0; c < d; ++c)
        std::swap(a[static_cast<std::size_t>(pivot) * d + c],
                  a[static_cast<std::size_t>(col) * d + c]);
      std::swap(b[static_cast<std::size_t>(pivot)], b[static_cast<std::size_t>(col)]);
    }
    const double diag = a[static_cast<std::size_t>(col) * d + col];
    for (int r = col + 1; r < d; ++r) {
      const double f = a[static_cast<std::size_t>(r) * d + col] / diag;
      if (f == 0.0) continue;
      for (int c = col; c < d; ++c)
        a[static_cast<std::size_t>(r) * d + c] -=
            f * a[static_cast<std::size_t>(col) * d + c];
      b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
    }
  }
  std::vector<double> x(static_cast<std::size_t>(d));
  for (int r = d - 1; r >= 0; --r) {
    double s = b[static_cast<std::size_t>(r)];
    for (int c = r + 1; c < d; ++c)
      s -= a[static_cast<std::size_t>(r) * d + c] * x[static_cast<std::size_t>(c)];
    x[static_cast<std::size_t>(r)] = s / a[static_cast<std::size_t>(r) * d + r];
  }
  return x;
}

}  // namespace detail

double fisher_trace(const Tensor& s_w, const Tensor& s_b) {
  if (s_w.rank() != 2 || s_w.dims != s_b.dims || s_w.dims[0] != s_w.dims[1])
    throw std::invalid_argument("fisher_trace: shape mismatch " + shape_str(s_w.dims) +
                                " vs " + shape_str(s_b.dims));
  const int d = s_w.dims[0];
  std::vector<double> reg = s_w.data;
  for (int i = 0; i < d; ++i) reg[static_cast<std::size_t>(i) * d + i] += 1e-9;
  // Tr(S_w^{-1} S_b) = sum_i (S_w^{-1} S_b)_{ii}: solve per column of S_b.
  double tr = 0.0;
  for (int col = 0; col < d; ++col) {
    std::vector<double> rhs(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r)
      rhs[static_cast<std::size_t>(r)] = s_b.data[static_cast<std::size_t>(r) * d + col];
    std::vector<double> x = detail::solve_linear(reg, std::move(rhs), d);
    tr += x[static_cast<std::size_t>(col)];
  }
  return tr;
}

double fisher_trace(const ScatterPair& pair) { return fisher_trace(pair.s_w, pair.s_b); }

}  // namespace csda
