#ifndef CSDA_SCATTER_HPP
#define CSDA_SCATTER_HPP

#include <stdexcept>

#include "csda/tensor.hpp"

namespace csda {

// Raised when one of the two mask classes has no pixels in the pooled
// batch; callers skip the discriminant term for that batch.
class EmptyClassError : public std::runtime_error {
 public:
  explicit EmptyClassError(const std::string& what) : std::runtime_error(what) {}
};

// Class-conditional moments of colorspace pixels under a binary mask.
// Means are length-d vectors, covariances d x d population (1/n) matrices.
struct ClassStats {
  Tensor mu0, mu1;
  Tensor cov0, cov1;
  std::size_t n0 = 0, n1 = 0;
};

// Between/within scatter of the two classes: s_b = u u^T with
// u = mu0 - mu1, s_w = cov0 + cov1.
struct ScatterPair {
  Tensor s_b;
  Tensor s_w;
};

// Pools pixels over the whole batch. `y` carries channels in its trailing
// dimension; `mask` has the same leading extents and values in {0,1}.
// Differentiable w.r.t. y. Throws EmptyClassError when a class is empty.
ClassStats class_stats(const Tensor& y, const Tensor& mask);

// u = mu0 - mu1 (differentiable).
Tensor mean_diff(const ClassStats& stats);

ScatterPair scatter_pair(const ClassStats& stats);

// Tr(S_w^{-1} S_b), diagnostic only (never part of a training loss).
// S_w is regularized by +1e-9 I before inversion.
double fisher_trace(const Tensor& s_w, const Tensor& s_b);
double fisher_trace(const ScatterPair& pair);

namespace detail {
// Solves A x = b for a dense d x d row-major system via partial-pivot
// Gaussian elimination. Throws std::runtime_error on a singular system.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, int d);
}  // namespace detail

}  // namespace csda

#endif  // CSDA_SCATTER_HPP
