#ifndef CSDA_GRADCHECK_HPP
#define CSDA_GRADCHECK_HPP

#include <functional>

#include "csda/tensor.hpp"

namespace csda {

// Scalar function of one grid. The callable must build its graph on the
// given tape (the tensor it receives is already a leaf of that tape) and
// return a scalar tensor. It is also invoked with untracked tensors for
// the finite-difference evaluations.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

// Compares the analytic gradient of f at x against central differences
// with step h. Returns max over coordinates of
//   |analytic - fd| / max(1, |analytic|).
// Throws std::runtime_error if f produces a non-finite value.
double finite_difference_check(const ScalarFn& f, const Tensor& x, double h);

}  // namespace csda

#endif  // CSDA_GRADCHECK_HPP
