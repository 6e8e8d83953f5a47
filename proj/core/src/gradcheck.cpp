#include "csda/gradcheck.hpp"

#include <cmath>

namespace csda {

namespace {

double eval_scalar(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Tensor y = f(tape, x);  // untracked input: graph stays empty
  const double v = y.item();
  if (!std::isfinite(v))
    throw std::runtime_error("finite_difference_check: f returned non-finite value");
  return v;
}

}  // namespace

double finite_difference_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: h must be > 0");

  Tape tape;
  Tensor leaf = tape.leaf(x);
  Tensor loss = f(tape, leaf);
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("finite_difference_check: f returned non-finite value");
  tape.backward(loss);
  const std::vector<double> analytic = tape.grad(leaf);

  double max_err = 0.0;
  Tensor probe = x;
  probe.tape = nullptr;
  probe.node = -1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.data[i];
    probe.data[i] = xi + h;
    const double fp = eval_scalar(f, probe);
    probe.data[i] = xi - h;
    const double fm = eval_scalar(f, probe);
    probe.data[i] = xi;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) /
                       std::max(1.0, std::abs(analytic[i]));
    if (err > max_err) max_err = err;
  }
  return max_err;
}

}  // namespace csda
