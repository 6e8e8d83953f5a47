#include "csda/tensor.hpp"

#include <cmath>
#include <sstream>

namespace csda {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

namespace {

void check_shape(const Shape& s) {
  if (s.empty() || s.size() > 4)
    throw std::invalid_argument("tensor rank must be 1-4, got " + shape_str(s));
  for (int d : s)
    if (d <= 0) throw std::invalid_argument("nonpositive extent in " + shape_str(s));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dims != b.dims)
    throw std::invalid_argument(std::string("op ") + op + ": shape mismatch " +
                                shape_str(a.dims) + " vs " + shape_str(b.dims));
}

Tape* common_tape(const Tensor& a, const Tensor& b) {
  if (a.tracked() && b.tracked() && a.tape != b.tape)
    throw std::invalid_argument("operands belong to different tapes");
  if (a.tracked()) return a.tape;
  if (b.tracked()) return b.tape;
  return nullptr;
}

Tensor finish(Tape* tape, Shape dims, std::vector<double> data,
              Tape::BackwardFn fn) {
  if (!tape) return Tensor(std::move(dims), std::move(data));
  return tape->record(std::move(dims), std::move(data), std::move(fn));
}

}  // namespace

Tensor::Tensor(Shape d, std::vector<double> v) : dims(std::move(d)), data(std::move(v)) {
  check_shape(dims);
  if (shape_numel(dims) != data.size())
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(dims));
}

Tensor::Tensor(Shape d, double fill) : dims(std::move(d)) {
  check_shape(dims);
  data.assign(shape_numel(dims), fill);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar " + shape_str(dims));
  return data[0];
}

Tensor Tape::leaf(Shape dims, std::vector<double> data) {
  return record(std::move(dims), std::move(data), nullptr);
}

Tensor Tape::leaf(const Tensor& value) {
  return record(value.dims, value.data, nullptr);
}

Tensor Tape::record(Shape dims, std::vector<double> data, BackwardFn fn) {
  Tensor t(std::move(dims), std::move(data));
  nodes_.push_back(Node{std::move(fn), std::vector<double>(t.size(), 0.0)});
  t.tape = this;
  t.node = static_cast<int>(nodes_.size()) - 1;
  return t;
}

void Tape::accumulate(int node, const std::vector<double>& g) {
  auto& dst = nodes_[static_cast<std::size_t>(node)].grad;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Tape::accumulate(int node, std::size_t index, double g) {
  nodes_[static_cast<std::size_t>(node)].grad[index] += g;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.tracked() || loss.tape != this)
    throw std::invalid_argument("backward: loss is not tracked by this tape");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(loss.dims));
  if (backward_done_)
    throw std::logic_error("backward: tape already differentiated");
  backward_done_ = true;
  nodes_[static_cast<std::size_t>(loss.node)].grad[0] = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward) n.backward(*this, n.grad);
  }
}

const std::vector<double>& Tape::grad(const Tensor& t) const {
  if (!t.tracked() || t.tape != this)
    throw std::invalid_argument("grad: tensor is not tracked by this tape");
  return grad(t.node);
}

const std::vector<double>& Tape::grad(int node) const {
  return nodes_[static_cast<std::size_t>(node)].grad;
}

// ---- elementwise and linear-algebra ops --------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tape* tape = common_tape(a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] + b.data[i];
  int na = a.node, nb = b.node;
  return finish(tape, a.dims, std::move(out),
                [na, nb](Tape& t, const std::vector<double>& g) {
                  if (na >= 0) t.accumulate(na, g);
                  if (nb >= 0) t.accumulate(nb, g);
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  Tape* tape = common_tape(a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] - b.data[i];
  int na = a.node, nb = b.node;
  return finish(tape, a.dims, std::move(out),
                [na, nb](Tape& t, const std::vector<double>& g) {
                  if (na >= 0) t.accumulate(na, g);
                  if (nb >= 0)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      t.accumulate(nb, i, -g[i]);
                });
}

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] * c;
  int na = a.node;
  return finish(a.tape, a.dims, std::move(out),
                [na, c](Tape& t, const std::vector<double>& g) {
                  if (na >= 0)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      t.accumulate(na, i, g[i] * c);
                });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] + c;
  int na = a.node;
  return finish(a.tape, a.dims, std::move(out),
                [na](Tape& t, const std::vector<double>& g) {
                  if (na >= 0) t.accumulate(na, g);
                });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same("hadamard", a, b);
  Tape* tape = common_tape(a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] * b.data[i];
  int na = a.node, nb = b.node;
  std::vector<double> av = na >= 0 || nb >= 0 ? a.data : std::vector<double>();
  std::vector<double> bv = av.empty() ? std::vector<double>() : b.data;
  return finish(tape, a.dims, std::move(out),
                [na, nb, av = std::move(av), bv = std::move(bv)](
                    Tape& t, const std::vector<double>& g) {
                  if (na >= 0)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      t.accumulate(na, i, g[i] * bv[i]);
                  if (nb >= 0)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      t.accumulate(nb, i, g[i] * av[i]);
                });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dims[1] != b.dims[0])
    throw std::invalid_argument("op matmul: shape mismatch " + shape_str(a.dims) +
                                " vs " + shape_str(b.dims));
  Tape* tape = common_tape(a, b);
  const int m = a.dims[0], k = a.dims[1], n = b.dims[1];
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      const double av = a.data[static_cast<std::size_t>(i) * k + l];
      for (int j = 0; j < n; ++j)
        out[static_cast<std::size_t>(i) * n + j] +=
            av * b.data[static_cast<std::size_t>(l) * n + j];
    }
  int na = a.node, nb = b.node;
  std::vector<double> av = a.data, bv = b.data;
  return finish(tape, Shape{m, n}, std::move(out),
                [na, nb, m, k, n, av = std::move(av), bv = std::move(bv)](
                    Tape& t, const std::vector<double>& g) {
                  if (na >= 0) {  // dA = G B^T
                    for (int i = 0; i < m; ++i)
                      for (int l = 0; l < k; ++l) {
                        double s = 0.0;
                        for (int j = 0; j < n; ++j)
                          s += g[static_cast<std::size_t>(i) * n + j] *
                               bv[static_cast<std::size_t>(l) * n + j];
                        t.accumulate(na, static_cast<std::size_t>(i) * k + l, s);
                      }
                  }
                  if (nb >= 0) {  // dB = A^T G
                    for (int l = 0; l < k; ++l)
                      for (int j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < m; ++i)
                          s += av[static_cast<std::size_t>(i) * k + l] *
                               g[static_cast<std::size_t>(i) * n + j];
                        t.accumulate(nb, static_cast<std::size_t>(l) * n + j, s);
                      }
                  }
                });
}

Tensor outer(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1 || v.rank() != 1)
    throw std::invalid_argument("op outer: shape mismatch " + shape_str(u.dims) +
                                " vs " + shape_str(v.dims));
  Tape* tape = common_tape(u, v);
  const int d = u.dims[0], e = v.dims[0];
  std::vector<double> out(static_cast<std::size_t>(d) * e);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < e; ++j)
      out[static_cast<std::size_t>(i) * e + j] = u.data[i] * v.data[j];
  int nu = u.node, nv = v.node;
  std::vector<double> uv = u.data, vv = v.data;
  return finish(tape, Shape{d, e}, std::move(out),
                [nu, nv, d, e, uv = std::move(uv), vv = std::move(vv)](
                    Tape& t, const std::vector<double>& g) {
                  if (nu >= 0)
                    for (int i = 0; i < d; ++i) {
                      double s = 0.0;
                      for (int j = 0; j < e; ++j)
                        s += g[static_cast<std::size_t>(i) * e + j] * vv[j];
                      t.accumulate(nu, static_cast<std::size_t>(i), s);
                    }
                  if (nv >= 0)
                    for (int j = 0; j < e; ++j) {
                      double s = 0.0;
                      for (int i = 0; i < d; ++i)
                        s += g[static_cast<std::size_t>(i) * e + j] * uv[i];
                      t.accumulate(nv, static_cast<std::size_t>(j), s);
                    }
                });
}

Tensor trace(const Tensor& m) {
  if (m.rank() != 2 || m.dims[0] != m.dims[1])
    throw std::invalid_argument("op trace: expected square matrix, got " +
                                shape_str(m.dims));
  const int d = m.dims[0];
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += m.data[static_cast<std::size_t>(i) * d + i];
  int nm = m.node;
  return finish(m.tape, Shape{1}, {s},
                [nm, d](Tape& t, const std::vector<double>& g) {
                  if (nm >= 0)
                    for (int i = 0; i < d; ++i)
                      t.accumulate(nm, static_cast<std::size_t>(i) * d + i, g[0]);
                });
}

Tensor mean_all(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.data) s += v;
  int na = a.node;
  const std::size_t count = a.size();
  return finish(a.tape, Shape{1}, {s / n},
                [na, n, count](Tape& t, const std::vector<double>& g) {
                  if (na >= 0) {
                    const double gi = g[0] / n;
                    for (std::size_t i = 0; i < count; ++i) t.accumulate(na, i, gi);
                  }
                });
}

Tensor log_op(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(a.data[i] > 0.0))
      throw std::domain_error("op log: non-positive argument " +
                              std::to_string(a.data[i]));
    out[i] = std::log(a.data[i]);
  }
  int na = a.node;
  std::vector<double> av = na >= 0 ? a.data : std::vector<double>();
  return finish(a.tape, a.dims, std::move(out),
                [na, av = std::move(av)](Tape& t, const std::vector<double>& g) {
                  if (na >= 0)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      t.accumulate(na, i, g[i] / av[i]);
                });
}

Tensor sigmoid(const Tensor& a) {
  // Clamped away from the endpoints so downstream log/focal terms stay
  // finite; keeps the (0,1) output invariant exact in double precision.
  constexpr double kEps = 1e-12;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-a.data[i]));
    if (s < kEps) s = kEps;
    if (s > 1.0 - kEps) s = 1.0 - kEps;
    out[i] = s;
  }
  int na = a.node;
  std::vector<double> sv = na >= 0 ? out : std::vector<double>();
  return finish(a.tape, a.dims, std::move(out),
                [na, sv = std::move(sv)](Tape& t, const std::vector<double>& g) {
                  if (na >= 0)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      t.accumulate(na, i, g[i] * sv[i] * (1.0 - sv[i]));
                });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.data[i] > 0.0 ? a.data[i] : 0.0;
  int na = a.node;
  std::vector<double> av = na >= 0 ? a.data : std::vector<double>();
  return finish(a.tape, a.dims, std::move(out),
                [na, av = std::move(av)](Tape& t, const std::vector<double>& g) {
                  if (na >= 0)
                    for (std::size_t i = 0; i < g.size(); ++i)
                      if (av[i] > 0.0) t.accumulate(na, i, g[i]);
                });
}

Tensor pow_const(const Tensor& a, double p) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a.data[i] < 0.0)
      throw std::domain_error("op pow: negative base " + std::to_string(a.data[i]));
    out[i] = std::pow(a.data[i], p);
  }
  int na = a.node;
  std::vector<double> av = na >= 0 ? a.data : std::vector<double>();
  return finish(a.tape, a.dims, std::move(out),
                [na, p, av = std::move(av)](Tape& t, const std::vector<double>& g) {
                  if (na >= 0)
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      // subgradient 0 at the origin when p < 1
                      const double d =
                          av[i] == 0.0 && p < 1.0 ? 0.0 : p * std::pow(av[i], p - 1.0);
                      t.accumulate(na, i, g[i] * d);
                    }
                });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 2)
    throw std::invalid_argument("op concat: shape mismatch " + shape_str(a.dims) +
                                " vs " + shape_str(b.dims));
  for (int i = 0; i + 1 < a.rank(); ++i)
    if (a.dims[i] != b.dims[i])
      throw std::invalid_argument("op concat: shape mismatch " + shape_str(a.dims) +
                                  " vs " + shape_str(b.dims));
  Tape* tape = common_tape(a, b);
  const int ca = a.dims.back(), cb = b.dims.back();
  const std::size_t rows = a.size() / static_cast<std::size_t>(ca);
  Shape out_dims = a.dims;
  out_dims.back() = ca + cb;
  std::vector<double> out(rows * static_cast<std::size_t>(ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < ca; ++c)
      out[r * (ca + cb) + static_cast<std::size_t>(c)] = a.data[r * ca + static_cast<std::size_t>(c)];
    for (int c = 0; c < cb; ++c)
      out[r * (ca + cb) + static_cast<std::size_t>(ca + c)] = b.data[r * cb + static_cast<std::size_t>(c)];
  }
  int na = a.node, nb = b.node;
  return finish(tape, std::move(out_dims), std::move(out),
                [na, nb, ca, cb, rows](Tape& t, const std::vector<double>& g) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    if (na >= 0)
                      for (int c = 0; c < ca; ++c)
                        t.accumulate(na, r * ca + static_cast<std::size_t>(c),
                                     g[r * (ca + cb) + static_cast<std::size_t>(c)]);
                    if (nb >= 0)
                      for (int c = 0; c < cb; ++c)
                        t.accumulate(nb, r * cb + static_cast<std::size_t>(c),
                                     g[r * (ca + cb) + static_cast<std::size_t>(ca + c)]);
                  }
                });
}

}  // namespace csda
