#ifndef CSDA_TENSOR_HPP
#define CSDA_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace csda {

// Extents of a dense row-major array, rank 1-4.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Tape;

// Dense multidimensional array of doubles. Values are plain data; when
// `node >= 0` the tensor participates in the reverse-mode graph owned by
// `tape` and receives a gradient buffer there.
struct Tensor {
  Shape dims;
  std::vector<double> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(Shape d, std::vector<double> v);
  explicit Tensor(Shape d, double fill = 0.0);
  static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }

  bool tracked() const { return node >= 0; }
  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(dims.size()); }
  double item() const;
};

// Reverse-mode tape. Nodes are appended in forward order; backward walks
// them in exact reverse. A tape is confined to one thread for its
// forward+backward lifetime.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

  // Registers a tracked leaf (inputs, parameters).
  Tensor leaf(Shape dims, std::vector<double> data);
  Tensor leaf(const Tensor& value);

  // Registers the result of an op. `fn` receives this node's output
  // gradient and must accumulate into the parents via accumulate().
  // Pass a null fn for leaves.
  Tensor record(Shape dims, std::vector<double> data, BackwardFn fn);

  // Sums `g` into the gradient buffer of `node`.
  void accumulate(int node, const std::vector<double>& g);
  void accumulate(int node, std::size_t index, double g);

  // Propagates d loss / d node to every tracked node. `loss` must be a
  // scalar produced by this tape. Call at most once per tape.
  void backward(const Tensor& loss);

  const std::vector<double>& grad(const Tensor& t) const;
  const std::vector<double>& grad(int node) const;

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    BackwardFn backward;
    std::vector<double> grad;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- forward ops -----------------------------------------------------
// Each op validates shapes (mismatch -> std::invalid_argument naming the
// op and both shapes) and registers a backward rule when any input is
// tracked. No broadcasting beyond scalar-times-grid.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);      // rank-2 x rank-2
Tensor outer(const Tensor& u, const Tensor& v);       // rank-1 x rank-1
Tensor trace(const Tensor& m);                        // square rank-2 -> scalar
Tensor mean_all(const Tensor& a);                     // -> scalar
Tensor log_op(const Tensor& a);                       // elementwise ln, arg > 0
Tensor sigmoid(const Tensor& a);                      // output clamped into (0,1)
Tensor relu(const Tensor& a);
Tensor pow_const(const Tensor& a, double p);          // a >= 0 elementwise

// Concatenation along the trailing (channel) axis; leading dims must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

}  // namespace csda

#endif  // CSDA_TENSOR_HPP
