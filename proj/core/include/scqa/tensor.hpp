#pragma once

// Dense row-major float64 tensors with tape-free reverse-mode autodiff.
//
// A Tensor is a cheap handle onto a shared node. Copying a Tensor aliases the
// same storage (parameters are updated in place through any handle); use
// clone() for an independent copy. Every op records its inputs and a backward
// closure when at least one input requires a gradient, so the computation
// graph is implied by the result tensor; Graph::trace materializes it in
// topological order.
//
// Shapes are explicit. The only broadcasting is scale() by a scalar and the
// dedicated add_bias() row-vector op; every other mismatch is a DimensionError.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scqa/error.hpp"

namespace scqa {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Rows of a matrix (or length of a vector).
  std::size_t rows() const;
  /// Columns of a matrix; 1 for vectors.
  std::size_t cols() const;

  std::span<const double> data() const;
  /// Writable view of the storage. Intended for leaves (parameter updates,
  /// finite-difference perturbation); mutating an interior node invalidates
  /// its recorded graph.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no history, requires_grad = false.
  Tensor detach() const;
  /// Deep copy of values; keeps the requires_grad flag but not the history.
  Tensor clone() const;

  /// Identity of the underlying node (handles aliasing the same storage compare equal).
  const void* id() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct detail::Node;
  friend class Graph;
  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                        std::function<void(detail::Node&)>, const char*);
  friend std::shared_ptr<detail::Node> node_of(const Tensor&);
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

std::shared_ptr<detail::Node> node_of(const Tensor& t);

/// Creates an op result. If no input requires a gradient the history is
/// dropped and `backward` is discarded.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               std::function<void(detail::Node&)> backward, const char* op);

/// While an instance is alive on this thread, ops record no graph (their
/// outputs never require gradients).
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
  static bool active();
};

/// Operations reachable from a root, in topological order (inputs first).
class Graph {
 public:
  static Graph trace(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  /// Op names in topological order; leaves report "leaf".
  std::vector<std::string> ops() const;
  /// Leaves with requires_grad set.
  std::vector<Tensor> grad_leaves() const;
  bool contains(const Tensor& t) const;

  /// Reverse-mode sweep seeded with d(root)/d(root) = 1. Interior gradients are
  /// reset first; leaf gradients accumulate across calls.
  void backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

/// Convenience: Graph::trace(loss).backward(). `loss` must hold exactly one value.
void backward(const Tensor& loss);

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[n×d] + b[d] added to every row.
Tensor add_bias(const Tensor& x, const Tensor& b);

Tensor relu(const Tensor& x);
/// Natural log; every element must be > 0.
Tensor log(const Tensor& x);
/// x * ln(y) elementwise with 0 * ln(y) := 0.
Tensor xlogy(const Tensor& x, const Tensor& y);
/// max(x, floor); gradient passes where x > floor.
Tensor clamp_min(const Tensor& x, double floor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Concatenates vectors end to end, or matrices with equal row counts column-wise.
Tensor concat_last_axis(const std::vector<Tensor>& parts);
Tensor concat_last_axis(const Tensor& a, const Tensor& b);

/// Rows [begin, end) of a matrix.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Columns [begin, end) of a matrix.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
/// Row lookup into a table (embedding); result is ids.size() × cols.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
/// Element `index` of a vector as a scalar.
Tensor pick(const Tensor& x, std::size_t index);
Tensor reshape(const Tensor& x, Shape shape);

/// exp(z/tau) / sum exp(z/tau) over a vector, max-subtracted.
Tensor softmax_temp(const Tensor& z, double tau);
/// Row-wise softmax_temp of a matrix.
Tensor softmax_rows(const Tensor& z, double tau);
/// log(softmax_temp(z, tau)) computed without forming the probabilities.
Tensor log_softmax_temp(const Tensor& z, double tau);

// ---- test oracle -------------------------------------------------------------

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2eps per coordinate.
/// `x` itself is left unchanged. The difference quotient is formed in long double.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps);

/// Same quotient, but perturbs `leaf` in place (restoring it afterwards) so `f`
/// can close over parameters that live inside a larger structure.
Tensor finite_diff_grad_inplace(const std::function<double()>& f, Tensor leaf, double eps);

}  // namespace scqa
