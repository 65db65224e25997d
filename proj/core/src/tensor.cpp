#include "scqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

namespace scqa {

using detail::Node;

namespace {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using CMatMap = Eigen::Map<const RowMajor>;
}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape, std::size_t n) {
  for (auto s : shape)
    if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  if (numel(shape) != n)
    throw DimensionError("shape " + to_string(shape) + " does not hold " + std::to_string(n) +
                         " values");
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape, data.size());
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

const Node& node(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return *node_of(t);
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + " expects a matrix, got shape " + to_string(t.shape()));
}

void require_vector(const Tensor& t, const char* op) {
  if (t.rank() != 1)
    throw DimensionError(std::string(op) + " expects a vector, got shape " + to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

void require_tau(double tau) {
  if (!(tau > 0.0)) throw DomainError("softmax temperature must be > 0, got " + std::to_string(tau));
}

// Row-wise softmax over `rows` rows of width `n`; returns probabilities.
std::vector<double> softmax_kernel(std::span<const double> z, std::size_t rows, std::size_t n,
                                   double tau) {
  std::vector<double> p(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * n;
    double* pr = p.data() + r * n;
    const double mx = *std::max_element(zr, zr + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pr[i] = std::exp((zr[i] - mx) / tau);
      total += pr[i];
    }
    for (std::size_t i = 0; i < n; ++i) pr[i] /= total;
  }
  return p;
}

Tensor softmax_impl(const Tensor& z, std::size_t rows, std::size_t n, double tau, const char* op) {
  auto p = softmax_kernel(z.data(), rows, n, tau);
  return make_op(z.shape(), std::move(p), {z},
                 [rows, n, tau](Node& self) {
                   auto& gz = self.inputs[0]->grad_buffer();
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* pr = self.data.data() + r * n;
                     const double* gr = self.grad.data() + r * n;
                     double dot = 0.0;
                     for (std::size_t i = 0; i < n; ++i) dot += gr[i] * pr[i];
                     for (std::size_t i = 0; i < n; ++i)
                       gz[r * n + i] += pr[i] * (gr[i] - dot) / tau;
                   }
                 },
                 op);
}

}  // namespace

std::shared_ptr<Node> node_of(const Tensor& t) { return t.node_; }

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return from({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return matrix(n, n, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return node(*this).shape; }
std::size_t Tensor::size() const { return node(*this).data.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.empty() ? 1 : s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.size() < 2 ? 1 : s[1];
}

std::span<const double> Tensor::data() const { return node(*this).data; }
std::span<double> Tensor::mutable_data() { return node_of(*this)->data; }

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item() on a tensor of shape " + to_string(shape()));
  return data()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

bool Tensor::requires_grad() const { return node(*this).requires_grad; }
bool Tensor::is_leaf() const { return node(*this).inputs.empty(); }
bool Tensor::has_grad() const { return !node(*this).grad.empty(); }
std::span<const double> Tensor::grad() const { return node(*this).grad; }

void Tensor::zero_grad() {
  auto& g = node_of(*this)->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node(*this).data, false); }
Tensor Tensor::clone() const { return from(shape(), node(*this).data, requires_grad()); }

namespace {
thread_local int no_grad_depth = 0;
}

NoGrad::NoGrad() { ++no_grad_depth; }
NoGrad::~NoGrad() { --no_grad_depth; }
bool NoGrad::active() { return no_grad_depth > 0; }

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward, const char* op) {
  auto n = new_node(std::move(shape), std::move(data), false);
  n->op = op;
  const bool tracked =
      no_grad_depth == 0 && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& t : inputs) n->inputs.push_back(node_of(t));
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

// ---- Graph ----------------------------------------------------------------

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.defined()) throw ContractError("cannot trace an undefined tensor");
  std::unordered_set<const Node*> seen;
  // Iterative post-order DFS; second tuple member is the next input to visit.
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(node_of(root), 0);
  seen.insert(stack.back().first.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      auto child = n->inputs[next++];
      if (seen.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      g.order_.push_back(n);
      stack.pop_back();
    }
  }
  return g;
}

std::vector<std::string> Graph::ops() const {
  std::vector<std::string> out;
  out.reserve(order_.size());
  for (const auto& n : order_) out.emplace_back(n->op);
  return out;
}

std::vector<Tensor> Graph::grad_leaves() const {
  std::vector<Tensor> out;
  for (const auto& n : order_)
    if (n->inputs.empty() && n->requires_grad) out.push_back(Tensor(n));
  return out;
}

bool Graph::contains(const Tensor& t) const {
  return std::any_of(order_.begin(), order_.end(),
                     [&](const auto& n) { return n.get() == t.id(); });
}

void Graph::backward() {
  if (order_.empty()) return;
  auto& root = *order_.back();
  if (root.data.size() != 1)
    throw ContractError("backward needs a scalar loss, got shape " + to_string(root.shape));
  for (auto& n : order_)
    if (!n->inputs.empty()) n->grad.clear();
  root.grad_buffer()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  Graph::trace(loss).backward();
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  std::vector<double> c(n * m);
  MatMap(c.data(), n, m).noalias() = CMatMap(a.data().data(), n, k) * CMatMap(b.data().data(), k, m);
  return make_op({n, m}, std::move(c), {a, b},
                 [n, k, m](Node& self) {
                   const CMatMap G(self.grad.data(), n, m);
                   Node& na = *self.inputs[0];
                   Node& nb = *self.inputs[1];
                   if (na.requires_grad)
                     MatMap(na.grad_buffer().data(), n, k).noalias() +=
                         G * CMatMap(nb.data.data(), k, m).transpose();
                   if (nb.requires_grad)
                     MatMap(nb.grad_buffer().data(), k, m).noalias() +=
                         CMatMap(na.data.data(), n, k).transpose() * G;
                 },
                 "matmul");
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto d = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  return make_op({c, r}, std::move(out), {a},
                 [r, c](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
                 },
                 "transpose");
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](Node& self) {
                   for (auto& in : self.inputs) {
                     if (!in->requires_grad) continue;
                     auto& g = in->grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                 },
                 "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](Node& self) {
                   if (self.inputs[0]->requires_grad) {
                     auto& g = self.inputs[0]->grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                   if (self.inputs[1]->requires_grad) {
                     auto& g = self.inputs[1]->grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                   }
                 },
                 "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](Node& self) {
                   Node& na = *self.inputs[0];
                   Node& nb = *self.inputs[1];
                   // Read both operands before writing: a and b may alias.
                   if (na.requires_grad) {
                     std::vector<double> delta(self.grad.size());
                     for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = self.grad[i] * nb.data[i];
                     auto& g = na.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
                   }
                   if (nb.requires_grad) {
                     std::vector<double> delta(self.grad.size());
                     for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = self.grad[i] * na.data[i];
                     auto& g = nb.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
                   }
                 },
                 "mul");
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_op(a.shape(), std::move(out), {a},
                 [factor](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
                 },
                 "scale");
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_matrix(x, "add_bias");
  require_vector(b, "add_bias");
  const std::size_t r = x.rows(), c = x.cols();
  if (b.size() != c)
    throw DimensionError("add_bias: bias " + to_string(b.shape()) + " does not match rows of " +
                         to_string(x.shape()));
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bd[j];
  return make_op(x.shape(), std::move(out), {x, b},
                 [r, c](Node& self) {
                   if (self.inputs[0]->requires_grad) {
                     auto& g = self.inputs[0]->grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                   if (self.inputs[1]->requires_grad) {
                     auto& g = self.inputs[1]->grad_buffer();
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                   }
                 },
                 "add_bias");
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_op(x.shape(), std::move(out), {x},
                 [](Node& self) {
                   Node& in = *self.inputs[0];
                   auto& g = in.grad_buffer();
                   for (std::size_t i = 0; i < g.size(); ++i)
                     if (in.data[i] > 0.0) g[i] += self.grad[i];
                 },
                 "relu");
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
    v = std::log(v);
  }
  return make_op(x.shape(), std::move(out), {x},
                 [](Node& self) {
                   Node& in = *self.inputs[0];
                   auto& g = in.grad_buffer();
                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / in.data[i];
                 },
                 "log");
}

Tensor xlogy(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "xlogy");
  const auto xd = x.data();
  const auto yd = y.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (xd[i] == 0.0) {
      out[i] = 0.0;
      continue;
    }
    if (!(yd[i] > 0.0))
      throw DomainError("xlogy: x ln y with x != 0 needs y > 0, got y = " + std::to_string(yd[i]));
    out[i] = xd[i] * std::log(yd[i]);
  }
  return make_op(x.shape(), std::move(out), {x, y},
                 [](Node& self) {
                   Node& nx = *self.inputs[0];
                   Node& ny = *self.inputs[1];
                   const std::size_t n = self.grad.size();
                   std::vector<double> dx(n, 0.0), dy(n, 0.0);
                   for (std::size_t i = 0; i < n; ++i) {
                     if (ny.data[i] > 0.0) dx[i] = self.grad[i] * std::log(ny.data[i]);
                     if (nx.data[i] != 0.0) dy[i] = self.grad[i] * nx.data[i] / ny.data[i];
                   }
                   if (nx.requires_grad) {
                     auto& g = nx.grad_buffer();
                     for (std::size_t i = 0; i < n; ++i) g[i] += dx[i];
                   }
                   if (ny.requires_grad) {
                     auto& g = ny.grad_buffer();
                     for (std::size_t i = 0; i < n; ++i) g[i] += dy[i];
                   }
                 },
                 "xlogy");
}

Tensor clamp_min(const Tensor& x, double floor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::max(v, floor);
  return make_op(x.shape(), std::move(out), {x},
                 [floor](Node& self) {
                   Node& in = *self.inputs[0];
                   auto& g = in.grad_buffer();
                   for (std::size_t i = 0; i < g.size(); ++i)
                     if (in.data[i] > floor) g[i] += self.grad[i];
                 },
                 "clamp_min");
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_op({}, {total}, {x},
                 [](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (auto& v : g) v += self.grad[0];
                 },
                 "sum");
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.size());
  return make_op({}, {total / n}, {x},
                 [n](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (auto& v : g) v += self.grad[0] / n;
                 },
                 "mean");
}

// ---- structural -----------------------------------------------------------

Tensor concat_last_axis(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last_axis: nothing to concatenate");
  const std::size_t rank = parts[0].rank();
  if (rank != 1 && rank != 2)
    throw DimensionError("concat_last_axis expects vectors or matrices, got " +
                         to_string(parts[0].shape()));
  const std::size_t rows = rank == 1 ? 1 : parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank || (rank == 2 && p.rows() != rows))
      throw DimensionError("concat_last_axis: cannot join " + to_string(parts[0].shape()) +
                           " with " + to_string(p.shape()));
    widths.push_back(rank == 1 ? p.size() : p.cols());
    total += widths.back();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto d = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(d.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  Shape shape = rank == 1 ? Shape{total} : Shape{rows, total};
  return make_op(std::move(shape), std::move(out), parts,
                 [rows, total, widths](Node& self) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < widths.size(); ++k) {
                     Node& in = *self.inputs[k];
                     if (in.requires_grad) {
                       auto& g = in.grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < widths[k]; ++j)
                           g[r * widths[k] + j] += self.grad[r * total + off + j];
                     }
                     off += widths[k];
                   }
                 },
                 "concat_last_axis");
}

Tensor concat_last_axis(const Tensor& a, const Tensor& b) { return concat_last_axis({a, b}); }

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  if (begin >= end || end > x.rows())
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + to_string(x.shape()));
  const std::size_t c = x.cols();
  const auto d = x.data();
  std::vector<double> out(d.begin() + begin * c, d.begin() + end * c);
  return make_op({end - begin, c}, std::move(out), {x},
                 [begin, c](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
                 },
                 "slice_rows");
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  if (begin >= end || end > x.cols())
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + to_string(x.shape()));
  const std::size_t r = x.rows(), c = x.cols(), w = end - begin;
  const auto d = x.data();
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(d.data() + i * c + begin, w, out.data() + i * w);
  return make_op({r, w}, std::move(out), {x},
                 [r, c, w, begin](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += self.grad[i * w + j];
                 },
                 "slice_cols");
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  const std::size_t c = table.cols();
  const auto d = table.data();
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= table.rows())
      throw ContractError("gather_rows: id " + std::to_string(rows[i]) + " outside table of " +
                          std::to_string(table.rows()) + " rows");
    std::copy_n(d.data() + static_cast<std::size_t>(rows[i]) * c, c, out.data() + i * c);
  }
  const std::size_t n = rows.size();
  return make_op({n, c}, std::move(out), {table},
                 [rows = std::move(rows), c](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t i = 0; i < rows.size(); ++i)
                     for (std::size_t j = 0; j < c; ++j)
                       g[static_cast<std::size_t>(rows[i]) * c + j] += self.grad[i * c + j];
                 },
                 "gather_rows");
}

Tensor pick(const Tensor& x, std::size_t index) {
  if (index >= x.size())
    throw ContractError("pick: index " + std::to_string(index) + " outside tensor of " +
                        std::to_string(x.size()) + " values");
  return make_op({}, {x.data()[index]}, {x},
                 [index](Node& self) { self.inputs[0]->grad_buffer()[index] += self.grad[0]; },
                 "pick");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  return make_op(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x},
                 [](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                 },
                 "reshape");
}

// ---- softmax family -------------------------------------------------------

Tensor softmax_temp(const Tensor& z, double tau) {
  require_vector(z, "softmax_temp");
  require_tau(tau);
  return softmax_impl(z, 1, z.size(), tau, "softmax_temp");
}

Tensor softmax_rows(const Tensor& z, double tau) {
  require_matrix(z, "softmax_rows");
  require_tau(tau);
  return softmax_impl(z, z.rows(), z.cols(), tau, "softmax_rows");
}

Tensor log_softmax_temp(const Tensor& z, double tau) {
  require_vector(z, "log_softmax_temp");
  require_tau(tau);
  const auto zd = z.data();
  const std::size_t n = zd.size();
  const double mx = *std::max_element(zd.begin(), zd.end());
  double total = 0.0;
  for (double v : zd) total += std::exp((v - mx) / tau);
  const double lse = std::log(total);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (zd[i] - mx) / tau - lse;
  return make_op(z.shape(), std::move(out), {z},
                 [n, tau](Node& self) {
                   double gsum = 0.0;
                   for (double g : self.grad) gsum += g;
                   auto& gz = self.inputs[0]->grad_buffer();
                   for (std::size_t i = 0; i < n; ++i)
                     gz[i] += (self.grad[i] - std::exp(self.data[i]) * gsum) / tau;
                 },
                 "log_softmax_temp");
}

// ---- finite differences -----------------------------------------------------

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  Tensor probe = Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  return finite_diff_grad_inplace([&] { return f(probe); }, probe, eps);
}

Tensor finite_diff_grad_inplace(const std::function<double()>& f, Tensor leaf, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_diff_grad: eps must be > 0");
  auto values = leaf.mutable_data();
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const long double plus = f();
    values[i] = saved - eps;
    const long double minus = f();
    values[i] = saved;
    g[i] = static_cast<double>((plus - minus) / (2.0L * static_cast<long double>(eps)));
  }
  return Tensor::from(leaf.shape(), std::move(g));
}

}  // namespace scqa
