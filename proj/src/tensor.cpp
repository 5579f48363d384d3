#include "swnf/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "swnf/error.hpp"

namespace swnf {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  std::uint64_t order = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward_fn;

  // Gradient buffer of a parent, allocated on first use; null when the
  // parent does not take gradients.
  double* accum() {
    if (!requires_grad) return nullptr;
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

struct Access {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

namespace {

std::atomic<std::uint64_t> next_order{1};
thread_local bool grad_mode = true;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->order = next_order.fetch_add(1, std::memory_order_relaxed);
  return n;
}

// Creates an op output; the gradient rule is kept only if some parent is
// tracked and recording is enabled.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(const Node&)> rule) {
  auto n = new_node(std::move(shape), std::move(value));
  bool tracked = false;
  if (grad_mode) {
    for (const auto& p : parents) {
      if (p->requires_grad) {
        if (p->released) {
          fail(ErrorCode::autodiff_error,
               "operation uses a tensor whose graph was already released by backward()");
        }
        tracked = true;
      }
    }
  }
  if (tracked) {
    n->requires_grad = true;
    n->leaf = false;
    n->parents = std::move(parents);
    n->backward_fn = std::move(rule);
  }
  return Access::wrap(std::move(n));
}

// Stride 0 marks a broadcast scalar operand; split so the common
// equal-shape case is a plain contiguous loop.
template <typename F>
void binary_loop(F f, const double* x, std::size_t sx, const double* y, std::size_t sy,
                 double* out, std::size_t n) {
  if (sx && sy) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], y[i]);
  } else if (sx) {
    const double c = y[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], c);
  } else {
    const double c = x[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = f(c, y[i]);
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    fail(ErrorCode::shape_mismatch, std::string(op) + ": expected rank " +
                                        std::to_string(rank) + ", got shape " +
                                        shape_string(t.shape()));
  }
}

}  // namespace
}  // namespace detail

using detail::Access;
using detail::Node;

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    fail(ErrorCode::shape_mismatch, "tensor shape " + shape_string(shape) +
                                        " does not match " +
                                        std::to_string(values.size()) + " values");
  }
  node_ = detail::new_node(std::move(shape), std::move(values));
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) fail(ErrorCode::shape_mismatch, "ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  detail::require_rank(*this, 2, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  detail::require_rank(*this, 2, "cols");
  return node_->shape[1];
}

std::span<const double> Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (size() != 1) {
    fail(ErrorCode::shape_mismatch, "item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->value[row * cols() + col];
}

std::span<double> Tensor::mutable_values() {
  if (!node_->leaf) fail(ErrorCode::autodiff_error, "cannot mutate a non-leaf tensor");
  return node_->value;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->leaf; }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(node_->shape, node_->value, requires_grad);
}

void Tensor::backward() const {
  Node& root = *node_;
  if (root.value.size() != 1) {
    fail(ErrorCode::autodiff_error,
         "backward() needs a scalar loss, got shape " + shape_string(root.shape));
  }
  if (!root.requires_grad) {
    fail(ErrorCode::autodiff_error, "backward() on a tensor that is not tracked");
  }
  if (root.released) {
    fail(ErrorCode::autodiff_error, "backward() called twice on the same graph");
  }
  if (root.leaf) {
    root.accum()[0] += 1.0;
    return;
  }

  // Strong references keep every interior node alive while the graph is
  // released below.
  std::vector<std::shared_ptr<Node>> interior;
  std::unordered_set<Node*> seen{&root};
  std::vector<std::shared_ptr<Node>> stack{node_};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (n->leaf) continue;
    if (n->released) {
      fail(ErrorCode::autodiff_error, "backward() reached a released graph");
    }
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    interior.push_back(std::move(n));
  }
  // Creation order is topological; replay newest first.
  std::sort(interior.begin(), interior.end(),
            [](const auto& a, const auto& b) { return a->order > b->order; });
  // Gradient buffers are allocated on first accumulation and dropped once
  // propagated, so only the frontier of the sweep holds memory.
  root.accum()[0] = 1.0;
  for (auto& n : interior) {
    if (!n->grad.empty()) n->backward_fn(*n);
    std::vector<double>().swap(n->grad);
  }
  for (auto& n : interior) {
    n->released = true;
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

NoGradGuard::NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
NoGradGuard::~NoGradGuard() { detail::grad_mode = previous_; }
bool grad_enabled() { return detail::grad_mode; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.size() == 1 && a.rank() <= 1;
  const bool b_scalar = b.size() == 1 && b.rank() <= 1;
  if (a.shape() != b.shape() && !a_scalar && !b_scalar) {
    fail(ErrorCode::shape_mismatch, "elementwise: shapes " + shape_string(a.shape()) +
                                        " and " + shape_string(b.shape()) +
                                        " are not broadcastable");
  }
  const bool broadcast_a = a_scalar && a.shape() != b.shape();
  const bool broadcast_b = b_scalar && a.shape() != b.shape() && !broadcast_a;
  const Shape& out_shape = broadcast_a ? b.shape() : a.shape();
  const std::size_t n = shape_size(out_shape);
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t sa = broadcast_a ? 0 : 1;
  const std::size_t sb = broadcast_b ? 0 : 1;

  std::vector<double> out(n);
  switch (op) {
    case BinaryOp::add:
      detail::binary_loop(std::plus<>(), av.data(), sa, bv.data(), sb, out.data(), n);
      break;
    case BinaryOp::sub:
      detail::binary_loop(std::minus<>(), av.data(), sa, bv.data(), sb, out.data(), n);
      break;
    case BinaryOp::mul:
      detail::binary_loop(std::multiplies<>(), av.data(), sa, bv.data(), sb, out.data(), n);
      break;
  }

  auto pa = Access::node(a);
  auto pb = Access::node(b);
  Node* ra = pa.get();
  Node* rb = pb.get();
  return detail::make_result(
      out_shape, std::move(out), {pa, pb}, [op, ra, rb, sa, sb, n](const Node& self) {
        const double* g = self.grad.data();
        if (double* ga = ra->accum()) {
          switch (op) {
            case BinaryOp::add:
            case BinaryOp::sub:
              for (std::size_t i = 0; i < n; ++i) ga[i * sa] += g[i];
              break;
            case BinaryOp::mul:
              for (std::size_t i = 0; i < n; ++i) ga[i * sa] += g[i] * rb->value[i * sb];
              break;
          }
        }
        if (double* gb = rb->accum()) {
          switch (op) {
            case BinaryOp::add:
              for (std::size_t i = 0; i < n; ++i) gb[i * sb] += g[i];
              break;
            case BinaryOp::sub:
              for (std::size_t i = 0; i < n; ++i) gb[i * sb] -= g[i];
              break;
            case BinaryOp::mul:
              for (std::size_t i = 0; i < n; ++i) gb[i * sb] += g[i] * ra->value[i * sa];
              break;
          }
        }
      });
}

Tensor elementwise(UnaryOp op, const Tensor& a) {
  const auto av = a.values();
  const std::size_t n = av.size();
  std::vector<double> out(n);
  switch (op) {
    case UnaryOp::exp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(av[i]);
      break;
    case UnaryOp::log:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(av[i] > 0.0)) {
          fail(ErrorCode::domain_error,
               "log of non-positive value " + std::to_string(av[i]));
        }
        out[i] = std::log(av[i]);
      }
      break;
    case UnaryOp::tanh: {
      // tanh|x| = (1 - e) / (1 + e) with e = exp(-2|x|); vectorizes through
      // Eigen's exp and stays within a few ulp of std::tanh. Every element
      // goes through a fixed-size aligned block so the packet path taken does
      // not depend on where the allocator placed the data.
      constexpr std::size_t kBlock = 256;
      Eigen::Array<double, kBlock, 1> x, y;
      for (std::size_t start = 0; start < n; start += kBlock) {
        const std::size_t len = std::min(kBlock, n - start);
        x.setZero();
        std::copy_n(av.data() + start, len, x.data());
        y = (-2.0 * x.abs()).exp();
        y = ((1.0 - y) / (1.0 + y)) * x.sign();
        std::copy_n(y.data(), len, out.data() + start);
      }
      break;
    }
    case UnaryOp::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
      break;
    case UnaryOp::negate:
      for (std::size_t i = 0; i < n; ++i) out[i] = -av[i];
      break;
    case UnaryOp::square:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * av[i];
      break;
    case UnaryOp::abs:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(av[i]);
      break;
  }

  auto pa = Access::node(a);
  Node* ra = pa.get();
  return detail::make_result(a.shape(), std::move(out), {pa}, [op, ra, n](const Node& self) {
    double* ga = ra->accum();
    if (!ga) return;
    const double* g = self.grad.data();
    const double* x = ra->value.data();
    const double* y = self.value.data();
    switch (op) {
      case UnaryOp::exp:
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
        break;
      case UnaryOp::log:
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / x[i];
        break;
      case UnaryOp::tanh:
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      case UnaryOp::relu:
        for (std::size_t i = 0; i < n; ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
        break;
      case UnaryOp::negate:
        for (std::size_t i = 0; i < n; ++i) ga[i] -= g[i];
        break;
      case UnaryOp::square:
        for (std::size_t i = 0; i < n; ++i) ga[i] += 2.0 * x[i] * g[i];
        break;
      case UnaryOp::abs:
        for (std::size_t i = 0; i < n; ++i) {
          const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
          ga[i] += s * g[i];
        }
        break;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
Tensor exp(const Tensor& a) { return elementwise(UnaryOp::exp, a); }
Tensor log(const Tensor& a) { return elementwise(UnaryOp::log, a); }
Tensor tanh(const Tensor& a) { return elementwise(UnaryOp::tanh, a); }
Tensor relu(const Tensor& a) { return elementwise(UnaryOp::relu, a); }
Tensor neg(const Tensor& a) { return elementwise(UnaryOp::negate, a); }
Tensor square(const Tensor& a) { return elementwise(UnaryOp::square, a); }
Tensor abs(const Tensor& a) { return elementwise(UnaryOp::abs, a); }

Tensor operator*(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
Tensor operator+(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }

// ---------------------------------------------------------------------------
// Matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    fail(ErrorCode::shape_mismatch, "matmul: inner dimensions differ, " +
                                        shape_string(a.shape()) + " . " +
                                        shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  {
    detail::ConstMap A(a.values().data(), m, k);
    detail::ConstMap B(b.values().data(), k, n);
    detail::Map C(out.data(), m, n);
    C.noalias() = A * B;
  }
  auto pa = Access::node(a);
  auto pb = Access::node(b);
  Node* ra = pa.get();
  Node* rb = pb.get();
  return detail::make_result(Shape{m, n}, std::move(out), {pa, pb},
                             [ra, rb, m, k, n](const Node& self) {
                               detail::ConstMap G(self.grad.data(), m, n);
                               if (double* ga = ra->accum()) {
                                 detail::ConstMap B(rb->value.data(), k, n);
                                 detail::Map(ga, m, k).noalias() += G * B.transpose();
                               }
                               if (double* gb = rb->accum()) {
                                 detail::ConstMap A(ra->value.data(), m, k);
                                 detail::Map(gb, k, n).noalias() += A.transpose() * G;
                               }
                             });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce(ReduceOp op, const Tensor& a, std::optional<std::size_t> axis) {
  const auto av = a.values();
  auto pa = Access::node(a);
  Node* ra = pa.get();

  if (!axis) {
    double total = 0.0;
    for (double v : av) total += v;
    const double scale = op == ReduceOp::mean ? 1.0 / static_cast<double>(av.size()) : 1.0;
    if (op == ReduceOp::mean) total /= static_cast<double>(av.size());
    return detail::make_result(Shape{}, {total}, {pa}, [ra, scale](const Node& self) {
      double* ga = ra->accum();
      if (!ga) return;
      const double g = self.grad[0] * scale;
      for (std::size_t i = 0; i < ra->value.size(); ++i) ga[i] += g;
    });
  }

  const Shape& shape = a.shape();
  if (*axis >= shape.size()) {
    fail(ErrorCode::invalid_argument, "reduce: axis " + std::to_string(*axis) +
                                          " invalid for shape " + shape_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < *axis; ++d) outer *= shape[d];
  for (std::size_t d = *axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t len = shape[*axis];
  Shape out_shape;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (d != *axis) out_shape.push_back(shape[d]);
  }
  const double scale = op == ReduceOp::mean ? 1.0 / static_cast<double>(len) : 1.0;
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = av.data() + (o * len + l) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  if (op == ReduceOp::mean) {
    for (double& v : out) v /= static_cast<double>(len);
  }
  return detail::make_result(std::move(out_shape), std::move(out), {pa},
                             [ra, outer, inner, len, scale](const Node& self) {
                               double* ga = ra->accum();
                               if (!ga) return;
                               for (std::size_t o = 0; o < outer; ++o) {
                                 const double* g = self.grad.data() + o * inner;
                                 for (std::size_t l = 0; l < len; ++l) {
                                   double* dst = ga + (o * len + l) * inner;
                                   for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i] * scale;
                                 }
                               }
                             });
}

Tensor sum(const Tensor& a, std::optional<std::size_t> axis) {
  return reduce(ReduceOp::sum, a, axis);
}

Tensor mean(const Tensor& a, std::optional<std::size_t> axis) {
  return reduce(ReduceOp::mean, a, axis);
}

// ---------------------------------------------------------------------------
// Sorting

SortResult sort_with_permutation(const Tensor& a) {
  detail::require_rank(a, 1, "sort_with_permutation");
  const auto av = a.values();
  std::vector<std::size_t> perm(av.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&av](std::size_t i, std::size_t j) { return av[i] < av[j]; });
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = av[perm[i]];

  auto pa = Access::node(a);
  Node* ra = pa.get();
  Tensor values = detail::make_result(a.shape(), std::move(out), {pa},
                                      [ra, perm](const Node& self) {
                                        double* ga = ra->accum();
                                        if (!ga) return;
                                        for (std::size_t i = 0; i < perm.size(); ++i) {
                                          ga[perm[i]] += self.grad[i];
                                        }
                                      });
  return SortResult{std::move(values), std::move(perm)};
}

namespace {

// Monotone map from doubles to unsigned integers; -0.0 and +0.0 share a key.
std::uint64_t order_key(double v) {
  if (v == 0.0) v = 0.0;
  const auto bits = std::bit_cast<std::uint64_t>(v);
  return (bits >> 63) ? ~bits : bits | (std::uint64_t{1} << 63);
}

// Stable LSD radix sort of (key, index) pairs, 11 bits per pass. Passes where
// every key shares the same digit are skipped.
void radix_sort(std::vector<std::uint64_t>& keys, std::vector<std::uint32_t>& idx,
                std::vector<std::uint64_t>& keys_tmp, std::vector<std::uint32_t>& idx_tmp) {
  constexpr int kBits = 11;
  constexpr std::size_t kBuckets = std::size_t{1} << kBits;
  const std::size_t n = keys.size();
  std::vector<std::uint32_t> count(kBuckets);
  for (int shift = 0; shift < 64; shift += kBits) {
    std::fill(count.begin(), count.end(), 0u);
    for (std::size_t i = 0; i < n; ++i) ++count[(keys[i] >> shift) & (kBuckets - 1)];
    if (count[(keys[0] >> shift) & (kBuckets - 1)] == n) continue;
    std::uint32_t total = 0;
    for (auto& c : count) {
      const std::uint32_t here = c;
      c = total;
      total += here;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t slot = count[(keys[i] >> shift) & (kBuckets - 1)]++;
      keys_tmp[slot] = keys[i];
      idx_tmp[slot] = idx[i];
    }
    keys.swap(keys_tmp);
    idx.swap(idx_tmp);
  }
}

}  // namespace

Tensor sort_columns(const Tensor& a) {
  detail::require_rank(a, 2, "sort_columns");
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto av = a.values();
  // perm[c * rows + i] = source row of sorted position i in column c
  std::vector<std::size_t> perm(rows * cols);
  std::vector<double> out(rows * cols);
  std::vector<std::uint64_t> keys(rows), keys_tmp(rows);
  std::vector<std::uint32_t> idx(rows), idx_tmp(rows);
  std::vector<std::uint64_t> all_keys(rows * cols);  // column-major
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) all_keys[c * rows + r] = order_key(av[r * cols + c]);
  }
  std::vector<double> sorted(rows * cols);  // column-major
  for (std::size_t c = 0; c < cols; ++c) {
    std::copy_n(all_keys.begin() + static_cast<std::ptrdiff_t>(c * rows), rows, keys.begin());
    std::iota(idx.begin(), idx.end(), 0u);
    radix_sort(keys, idx, keys_tmp, idx_tmp);
    for (std::size_t i = 0; i < rows; ++i) {
      sorted[c * rows + i] = av[idx[i] * cols + c];
      perm[c * rows + i] = idx[i];
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < cols; ++c) out[i * cols + c] = sorted[c * rows + i];
  }
  auto pa = Access::node(a);
  Node* ra = pa.get();
  return detail::make_result(a.shape(), std::move(out), {pa},
                             [ra, perm = std::move(perm), rows, cols](const Node& self) {
                               double* ga = ra->accum();
                               if (!ga) return;
                               for (std::size_t c = 0; c < cols; ++c) {
                                 const std::size_t* p = perm.data() + c * rows;
                                 for (std::size_t i = 0; i < rows; ++i) {
                                   ga[p[i] * cols + c] += self.grad[i * cols + c];
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Structural

Tensor select_columns(const Tensor& a, std::span<const std::size_t> columns) {
  detail::require_rank(a, 2, "select_columns");
  const std::size_t rows = a.rows(), cols = a.cols(), k = columns.size();
  for (std::size_t c : columns) {
    if (c >= cols) fail(ErrorCode::invalid_argument, "select_columns: column out of range");
  }
  const auto av = a.values();
  std::vector<double> out(rows * k);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = av[r * cols + columns[j]];
  }
  std::vector<std::size_t> idx(columns.begin(), columns.end());
  auto pa = Access::node(a);
  Node* ra = pa.get();
  return detail::make_result(Shape{rows, k}, std::move(out), {pa},
                             [ra, idx = std::move(idx), rows, cols](const Node& self) {
                               double* ga = ra->accum();
                               if (!ga) return;
                               const std::size_t k = idx.size();
                               for (std::size_t r = 0; r < rows; ++r) {
                                 for (std::size_t j = 0; j < k; ++j) {
                                   ga[r * cols + idx[j]] += self.grad[r * k + j];
                                 }
                               }
                             });
}

Tensor merge_columns(const Tensor& a, std::span<const std::size_t> a_columns,
                     const Tensor& b, std::span<const std::size_t> b_columns,
                     std::size_t width) {
  detail::require_rank(a, 2, "merge_columns");
  detail::require_rank(b, 2, "merge_columns");
  const std::size_t rows = a.rows();
  if (b.rows() != rows || a.cols() != a_columns.size() || b.cols() != b_columns.size() ||
      a_columns.size() + b_columns.size() != width) {
    fail(ErrorCode::shape_mismatch, "merge_columns: inconsistent shapes");
  }
  std::vector<std::size_t> ia(a_columns.begin(), a_columns.end());
  std::vector<std::size_t> ib(b_columns.begin(), b_columns.end());
  std::vector<double> out(rows * width);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < ia.size(); ++j) out[r * width + ia[j]] = av[r * ia.size() + j];
    for (std::size_t j = 0; j < ib.size(); ++j) out[r * width + ib[j]] = bv[r * ib.size() + j];
  }
  auto pa = Access::node(a);
  auto pb = Access::node(b);
  Node* ra = pa.get();
  Node* rb = pb.get();
  return detail::make_result(
      Shape{rows, width}, std::move(out), {pa, pb},
      [ra, rb, ia = std::move(ia), ib = std::move(ib), rows, width](const Node& self) {
        if (double* ga = ra->accum()) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < ia.size(); ++j) {
              ga[r * ia.size() + j] += self.grad[r * width + ia[j]];
            }
          }
        }
        if (double* gb = rb->accum()) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < ib.size(); ++j) {
              gb[r * ib.size() + j] += self.grad[r * width + ib[j]];
            }
          }
        }
      });
}

Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  detail::require_rank(a, 2, "add_row_vector");
  const std::size_t rows = a.rows(), cols = a.cols();
  if (bias.size() != cols) {
    fail(ErrorCode::shape_mismatch, "add_row_vector: bias " + shape_string(bias.shape()) +
                                        " vs matrix " + shape_string(a.shape()));
  }
  const auto av = a.values();
  const auto bv = bias.values();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] + bv[c];
  }
  auto pa = Access::node(a);
  auto pb = Access::node(bias);
  Node* ra = pa.get();
  Node* rb = pb.get();
  return detail::make_result(a.shape(), std::move(out), {pa, pb},
                             [ra, rb, rows, cols](const Node& self) {
                               const double* g = self.grad.data();
                               if (double* ga = ra->accum()) {
                                 for (std::size_t i = 0; i < rows * cols; ++i) ga[i] += g[i];
                               }
                               if (double* gb = rb->accum()) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                                 }
                               }
                             });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require_rank(x, 2, "affine");
  detail::require_rank(weight, 2, "affine");
  const std::size_t m = x.rows(), k = x.cols(), n = weight.cols();
  if (weight.rows() != k || bias.size() != n) {
    fail(ErrorCode::shape_mismatch, "affine: " + shape_string(x.shape()) + " . " +
                                        shape_string(weight.shape()) + " + " +
                                        shape_string(bias.shape()));
  }
  std::vector<double> out(m * n);
  {
    detail::ConstMap X(x.values().data(), m, k);
    detail::ConstMap W(weight.values().data(), k, n);
    Eigen::Map<const Eigen::RowVectorXd> b(bias.values().data(), static_cast<Eigen::Index>(n));
    detail::Map Y(out.data(), m, n);
    Y.noalias() = X * W;
    Y.rowwise() += b;
  }
  auto px = Access::node(x);
  auto pw = Access::node(weight);
  auto pb = Access::node(bias);
  Node* rx = px.get();
  Node* rw = pw.get();
  Node* rb = pb.get();
  return detail::make_result(
      Shape{m, n}, std::move(out), {px, pw, pb}, [rx, rw, rb, m, k, n](const Node& self) {
        detail::ConstMap G(self.grad.data(), m, n);
        if (double* gx = rx->accum()) {
          detail::ConstMap W(rw->value.data(), k, n);
          detail::Map(gx, m, k).noalias() += G * W.transpose();
        }
        if (double* gw = rw->accum()) {
          detail::ConstMap X(rx->value.data(), m, k);
          detail::Map(gw, k, n).noalias() += X.transpose() * G;
        }
        if (double* gb = rb->accum()) {
          const double* g = self.grad.data();
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
          }
        }
      });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  detail::require_rank(a, 2, "gather_rows");
  const std::size_t n = a.rows(), cols = a.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * cols);
  const auto av = a.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) fail(ErrorCode::invalid_argument, "gather_rows: row out of range");
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(idx[i] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  auto pa = Access::node(a);
  Node* ra = pa.get();
  const std::size_t count = idx.size();
  return detail::make_result(Shape{count, cols}, std::move(out), {pa},
                             [ra, idx = std::move(idx), cols](const Node& self) {
                               double* ga = ra->accum();
                               if (!ga) return;
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   ga[idx[i] * cols + c] += self.grad[i * cols + c];
                                 }
                               }
                             });
}

}  // namespace swnf
