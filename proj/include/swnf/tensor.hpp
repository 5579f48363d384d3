#pragma once

// Dense float64 tensors with a dynamic reverse-mode tape.
//
// A Tensor is a shared handle to a node. Nodes created by an operation on at
// least one gradient-tracking input record their parents and a local gradient
// rule; creation order is a topological order of the graph, and backward()
// replays the recorded rules in reverse creation order. A graph can be
// differentiated once: backward() releases it, a second call is an error.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace swnf {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
struct Access;
}

class Tensor {
 public:
  // Scalar zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  // Row-major [rows x cols] from nested initializer lists.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // rank 2 only
  std::size_t cols() const;  // rank 2 only
  bool is_scalar() const { return size() == 1 && rank() <= 1; }

  std::span<const double> values() const;
  double item() const;
  double operator[](std::size_t flat) const { return values()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  // Mutable access is only allowed on leaves; used by optimizers.
  std::span<double> mutable_values();

  bool requires_grad() const;
  bool is_leaf() const;

  // Empty span until a backward pass reached this tensor.
  std::span<const double> grad() const;
  bool has_grad() const { return !grad().empty(); }
  void zero_grad();

  // Fresh leaf holding a copy of the values.
  Tensor clone(bool requires_grad = false) const;
  // Shares nothing with the graph; never tracked.
  Tensor detach() const { return clone(false); }

  // Gradient of this scalar w.r.t. every tracked ancestor, accumulated into
  // leaf grad buffers.
  void backward() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;

  friend struct detail::Access;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

enum class UnaryOp { exp, log, tanh, relu, negate, square, abs };
enum class BinaryOp { add, sub, mul };
enum class ReduceOp { sum, mean };

// Binary ops need equal shapes, or one side a scalar.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(UnaryOp op, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
Tensor operator*(const Tensor& a, double c);
inline Tensor operator*(double c, const Tensor& a) { return a * c; }
Tensor operator+(const Tensor& a, double c);

// [m x k] . [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Without an axis the result is a scalar. With an axis the axis is removed.
Tensor reduce(ReduceOp op, const Tensor& a, std::optional<std::size_t> axis = std::nullopt);
Tensor sum(const Tensor& a, std::optional<std::size_t> axis = std::nullopt);
Tensor mean(const Tensor& a, std::optional<std::size_t> axis = std::nullopt);

// Stable ascending sort of a 1-D tensor. permutation[i] is the input index
// that lands at sorted position i. The gradient routes through the fixed
// permutation.
struct SortResult {
  Tensor values;
  std::vector<std::size_t> permutation;
};
SortResult sort_with_permutation(const Tensor& a);

// Stable ascending sort of every column of a [rows x cols] matrix.
Tensor sort_columns(const Tensor& a);

// Structural ops used by coupling layers.
Tensor select_columns(const Tensor& a, std::span<const std::size_t> columns);
// Builds [rows x width] with a's columns at a_columns and b's at b_columns.
Tensor merge_columns(const Tensor& a, std::span<const std::size_t> a_columns,
                     const Tensor& b, std::span<const std::size_t> b_columns,
                     std::size_t width);
// [rows x cols] + bias[cols] added to every row.
Tensor add_row_vector(const Tensor& a, const Tensor& bias);
// x . weight + bias on every row; one node for a dense layer.
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Rows of a rank-2 tensor picked by index (repeats allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

}  // namespace swnf
