#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fgnn {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Shape {
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string to_string() const;
};

namespace detail {

struct Storage {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  // Set when backward() routes any upstream gradient into this tensor.
  bool reached = false;
};

}  // namespace detail

/// Dense two-dimensional tensor handle. Copies share storage, so a
/// parameter held in ModelParams and the same tensor used inside a forward
/// pass refer to one buffer. Vectors are 1 x n rows, scalars are 1 x 1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  Shape shape() const { return {rows(), cols()}; }
  Index rows() const { return storage_->value.rows(); }
  Index cols() const { return storage_->value.cols(); }
  Index size() const { return storage_->value.size(); }

  const Matrix& value() const { return storage_->value; }
  Matrix& mutable_value() { return storage_->value; }
  double item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  // Empty unless requires_grad().
  const Matrix& grad() const { return storage_->grad; }
  Matrix& mutable_grad() { return storage_->grad; }
  void zero_grad();

  // Accumulates `delta` into grad() when this tensor is tracked.
  template <typename Derived>
  void accumulate_grad(const Eigen::MatrixBase<Derived>& delta) const {
    if (!storage_->requires_grad) return;
    storage_->grad += delta;
    storage_->reached = true;
  }

  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  friend class Tape;
  std::shared_ptr<detail::Storage> storage_;
};

/// Ordered record of primitive applications. Each entry owns the backward
/// rule that maps the output's gradient onto its inputs; replaying entries
/// in reverse order is a valid reverse topological order because entries are
/// appended in execution order.
class Tape {
 public:
  using BackwardRule = std::function<void(const Matrix& upstream, const Matrix& output)>;

  /// Creates the output of a primitive. The output is tracked (and the rule
  /// recorded) only if one of `inputs` requires a gradient.
  Tensor record(Matrix value, std::initializer_list<const Tensor*> inputs,
                BackwardRule rule);
  Tensor record(Matrix value, const std::vector<Tensor>& inputs, BackwardRule rule);

  /// Reverse pass from a scalar loss. Leaf gradients accumulate across calls;
  /// intermediate gradients are reset on every call.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<detail::Storage> output;
    BackwardRule rule;
  };
  Tensor track(Matrix value, bool needs_grad, BackwardRule rule);

  std::vector<Entry> entries_;
};

}  // namespace fgnn
