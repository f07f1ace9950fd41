#include "fgnn/tensor.hpp"

#include "fgnn/error.hpp"

namespace fgnn {

std::string Shape::to_string() const {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

Tensor Tensor::constant(Matrix value) {
  Tensor t;
  t.storage_ = std::make_shared<detail::Storage>();
  t.storage_->value = std::move(value);
  return t;
}

Tensor Tensor::parameter(Matrix value) {
  Tensor t = constant(std::move(value));
  t.storage_->requires_grad = true;
  t.storage_->grad = Matrix::Zero(t.rows(), t.cols());
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return requires_grad ? parameter(std::move(m)) : constant(std::move(m));
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item: expected a 1x1 tensor, got " + shape().to_string());
  }
  return storage_->value(0, 0);
}

void Tensor::zero_grad() {
  if (storage_->requires_grad) storage_->grad.setZero();
}

Tensor Tape::track(Matrix value, bool needs_grad, BackwardRule rule) {
  if (!needs_grad) return Tensor::constant(std::move(value));
  Tensor out = Tensor::parameter(std::move(value));
  entries_.push_back({out.storage_, std::move(rule)});
  return out;
}

Tensor Tape::record(Matrix value, std::initializer_list<const Tensor*> inputs,
                    BackwardRule rule) {
  bool needs_grad = false;
  for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
  return track(std::move(value), needs_grad, std::move(rule));
}

Tensor Tape::record(Matrix value, const std::vector<Tensor>& inputs, BackwardRule rule) {
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  return track(std::move(value), needs_grad, std::move(rule));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? loss.shape().to_string() : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss is not on the tape");
  }
  for (auto& e : entries_) {
    e.output->grad.setZero();
    e.output->reached = false;
  }
  loss.storage_->grad(0, 0) += 1.0;
  loss.storage_->reached = true;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output->reached) continue;
    it->rule(it->output->grad, it->output->value);
  }
}

}  // namespace fgnn
