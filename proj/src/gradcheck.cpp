#include "fgnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fgnn/error.hpp"

namespace fgnn {
namespace {

double evaluate(const std::function<Tensor(Tape&)>& f) {
  Tape tape;
  const double v = f(tape).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f,
                           const std::vector<Tensor>& leaves, double epsilon, double floor) {
  std::vector<Tensor> tracked = leaves;
  for (Tensor& leaf : tracked) {
    if (!leaf.requires_grad()) throw ContractError("grad_check: leaf does not require grad");
    if (!leaf.value().allFinite()) throw NumericError("grad_check: non-finite point");
    leaf.zero_grad();
  }
  {
    Tape tape;
    Tensor out = f(tape);
    if (!std::isfinite(out.item())) throw NumericError("grad_check: non-finite function value");
    tape.backward(out);
  }

  GradCheckResult result;
  for (Tensor& leaf : tracked) {
    const Matrix analytic = leaf.grad();
    for (Index i = 0; i < leaf.size(); ++i) {
      double& x = leaf.mutable_value().data()[i];
      const double saved = x;
      x = saved + epsilon;
      const double up = evaluate(f);
      x = saved - epsilon;
      const double down = evaluate(f);
      x = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic.data()[i];
      const double diff = std::abs(a - numeric);
      result.max_absolute_error = std::max(result.max_absolute_error, diff);
      result.max_relative_error =
          std::max(result.max_relative_error, diff / std::max(floor, std::abs(a) + std::abs(numeric)));
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace fgnn
