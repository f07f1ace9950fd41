#include <doctest.h>

#include "fgnn/error.hpp"
#include "fgnn/ops.hpp"
#include "fgnn/tensor.hpp"

using namespace fgnn;

TEST_CASE("shared storage: copies of a parameter alias one buffer") {
  Tensor p = Tensor::parameter(Matrix::Ones(2, 2));
  Tensor alias = p;
  alias.mutable_value()(0, 0) = 5.0;
  CHECK(p.value()(0, 0) == 5.0);
  CHECK(p.same_storage(alias));
  CHECK(p.grad().isZero());
}

TEST_CASE("item requires a 1x1 tensor") {
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor::constant(Matrix::Zero(1, 2)).item(), ShapeError);
}

TEST_CASE("constants are not tracked and produce no tape entries") {
  Tape tape;
  const Tensor a = Tensor::constant(Matrix::Ones(2, 2));
  const Tensor b = ops::add(tape, a, a);
  CHECK_FALSE(b.requires_grad());
  CHECK(tape.size() == 0);
  CHECK_THROWS_AS(tape.backward(ops::sum(tape, b)), ContractError);
}

TEST_CASE("backward of x*y + x by hand") {
  Tape tape;
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = Tensor::scalar(-2.0, true);
  const Tensor out = ops::add(tape, ops::mul(tape, x, y), x);
  CHECK(out.item() == -3.0);
  tape.backward(out);
  CHECK(x.grad()(0, 0) == doctest::Approx(-1.0));  // y + 1
  CHECK(y.grad()(0, 0) == doctest::Approx(3.0));   // x
}

TEST_CASE("leaf gradients accumulate across backward calls, intermediates do not") {
  Tensor x = Tensor::scalar(2.0, true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(ops::mul(tape, x, x));
  }
  CHECK(x.grad()(0, 0) == doctest::Approx(8.0));
  x.zero_grad();
  CHECK(x.grad()(0, 0) == 0.0);

  Tape tape;
  const Tensor sq = ops::mul(tape, x, x);
  const Tensor out = ops::scale(tape, sq, 3.0);
  tape.backward(out);
  tape.backward(out);
  CHECK(x.grad()(0, 0) == doctest::Approx(24.0));  // two identical passes of 12
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  Tensor x = Tensor::parameter(Matrix::Ones(2, 1));
  CHECK_THROWS_AS(tape.backward(ops::scale(tape, x, 2.0)), ContractError);
}

TEST_CASE("a tensor used twice receives both contributions") {
  Tape tape;
  Tensor x = Tensor::parameter(Matrix::Constant(1, 3, 2.0));
  tape.backward(ops::sum(tape, ops::add(tape, x, ops::scale(tape, x, 4.0))));
  CHECK(x.grad().isApprox(Matrix::Constant(1, 3, 5.0)));
}

TEST_CASE("shape strings") { CHECK(Shape{2, 3}.to_string() == "(2x3)"); }
