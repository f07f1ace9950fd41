#include <doctest.h>

#include <cmath>
#include <random>

#include "fgnn/error.hpp"
#include "fgnn/gradcheck.hpp"
#include "fgnn/gru.hpp"
#include "fgnn/ops.hpp"
#include "support.hpp"

using namespace fgnn;

namespace {

GruParams random_gru(Index in, Index hs, std::mt19937_64& rng) {
  GruParams p = make_gru_params(in, hs);
  for (Tensor* t : {&p.w_input, &p.w_hidden, &p.b_input, &p.b_hidden}) {
    t->mutable_value() = fgnn::test::random_matrix(t->rows(), t->cols(), rng, 0.7);
  }
  return p;
}

}  // namespace

TEST_CASE("gru cell matches a scalar reimplementation") {
  std::mt19937_64 rng(3);
  const GruParams p = random_gru(4, 3, rng);
  const Matrix x = fgnn::test::random_matrix(2, 4, rng);
  const Matrix h = fgnn::test::random_matrix(2, 3, rng);
  Tape tape;
  const Matrix got = gru_cell(tape, Tensor::constant(x), Tensor::constant(h), p).value();
  CHECK(got.isApprox(fgnn::test::gru_by_hand(x, h, p), 1e-14));
}

TEST_CASE("gru cell with zero parameters halves the hidden state toward tanh(0)") {
  const GruParams p = make_gru_params(2, 2);
  Matrix h(1, 2);
  h << 0.8, -0.4;
  Tape tape;
  const Matrix got = gru_cell(tape, Tensor::constant(Matrix::Ones(1, 2)), Tensor::constant(h), p).value();
  CHECK(got.isApprox(0.5 * h));  // z = 0.5, n = 0
}

TEST_CASE("gru cell gradients match central differences") {
  std::mt19937_64 rng(4);
  const GruParams p = random_gru(3, 2, rng);
  Tensor x = fgnn::test::random_parameter(2, 3, rng);
  Tensor h = fgnn::test::random_parameter(2, 2, rng);
  const auto r = grad_check(
      [&](Tape& t) {
        const Tensor out = gru_cell(t, x, h, p);
        return ops::sum(t, ops::mul(t, out, ops::tanh(t, out)));
      },
      {x, h, p.w_input, p.w_hidden, p.b_input, p.b_hidden});
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("gru cell rejects mismatched shapes") {
  const GruParams p = make_gru_params(3, 2);
  Tape tape;
  CHECK_THROWS_AS(gru_cell(tape, Tensor::constant(Matrix::Zero(1, 4)), Tensor::constant(Matrix::Zero(1, 2)), p),
                  ShapeError);
  CHECK_THROWS_AS(gru_cell(tape, Tensor::constant(Matrix::Zero(1, 3)), Tensor::constant(Matrix::Zero(2, 2)), p),
                  ShapeError);
}
