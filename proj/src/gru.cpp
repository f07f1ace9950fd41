#include "fgnn/gru.hpp"

#include "fgnn/error.hpp"
#include "fgnn/ops.hpp"

namespace fgnn {

GruParams make_gru_params(Index input_size, Index hidden_size) {
  return {Tensor::parameter(Matrix::Zero(3 * hidden_size, input_size)),
          Tensor::parameter(Matrix::Zero(3 * hidden_size, hidden_size)),
          Tensor::parameter(Matrix::Zero(1, 3 * hidden_size)),
          Tensor::parameter(Matrix::Zero(1, 3 * hidden_size))};
}

Tensor gru_cell(Tape& tape, const Tensor& input, const Tensor& hidden, const GruParams& params) {
  const Index h = params.hidden_size();
  if (params.w_hidden.rows() != 3 * h || params.w_input.rows() != 3 * h ||
      params.b_input.cols() != 3 * h || params.b_hidden.cols() != 3 * h) {
    throw ShapeError("gru_cell: inconsistent parameter shapes, w_input " +
                     params.w_input.shape().to_string() + ", w_hidden " +
                     params.w_hidden.shape().to_string());
  }
  if (input.cols() != params.input_size()) {
    throw ShapeError("gru_cell: input " + input.shape().to_string() + " vs w_input " +
                     params.w_input.shape().to_string());
  }
  if (hidden.cols() != h || hidden.rows() != input.rows()) {
    throw ShapeError("gru_cell: hidden " + hidden.shape().to_string() + " vs input " +
                     input.shape().to_string());
  }

  Tensor gi = ops::add_row(tape, ops::matmul_nt(tape, input, params.w_input), params.b_input);
  Tensor gh = ops::add_row(tape, ops::matmul_nt(tape, hidden, params.w_hidden), params.b_hidden);

  Tensor reset = ops::sigmoid(tape, ops::add(tape, ops::slice_cols(tape, gi, 0, h),
                                             ops::slice_cols(tape, gh, 0, h)));
  Tensor update = ops::sigmoid(tape, ops::add(tape, ops::slice_cols(tape, gi, h, h),
                                              ops::slice_cols(tape, gh, h, h)));
  Tensor candidate = ops::tanh(
      tape, ops::add(tape, ops::slice_cols(tape, gi, 2 * h, h),
                     ops::mul(tape, reset, ops::slice_cols(tape, gh, 2 * h, h))));
  // (1 - z) * n + z * h == n + z * (h - n)
  return ops::add(tape, candidate, ops::mul(tape, update, ops::sub(tape, hidden, candidate)));
}

}  // namespace fgnn
