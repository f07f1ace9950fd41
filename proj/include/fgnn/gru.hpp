#pragma once

#include "fgnn/tensor.hpp"

namespace fgnn {

/// Gated recurrent unit weights, gates stacked as [reset; update; candidate].
struct GruParams {
  Tensor w_input;   // 3h x input_size
  Tensor w_hidden;  // 3h x h
  Tensor b_input;   // 1 x 3h
  Tensor b_hidden;  // 1 x 3h

  Index hidden_size() const { return w_hidden.cols(); }
  Index input_size() const { return w_input.cols(); }
};

GruParams make_gru_params(Index input_size, Index hidden_size);

/// One GRU step over a batch of rows:
///   r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
///   z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
///   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
///   h' = (1 - z) * n + z * h
/// `input` is B x input_size, `hidden` is B x hidden_size.
Tensor gru_cell(Tape& tape, const Tensor& input, const Tensor& hidden, const GruParams& params);

}  // namespace fgnn
