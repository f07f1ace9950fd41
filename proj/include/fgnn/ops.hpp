#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fgnn/tensor.hpp"

// Differentiable primitives. Every function evaluates eagerly and, when any
// operand requires a gradient, appends its backward rule to `tape`.
namespace fgnn::ops {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_cols(Tape& tape, const Tensor& a, Index start, Index count);

// Row i of the result is row index[i] of `a` (embedding lookup).
Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const int> index);
// Row s of the result is the sum of rows r of `a` with segment[r] == s.
Tensor segment_sum(Tape& tape, const Tensor& a, std::span<const int> segment,
                   Index num_segments);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
// Adds the 1 x c row `bias` to every row of `a`.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias);
// Multiplies row r of `a` by the scalar column(r, 0).
Tensor mul_col(Tape& tape, const Tensor& a, const Tensor& column);

Tensor relu(Tape& tape, const Tensor& a);
Tensor leaky_relu(Tape& tape, const Tensor& a, double slope);
Tensor exp(Tape& tape, const Tensor& a);
Tensor log(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);

Tensor sum(Tape& tape, const Tensor& a);
// axis 0 reduces rows (result 1 x c), axis 1 reduces columns (result r x 1).
Tensor sum_axis(Tape& tape, const Tensor& a, int axis);
Tensor mean_axis(Tape& tape, const Tensor& a, int axis);

Tensor softmax_rows(Tape& tape, const Tensor& a);
// Row-wise softmax restricted to the entries where `mask` is true; the
// result is exactly zero elsewhere. Every row needs at least one true entry.
Tensor masked_softmax(Tape& tape, const Tensor& a, const Mask& mask);
// Softmax of the n x 1 column `logits` within each segment, restricted to
// rows whose `eligible` flag is set (all rows when `eligible` is empty).
// Ineligible rows come out as exact zeros. Every segment that owns a row
// must own at least one eligible row.
Tensor segment_softmax(Tape& tape, const Tensor& logits, std::span<const int> segment,
                       Index num_segments, std::span<const std::uint8_t> eligible = {});

// Sum over rows of -log softmax(logits.row(r))[labels[r]].
Tensor log_softmax_nll(Tape& tape, const Tensor& logits, std::span<const int> labels);

}  // namespace fgnn::ops
