#include "fgnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fgnn/error.hpp"

namespace fgnn::ops {
namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().to_string() + " vs " +
                   b.shape().to_string());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

void require_column(const char* op, const Tensor& a) {
  if (a.cols() != 1) {
    throw ShapeError(std::string(op) + ": expected an n x 1 column, got " + a.shape().to_string());
  }
}

void require_segments(const char* op, std::span<const int> segment, Index rows,
                      Index num_segments) {
  if (static_cast<Index>(segment.size()) != rows) {
    throw ShapeError(std::string(op) + ": " + std::to_string(segment.size()) +
                     " segment ids for " + std::to_string(rows) + " rows");
  }
  for (int s : segment) {
    if (s < 0 || s >= num_segments) {
      throw ContractError(std::string(op) + ": segment id " + std::to_string(s) +
                          " outside [0, " + std::to_string(num_segments) + ")");
    }
  }
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix value = a.value() * b.value();
  return tape.record(std::move(value), {&a, &b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) a.accumulate_grad(g * b.value().transpose());
    if (b.requires_grad()) b.accumulate_grad(a.value().transpose() * g);
  });
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Matrix value = a.value() * b.value().transpose();
  return tape.record(std::move(value), {&a, &b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) a.accumulate_grad(g * b.value());
    if (b.requires_grad()) b.accumulate_grad(g.transpose() * a.value());
  });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  Matrix value = a.value().transpose();
  return tape.record(std::move(value), {&a},
                     [a](const Matrix& g, const Matrix&) { a.accumulate_grad(g.transpose()); });
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Index cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != parts.front().rows()) shape_error("concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Matrix value(parts.front().rows(), cols);
  Index offset = 0;
  for (const Tensor& p : parts) {
    value.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return tape.record(std::move(value), parts, [parts](const Matrix& g, const Matrix&) {
    Index off = 0;
    for (const Tensor& p : parts) {
      p.accumulate_grad(g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Index rows = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != parts.front().cols()) shape_error("concat_rows", parts.front(), p);
    rows += p.rows();
  }
  Matrix value(rows, parts.front().cols());
  Index offset = 0;
  for (const Tensor& p : parts) {
    value.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return tape.record(std::move(value), parts, [parts](const Matrix& g, const Matrix&) {
    Index off = 0;
    for (const Tensor& p : parts) {
      p.accumulate_grad(g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

Tensor slice_cols(Tape& tape, const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + a.shape().to_string());
  }
  Matrix value = a.value().middleCols(start, count);
  return tape.record(std::move(value), {&a}, [a, start, count](const Matrix& g, const Matrix&) {
    if (!a.requires_grad()) return;
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    a.accumulate_grad(full);
  });
}

Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const int> index) {
  Matrix value(static_cast<Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(index[i]) + " out of " +
                       a.shape().to_string());
    }
    value.row(static_cast<Index>(i)) = a.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return tape.record(std::move(value), {&a}, [a, idx = std::move(idx)](const Matrix& g, const Matrix&) {
    if (!a.requires_grad()) return;
    Matrix delta = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) delta.row(idx[i]) += g.row(static_cast<Index>(i));
    a.accumulate_grad(delta);
  });
}

Tensor segment_sum(Tape& tape, const Tensor& a, std::span<const int> segment, Index num_segments) {
  require_segments("segment_sum", segment, a.rows(), num_segments);
  Matrix value = Matrix::Zero(num_segments, a.cols());
  for (Index r = 0; r < a.rows(); ++r) value.row(segment[r]) += a.value().row(r);
  std::vector<int> seg(segment.begin(), segment.end());
  return tape.record(std::move(value), {&a}, [a, seg = std::move(seg)](const Matrix& g, const Matrix&) {
    if (!a.requires_grad()) return;
    Matrix delta(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) delta.row(r) = g.row(seg[r]);
    a.accumulate_grad(delta);
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Matrix value = a.value() + b.value();
  return tape.record(std::move(value), {&a, &b}, [a, b](const Matrix& g, const Matrix&) {
    a.accumulate_grad(g);
    b.accumulate_grad(g);
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Matrix value = a.value() - b.value();
  return tape.record(std::move(value), {&a, &b}, [a, b](const Matrix& g, const Matrix&) {
    a.accumulate_grad(g);
    b.accumulate_grad(-g);
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Matrix value = a.value().cwiseProduct(b.value());
  return tape.record(std::move(value), {&a, &b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) a.accumulate_grad(g.cwiseProduct(b.value()));
    if (b.requires_grad()) b.accumulate_grad(g.cwiseProduct(a.value()));
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Matrix value = a.value() * factor;
  return tape.record(std::move(value), {&a},
                     [a, factor](const Matrix& g, const Matrix&) { a.accumulate_grad(g * factor); });
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) shape_error("add_row", a, bias);
  Matrix value = a.value().rowwise() + bias.value().row(0);
  return tape.record(std::move(value), {&a, &bias}, [a, bias](const Matrix& g, const Matrix&) {
    a.accumulate_grad(g);
    if (bias.requires_grad()) bias.accumulate_grad(g.colwise().sum());
  });
}

Tensor mul_col(Tape& tape, const Tensor& a, const Tensor& column) {
  if (column.cols() != 1 || column.rows() != a.rows()) shape_error("mul_col", a, column);
  Matrix value = column.value().col(0).asDiagonal() * a.value();
  return tape.record(std::move(value), {&a, &column}, [a, column](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) a.accumulate_grad(column.value().col(0).asDiagonal() * g);
    if (column.requires_grad()) {
      column.accumulate_grad(g.cwiseProduct(a.value()).rowwise().sum());
    }
  });
}

Tensor relu(Tape& tape, const Tensor& a) {
  Matrix value = a.value().cwiseMax(0.0);
  return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix&) {
    a.accumulate_grad((a.value().array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Tensor leaky_relu(Tape& tape, const Tensor& a, double slope) {
  Matrix value = (a.value().array() > 0.0).select(a.value().array(), slope * a.value().array());
  return tape.record(std::move(value), {&a}, [a, slope](const Matrix& g, const Matrix&) {
    a.accumulate_grad((a.value().array() > 0.0).select(g.array(), slope * g.array()).matrix());
  });
}

Tensor exp(Tape& tape, const Tensor& a) {
  Matrix value = a.value().array().exp();
  return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix& out) {
    a.accumulate_grad(g.cwiseProduct(out));
  });
}

Tensor log(Tape& tape, const Tensor& a) {
  Matrix value = a.value().array().log();
  return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix&) {
    a.accumulate_grad(g.cwiseQuotient(a.value()));
  });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  Matrix value = (1.0 + (-a.value().array()).exp()).inverse();
  return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix& out) {
    a.accumulate_grad((g.array() * out.array() * (1.0 - out.array())).matrix());
  });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  Matrix value = a.value().array().tanh();
  return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix& out) {
    a.accumulate_grad((g.array() * (1.0 - out.array().square())).matrix());
  });
}

Tensor sum(Tape& tape, const Tensor& a) {
  Matrix value(1, 1);
  value(0, 0) = a.value().sum();
  return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix&) {
    a.accumulate_grad(Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Tensor sum_axis(Tape& tape, const Tensor& a, int axis) {
  if (axis == 0) {
    Matrix value = a.value().colwise().sum();
    return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix&) {
      a.accumulate_grad(g.replicate(a.rows(), 1));
    });
  }
  if (axis == 1) {
    Matrix value = a.value().rowwise().sum();
    return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix&) {
      a.accumulate_grad(g.replicate(1, a.cols()));
    });
  }
  throw ShapeError("sum_axis: axis must be 0 or 1, got " + std::to_string(axis));
}

Tensor mean_axis(Tape& tape, const Tensor& a, int axis) {
  Tensor total = sum_axis(tape, a, axis);
  const Index n = axis == 0 ? a.rows() : a.cols();
  if (n == 0) throw ShapeError("mean_axis: empty axis in " + a.shape().to_string());
  return scale(tape, total, 1.0 / static_cast<double>(n));
}

namespace {

// Shared backward for any softmax whose rows (or segments) are independent:
// dL/dx_i = y_i (g_i - sum_j g_j y_j), with the sum taken over the same group.
Tensor masked_softmax_impl(Tape& tape, const Tensor& a, const Mask& mask) {
  Matrix value = Matrix::Zero(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < a.cols(); ++c) {
      if (mask(r, c)) peak = std::max(peak, a.value()(r, c));
    }
    if (peak == -std::numeric_limits<double>::infinity()) {
      throw ContractError("masked_softmax: row " + std::to_string(r) + " has an empty mask");
    }
    double total = 0.0;
    for (Index c = 0; c < a.cols(); ++c) {
      if (!mask(r, c)) continue;
      value(r, c) = std::exp(a.value()(r, c) - peak);
      total += value(r, c);
    }
    value.row(r) /= total;
  }
  return tape.record(std::move(value), {&a}, [a](const Matrix& g, const Matrix& out) {
    // Off-mask outputs are zero, so they drop out of both terms.
    Vector inner = g.cwiseProduct(out).rowwise().sum();
    a.accumulate_grad((out.array() * (g.colwise() - inner).array()).matrix());
  });
}

}  // namespace

Tensor softmax_rows(Tape& tape, const Tensor& a) {
  return masked_softmax_impl(tape, a, Mask::Constant(a.rows(), a.cols(), true));
}

Tensor masked_softmax(Tape& tape, const Tensor& a, const Mask& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ShapeError("masked_softmax: mask " + Shape{mask.rows(), mask.cols()}.to_string() +
                     " vs " + a.shape().to_string());
  }
  return masked_softmax_impl(tape, a, mask);
}

Tensor segment_softmax(Tape& tape, const Tensor& logits, std::span<const int> segment,
                       Index num_segments, std::span<const std::uint8_t> eligible) {
  require_column("segment_softmax", logits);
  require_segments("segment_softmax", segment, logits.rows(), num_segments);
  if (!eligible.empty() && static_cast<Index>(eligible.size()) != logits.rows()) {
    throw ShapeError("segment_softmax: " + std::to_string(eligible.size()) +
                     " eligibility flags for " + std::to_string(logits.rows()) + " rows");
  }
  const auto is_eligible = [&](Index r) { return eligible.empty() || eligible[r] != 0; };
  const Index n = logits.rows();
  const auto& x = logits.value();

  std::vector<double> peak(num_segments, -std::numeric_limits<double>::infinity());
  // 1: row present, 2: eligible row present. NaN logits propagate to the output.
  std::vector<std::uint8_t> owned(num_segments, 0);
  for (Index r = 0; r < n; ++r) {
    auto& state = owned[segment[r]];
    state = std::max<std::uint8_t>(state, 1);
    if (!is_eligible(r)) continue;
    state = 2;
    double& top = peak[segment[r]];
    if (std::isnan(x(r, 0)) || x(r, 0) > top) top = std::isnan(top) ? top : x(r, 0);
  }
  for (Index s = 0; s < num_segments; ++s) {
    if (owned[s] == 1) {
      throw ContractError("segment_softmax: segment " + std::to_string(s) +
                          " has no eligible entry");
    }
  }
  std::vector<double> total(num_segments, 0.0);
  Matrix value = Matrix::Zero(n, 1);
  for (Index r = 0; r < n; ++r) {
    if (!is_eligible(r)) continue;
    value(r, 0) = std::exp(x(r, 0) - peak[segment[r]]);
    total[segment[r]] += value(r, 0);
  }
  for (Index r = 0; r < n; ++r) {
    if (is_eligible(r)) value(r, 0) /= total[segment[r]];
  }

  std::vector<int> seg(segment.begin(), segment.end());
  return tape.record(std::move(value), {&logits},
                     [logits, seg = std::move(seg), num_segments](const Matrix& g, const Matrix& out) {
                       std::vector<double> inner(num_segments, 0.0);
                       const Index rows = out.rows();
                       for (Index r = 0; r < rows; ++r) inner[seg[r]] += g(r, 0) * out(r, 0);
                       Matrix delta(rows, 1);
                       for (Index r = 0; r < rows; ++r) {
                         delta(r, 0) = out(r, 0) * (g(r, 0) - inner[seg[r]]);
                       }
                       logits.accumulate_grad(delta);
                     });
}

Tensor log_softmax_nll(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) {
    throw ShapeError("log_softmax_nll: " + std::to_string(labels.size()) + " labels for " +
                     logits.shape().to_string() + " logits");
  }
  const auto& z = logits.value();
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Index r = 0; r < z.rows(); ++r) {
    const int label = labels[r];
    if (label < 0 || label >= z.cols()) {
      throw VocabError("log_softmax_nll: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(z.cols()) + ")");
    }
    const double peak = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - peak).exp();
    const double total = probs.row(r).sum();
    probs.row(r) /= total;
    loss += peak + std::log(total) - z(r, label);
  }
  Matrix value(1, 1);
  value(0, 0) = loss;
  std::vector<int> lab(labels.begin(), labels.end());
  return tape.record(std::move(value), {&logits},
                     [logits, probs = std::move(probs), lab = std::move(lab)](const Matrix& g,
                                                                              const Matrix&) {
                       Matrix delta = probs;
                       for (std::size_t r = 0; r < lab.size(); ++r) delta(r, lab[r]) -= 1.0;
                       logits.accumulate_grad(delta * g(0, 0));
                     });
}

}  // namespace fgnn::ops
