#pragma once

#include <random>
#include <vector>

#include <cmath>

#include "fgnn/gru.hpp"
#include "fgnn/ingest.hpp"
#include "fgnn/tensor.hpp"

namespace fgnn::test {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Tensor random_parameter(Index rows, Index cols, std::mt19937_64& rng, double stddev = 1.0) {
  return Tensor::parameter(random_matrix(rows, cols, rng, stddev));
}

inline Session session_of(std::vector<ItemIndex> items, double end_time = 0.0) {
  Session s;
  s.items = std::move(items);
  s.end_time = end_time;
  return s;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Scalar-loop GRU: r, z, n gates stacked in that order along the rows of the
// weight matrices; the reset gate scales (W_hn h + b_hn).
inline Matrix gru_by_hand(const Matrix& x, const Matrix& h, const GruParams& p) {
  const Index hs = h.cols();
  Matrix out(h.rows(), hs);
  for (Index b = 0; b < x.rows(); ++b) {
    auto pre = [&](Index gate, Index j, bool hidden) {
      const Matrix& w = hidden ? p.w_hidden.value() : p.w_input.value();
      const Matrix& bias = hidden ? p.b_hidden.value() : p.b_input.value();
      const Matrix& in = hidden ? h : x;
      double s = bias(0, gate * hs + j);
      for (Index k = 0; k < in.cols(); ++k) s += w(gate * hs + j, k) * in(b, k);
      return s;
    };
    for (Index j = 0; j < hs; ++j) {
      const double r = sigmoid(pre(0, j, false) + pre(0, j, true));
      const double z = sigmoid(pre(1, j, false) + pre(1, j, true));
      const double n = std::tanh(pre(2, j, false) + r * pre(2, j, true));
      out(b, j) = (1.0 - z) * n + z * h(b, j);
    }
  }
  return out;
}

}  // namespace fgnn::test
