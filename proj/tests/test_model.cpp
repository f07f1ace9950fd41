#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fgnn/error.hpp"
#include "fgnn/gradcheck.hpp"
#include "fgnn/graphs.hpp"
#include "fgnn/model.hpp"
#include "fgnn/ops.hpp"
#include "fgnn/train.hpp"
#include "support.hpp"

using namespace fgnn;
using fgnn::test::session_of;

namespace {

struct RefEdge {
  int src, dst;
  double weight;
};

// Loop-level weighted graph attention for one head.
Matrix reference_head(const Matrix& x, const std::vector<RefEdge>& edges, const Matrix& w,
                      const Matrix& a, double slope) {
  const Index width = w.rows();
  const Matrix h = x * w.transpose();
  Matrix out = Matrix::Zero(x.rows(), width);
  for (Index i = 0; i < x.rows(); ++i) {
    std::vector<std::pair<int, double>> logits;
    for (const RefEdge& e : edges) {
      if (e.dst != i) continue;
      double s = a(0, 2 * width) * e.weight;
      for (Index c = 0; c < width; ++c) s += a(0, c) * h(i, c) + a(0, width + c) * h(e.src, c);
      logits.emplace_back(e.src, s > 0 ? s : slope * s);
    }
    double top = -1e300, total = 0.0;
    for (auto& [j, s] : logits) top = std::max(top, s);
    for (auto& [j, s] : logits) total += std::exp(s - top);
    for (auto& [j, s] : logits) out.row(i) += std::exp(s - top) / total * h.row(j);
  }
  return out;
}

Matrix reference_encode(const std::vector<ItemIndex>& items, const std::vector<RefEdge>& edges,
                        const ModelParams& p, const ModelConfig& c) {
  Matrix x(static_cast<Index>(items.size()), c.dim);
  for (std::size_t i = 0; i < items.size(); ++i) x.row(static_cast<Index>(i)) = p.embedding.value().row(items[i]);
  for (int l = 0; l < c.layers; ++l) {
    std::vector<Matrix> heads;
    for (const HeadParams& hp : p.layers[l].heads) {
      heads.push_back(reference_head(x, edges, hp.node_map.value(), hp.attention.value(), c.leaky_slope));
    }
    if (c.averages_heads(l)) {
      Matrix mean = Matrix::Zero(x.rows(), c.dim);
      for (const Matrix& h : heads) mean += h;
      x = (mean / static_cast<double>(heads.size())).cwiseMax(0.0);
    } else {
      Matrix cat(x.rows(), c.dim);
      Index col = 0;
      for (const Matrix& h : heads) {
        cat.middleCols(col, h.cols()) = h.cwiseMax(0.0);
        col += h.cols();
      }
      x = cat;
    }
  }
  return x;
}

// One graph: GRU query, dot-product attention over the allowed rows.
Matrix reference_readout(const Matrix& x, const std::vector<bool>& allowed, const GruParams& gru, int steps) {
  const Index d = x.cols();
  Matrix q_star = Matrix::Zero(1, 2 * d), hidden = Matrix::Zero(1, d);
  for (int t = 0; t < steps; ++t) {
    hidden = fgnn::test::gru_by_hand(q_star, hidden, gru);
    double top = -1e300;
    for (Index i = 0; i < x.rows(); ++i) {
      if (allowed[i]) top = std::max(top, x.row(i).dot(hidden.row(0)));
    }
    double total = 0.0;
    Matrix read = Matrix::Zero(1, d);
    for (Index i = 0; i < x.rows(); ++i) {
      if (!allowed[i]) continue;
      const double w = std::exp(x.row(i).dot(hidden.row(0)) - top);
      total += w;
      read += w * x.row(i);
    }
    q_star << hidden, read / total;
  }
  return q_star;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.dim = 5;
  c.layers = 3;
  c.heads = 2;
  c.readout_steps = 3;
  return c;
}

struct Fixture {
  GlobalGraph global;
  std::vector<Session> sessions;
  explicit Fixture(std::uint64_t seed, int num_items = 10) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> item(0, num_items - 1), len(2, 5);
    for (int s = 0; s < 12; ++s) {
      std::vector<ItemIndex> items;
      const int n = len(rng);
      for (int i = 0; i < n; ++i) items.push_back(item(rng));
      sessions.push_back(session_of(items));
    }
    global = build_global_graph(sessions, num_items);
  }
};

}  // namespace

TEST_CASE("head widths split the dimension when concatenating and keep it when averaging") {
  ModelConfig c;
  c.dim = 100;
  c.heads = 8;
  c.layers = 3;
  const auto inner = c.head_widths(0);
  CHECK(std::accumulate(inner.begin(), inner.end(), 0) == 100);
  CHECK(inner.front() == 13);
  CHECK(inner.back() == 12);
  CHECK(c.head_widths(2) == std::vector<int>(8, 100));
  c.head_combine = HeadCombine::kMeanEveryLayer;
  CHECK(c.head_widths(0) == std::vector<int>(8, 100));

  ModelConfig bad = c;
  bad.head_combine = HeadCombine::kConcatThenMean;
  bad.heads = 101;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("parameter names are unique and stable") {
  const ModelParams p = ModelParams::zeros(tiny_config(), 7);
  const auto named = p.named();
  std::vector<std::string> names;
  for (const auto& [n, t] : named) names.push_back(n);
  CHECK(names.front() == "embedding");
  CHECK(names[1] == "layer0.head0.node_map");
  CHECK(names.back() == "output_map");
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
  CHECK(p.embedding.shape() == Shape{7, 5});
  CHECK(p.layers[0].heads[0].attention.shape() == Shape{1, 7});  // width 3
  CHECK(p.layers[2].heads[1].node_map.shape() == Shape{5, 5});
}

TEST_CASE("encoder, readout and scores match a loop-level reference") {
  for (ReadoutMode mode : {ReadoutMode::kMask, ReadoutMode::kPlain}) {
    Fixture fx(21);
    ModelConfig c = tiny_config();
    c.readout_mode = mode;
    const ModelParams p = init_params(c, 10, 0.6, 5);
    const BcsGraph g = sample_bcs(fx.global, fx.sessions[0], 1, 3, 8);
    const GraphBatchView view = GraphBatchView::from_graph(g);

    std::vector<RefEdge> edges;
    for (const auto& e : g.edges) edges.push_back({e.src, e.dst, static_cast<double>(e.weight)});
    const Matrix x_ref = reference_encode(g.nodes, edges, p, c);
    std::vector<bool> allowed;
    for (auto m : g.core_mask) allowed.push_back(mode == ReadoutMode::kPlain || m);
    const Matrix q_ref = reference_readout(x_ref, allowed, p.readout, c.readout_steps);
    const Matrix logits_ref = q_ref * p.output_map.value().transpose() * p.embedding.value().transpose();

    Tape tape;
    const Tensor x = encode(tape, view, p, c);
    CHECK(x.value().isApprox(x_ref, 1e-12));
    const Tensor q = readout(tape, x, view.graph_of_node, 1, view.core_mask, p.readout, c.readout_steps, mode);
    CHECK(q.value().isApprox(q_ref, 1e-12));
    CHECK(forward_logits(tape, view, p, c).value().isApprox(logits_ref, 1e-12));
  }
}

TEST_CASE("log1p edge weights enter the attention logit transformed") {
  Fixture fx(4);
  const BcsGraph g = sample_bcs(fx.global, fx.sessions[1], 1, 3, 2);
  const GraphBatchView raw = GraphBatchView::from_graph(g, EdgeWeightTransform::kRaw);
  const GraphBatchView logw = GraphBatchView::from_graph(g, EdgeWeightTransform::kLog1p);
  for (std::size_t e = 0; e < raw.num_edges(); ++e) {
    CHECK(logw.edge_weight[e] == doctest::Approx(std::log1p(raw.edge_weight[e])));
  }
}

TEST_CASE("attention coefficients of every head sum to one per target node") {
  Fixture fx(6);
  const ModelConfig c = tiny_config();
  const ModelParams p = init_params(c, 10, 1.0, 3);
  std::vector<BcsGraph> graphs;
  for (int s = 0; s < 4; ++s) graphs.push_back(sample_bcs(fx.global, fx.sessions[s], 2, 2, s));
  const GraphBatchView view = GraphBatchView::from_graphs(graphs);
  std::vector<LayerTrace> trace;
  Tape tape;
  encode(tape, view, p, c, &trace);
  REQUIRE(trace.size() == 3);
  for (const LayerTrace& layer : trace) {
    REQUIRE(layer.attention.size() == 2);
    for (const Matrix& alpha : layer.attention) {
      std::vector<double> sums(view.num_nodes(), 0.0);
      for (std::size_t e = 0; e < view.num_edges(); ++e) {
        CHECK(alpha(static_cast<Index>(e), 0) >= 0.0);
        sums[view.edge_dst[e]] += alpha(static_cast<Index>(e), 0);
      }
      for (double s : sums) CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("mask readout ignores non-core features exactly; plain readout does not") {
  std::mt19937_64 rng(12);
  const ModelConfig c = tiny_config();
  const ModelParams p = init_params(c, 10, 0.5, 1);
  const Matrix x = fgnn::test::random_matrix(6, c.dim, rng);
  Matrix perturbed = x;
  perturbed.bottomRows(4) = fgnn::test::random_matrix(4, c.dim, rng, 5.0);
  const std::vector<int> graph(6, 0);
  const std::vector<std::uint8_t> core{1, 1, 0, 0, 0, 0};
  const auto run = [&](const Matrix& features, ReadoutMode mode) {
    Tape tape;
    return readout(tape, Tensor::constant(features), graph, 1, core, p.readout, c.readout_steps, mode).value();
  };
  CHECK(run(x, ReadoutMode::kMask) == run(perturbed, ReadoutMode::kMask));
  CHECK((run(x, ReadoutMode::kPlain) - run(perturbed, ReadoutMode::kPlain)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("batched scoring equals scoring each graph alone") {
  Fixture fx(30);
  const ModelConfig c = tiny_config();
  const ModelParams p = init_params(c, 10, 0.5, 9);
  std::vector<BcsGraph> graphs;
  for (int s = 0; s < 5; ++s) graphs.push_back(sample_bcs(fx.global, fx.sessions[s], 1, 3, s));
  Tape tape;
  const Matrix batched = forward_logits(tape, GraphBatchView::from_graphs(graphs), p, c).value();
  for (int s = 0; s < 5; ++s) {
    const Matrix alone = forward_logits(tape, GraphBatchView::from_graph(graphs[s]), p, c).value();
    CHECK(batched.row(s).isApprox(alone.row(0), 1e-12));
  }
  const Matrix probs = forward(tape, GraphBatchView::from_graphs(graphs), p, c).value();
  for (Index r = 0; r < probs.rows(); ++r) CHECK(probs.row(r).sum() == doctest::Approx(1.0));
}

TEST_CASE("end-to-end gradients match central differences") {
  Fixture fx(41, 8);
  ModelConfig c;
  c.dim = 4;
  c.heads = 2;
  c.layers = 2;
  c.readout_steps = 2;
  const ModelParams p = init_params(c, 8, 0.5, 2);
  std::vector<BcsGraph> graphs{sample_bcs(fx.global, fx.sessions[0], 1, 2, 1),
                               sample_bcs(fx.global, fx.sessions[1], 1, 2, 2)};
  const GraphBatchView view = GraphBatchView::from_graphs(graphs);
  const std::vector<int> labels{3, 5};
  std::vector<Tensor> leaves;
  for (const auto& [n, t] : p.named()) leaves.push_back(t);
  const auto r = grad_check([&](Tape& t) { return loss(t, forward_logits(t, view, p, c), labels); }, leaves);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("structural and vocabulary errors") {
  const ModelConfig c = tiny_config();
  const ModelParams p = ModelParams::zeros(c, 4);
  GraphBatchView view;
  view.items = {0, 1};
  view.graph_of_node = {0, 0};
  view.core_mask = {1, 1};
  view.edge_src = {0};
  view.edge_dst = {0};
  view.edge_weight = {1.0};
  view.num_graphs = 1;
  Tape tape;
  CHECK_THROWS_AS(encode(tape, view, p, c), StructuralError);
  const std::vector<ItemIndex> bad{4};
  CHECK_THROWS_AS(embed(tape, bad, p), VocabError);
}
