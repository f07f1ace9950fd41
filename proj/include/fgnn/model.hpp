#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fgnn/graphs.hpp"
#include "fgnn/gru.hpp"
#include "fgnn/tensor.hpp"

namespace fgnn {

enum class ReadoutMode { kPlain, kMask };

// How WGAT heads are combined: concatenation on inner layers and the head
// mean on the last one, or the head mean on every layer.
enum class HeadCombine { kConcatThenMean, kMeanEveryLayer };

// Transform applied to the integer edge weight before it enters the
// attention logit.
enum class EdgeWeightTransform { kRaw, kLog1p };

struct ModelConfig {
  int dim = 100;
  int layers = 3;
  int heads = 8;
  int readout_steps = 3;
  double leaky_slope = 0.2;
  ReadoutMode readout_mode = ReadoutMode::kMask;
  HeadCombine head_combine = HeadCombine::kConcatThenMean;
  EdgeWeightTransform edge_weight = EdgeWeightTransform::kRaw;

  void validate() const;
  /// Whether `layer` (0-based) averages its heads.
  bool averages_heads(int layer) const;
  /// Output width of each head of `layer`. Concatenating layers split `dim`
  /// as evenly as possible; averaging layers give every head width `dim`.
  std::vector<int> head_widths(int layer) const;
};

struct HeadParams {
  Tensor node_map;   // d' x d_in
  Tensor attention;  // 1 x (2 d' + 1): [target | neighbor | edge weight]
};

struct LayerParams {
  std::vector<HeadParams> heads;
};

struct ModelParams {
  Tensor embedding;  // m x d, shared by the encoder input and the scorer
  std::vector<LayerParams> layers;
  GruParams readout;  // input 2d, hidden d
  Tensor output_map;  // d x 2d

  /// Zero-valued parameters shaped for `config` and `num_items`.
  static ModelParams zeros(const ModelConfig& config, std::size_t num_items);

  std::size_t num_items() const { return static_cast<std::size_t>(embedding.rows()); }
  /// Stable names, e.g. "layer1.head0.node_map", in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const;
  void zero_grad() const;
};

/// Disjoint union of one or more graphs in the layout the encoder consumes:
/// in-edges grouped by target node.
struct GraphBatchView {
  std::vector<ItemIndex> items;          // per node
  std::vector<int> graph_of_node;        // per node
  std::vector<std::uint8_t> core_mask;   // per node
  std::vector<int> edge_src;             // neighbor j
  std::vector<int> edge_dst;             // target i
  std::vector<double> edge_weight;       // transformed w_ij
  int num_graphs = 0;

  std::size_t num_nodes() const { return items.size(); }
  std::size_t num_edges() const { return edge_src.size(); }

  static GraphBatchView from_graphs(std::span<const BcsGraph> graphs,
                                    EdgeWeightTransform transform = EdgeWeightTransform::kRaw);
  static GraphBatchView from_graph(const BcsGraph& graph,
                                   EdgeWeightTransform transform = EdgeWeightTransform::kRaw);
  /// Throws StructuralError if some node has no in-edge.
  void validate() const;
};

/// Per-head attention coefficients of one layer, one entry per edge of the
/// view, in edge order.
struct LayerTrace {
  std::vector<Matrix> attention;
};

Tensor embed(Tape& tape, std::span<const ItemIndex> nodes, const ModelParams& params);

/// One weighted graph attention layer. For each head and each edge j -> i:
///   e_ij = LeakyReLU(a . [W x_i | W x_j | w_ij]),
///   alpha_ij = softmax of e_ij over the in-neighbors of i,
/// and the head aggregates sum_j alpha_ij W x_j. Inner layers apply ReLU per
/// head and concatenate; an averaging layer takes the head mean, then ReLU.
Tensor wgat_layer(Tape& tape, const GraphBatchView& view, const Tensor& x,
                  const LayerParams& layer, bool average_heads, double leaky_slope,
                  LayerTrace* trace = nullptr);

/// Embedding followed by every WGAT layer.
Tensor encode(Tape& tape, const GraphBatchView& view, const ModelParams& params,
              const ModelConfig& config, std::vector<LayerTrace>* trace = nullptr);

/// Recurrent attention pooling per graph. Starting from q*_0 = 0 and a zero
/// GRU state, each step computes q_t = GRU(q*_{t-1}), attends over the
/// graph's nodes with logits x_i . q_t (core nodes only in mask mode), reads
/// r_t = sum_i a_i x_i and sets q*_t = [q_t | r_t]. Returns q*_T, one row of
/// width 2d per graph.
Tensor readout(Tape& tape, const Tensor& x, std::span<const int> graph_of_node, int num_graphs,
               std::span<const std::uint8_t> core_mask, const GruParams& gru, int steps,
               ReadoutMode mode);

/// Logits (W_out q*)^T X^0 over the whole vocabulary, one row per graph.
Tensor score(Tape& tape, const Tensor& q_star, const ModelParams& params);

/// Summed cross entropy of softmax(logits) against `labels`.
Tensor loss(Tape& tape, const Tensor& logits, std::span<const int> labels);

Tensor forward_logits(Tape& tape, const GraphBatchView& view, const ModelParams& params,
                      const ModelConfig& config);

/// Next-item probabilities, one row per graph in the view.
Tensor forward(Tape& tape, const GraphBatchView& view, const ModelParams& params,
               const ModelConfig& config);

}  // namespace fgnn
